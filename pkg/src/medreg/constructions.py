"""Interval <-> estimator constructions.

Each construction is exposed twice: a scalar helper working on one sample
(returns an :class:`Interval` or a float) and a vectorised procedure /
estimator class that the harness evaluates on ``(reps, n)`` sample blocks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    DomainError,
    InsufficientDataError,
    Interval,
    IntervalProcedure,
    Level,
    RandomizedEstimator,
    SlackSequence,
    level_value,
)
from .fmt import fmt_param

_EXACT_POWER_LIMIT = 64


# ---------------------------------------------------------------- batch counts


def _batch_condition(B: int, lo: float, hi: float, alpha: float) -> bool:
    if B <= _EXACT_POWER_LIMIT:
        return lo**B + hi**B <= alpha
    # log-sum-exp form; hi >= lo >= 0 and hi > 0
    log_sum = B * math.log(hi) + (math.log1p((lo / hi) ** B) if lo > 0 else 0.0)
    return log_sum <= math.log(alpha)


def batch_count(alpha: "float | Level", delta: "float | Level" = 0.0) -> int:
    """Smallest B >= 1 with ``(1/2 - delta)**B + (1/2 + delta)**B <= alpha``."""
    alpha = level_value(alpha, "alpha")
    delta = level_value(delta, "delta")
    if alpha <= 0.0:
        raise DomainError("alpha = 0 admits no finite batch count")
    lo, hi = 0.5 - delta, 0.5 + delta
    B = 1
    while not _batch_condition(B, lo, hi, alpha):
        B += 1
    return B


def batch_count_bounds(alpha: "float | Level", delta: "float | Level" = 0.0) -> tuple[int, int]:
    """Closed-form bracket ``(floor(log2(2/a)), ceil(log(2/a) / log(2/(1+2d))))``."""
    alpha = level_value(alpha, "alpha")
    delta = level_value(delta, "delta")
    if alpha <= 0.0:
        raise DomainError("alpha = 0 admits no finite batch count")
    numerator = math.log2(2.0 / alpha)
    lower = math.floor(numerator)
    upper = math.ceil(numerator / math.log2(2.0 / (1.0 + 2.0 * delta)))
    return lower, upper


def union_batch_count(alpha: "float | Level", gamma: "float | Level") -> int:
    """``ceil(log_gamma(alpha))``, or 1 when ``alpha >= gamma``."""
    alpha = level_value(alpha, "alpha")
    gamma = level_value(gamma, "gamma")
    if not 0.0 < alpha < 1.0 or not 0.0 < gamma < 1.0:
        raise DomainError(f"need 0 < alpha, gamma < 1, got alpha={alpha}, gamma={gamma}")
    if alpha >= gamma:
        return 1
    ratio = math.log(alpha) / math.log(gamma)
    # absorb rounding in ratios that are integers in exact arithmetic
    return max(1, math.ceil(ratio - 1e-9))


# ------------------------------------------------------------------ batching


@dataclass(frozen=True)
class BatchPlan:
    B: int
    sizes: tuple[int, ...]

    def __post_init__(self):
        if self.B < 1 or len(self.sizes) != self.B:
            raise DomainError("batch plan needs B >= 1 sizes")
        if min(self.sizes) < 1 or max(self.sizes) - min(self.sizes) > 1:
            raise DomainError(f"unbalanced batch sizes {self.sizes}")

    @property
    def n(self) -> int:
        return sum(self.sizes)

    @property
    def ranges(self) -> list[tuple[int, int]]:
        out, start = [], 0
        for size in self.sizes:
            out.append((start, start + size))
            start += size
        return out


def make_batch_plan(n: int, B: int) -> BatchPlan:
    """Contiguous batches; the first ``n % B`` batches take one extra point."""
    if B < 1:
        raise DomainError(f"batch count must be >= 1, got {B}")
    if n < B:
        raise InsufficientDataError(f"cannot split n={n} points into {B} batches", B)
    small, extra = divmod(n, B)
    return BatchPlan(B, tuple(small + 1 if j < extra else small for j in range(B)))


def hull(values: Sequence[float]) -> Interval:
    if len(values) == 0:
        raise DomainError("hull of an empty collection")
    return Interval(min(values), max(values))


# ------------------------------------------------------------- exact endpoint
# Probabilities of the endpoint events at a threshold t, used to propagate
# closed-form oracles through hull constructions built from independent batches.


class EndpointProbs(NamedTuple):
    lo_ge: float
    lo_le: float
    hi_ge: float
    hi_le: float

    @property
    def miscoverage(self) -> float:
        # P(lo > t) + P(hi < t); the two events are disjoint
        return min(1.0, max(0.0, (1.0 - self.lo_le) + (1.0 - self.hi_ge)))


def hull_endpoint_probs(parts: Sequence[EndpointProbs]) -> EndpointProbs:
    """Endpoint probabilities of the hull of independent intervals."""
    lo_ge = math.prod(p.lo_ge for p in parts)
    hi_le = math.prod(p.hi_le for p in parts)
    lo_le = 1.0 - math.prod(1.0 - p.lo_le for p in parts)
    hi_ge = 1.0 - math.prod(1.0 - p.hi_ge for p in parts)
    return EndpointProbs(lo_ge, lo_le, hi_ge, hi_le)


def point_endpoint_probs(est: RandomizedEstimator, model, n: int, t: float) -> EndpointProbs | None:
    tails = est.exact_tail_probs(model, n, t)
    if tails is None:
        return None
    ge, le = tails
    return EndpointProbs(ge, le, ge, le)


# ------------------------------------------------------------------- HulC


def _hull_of_batches(evaluate_batch, samples: np.ndarray, B: int, rng: np.random.Generator,
                     shuffle: bool = False) -> tuple[np.ndarray, np.ndarray]:
    m, n = samples.shape
    plan = make_batch_plan(n, B)
    if shuffle:
        samples = rng.permuted(samples, axis=1)
    lo = np.full(m, np.inf)
    hi = np.full(m, -np.inf)
    for (a, b), child in zip(plan.ranges, rng.spawn(B)):
        batch_lo, batch_hi = evaluate_batch(samples[:, a:b], child)
        np.minimum(lo, batch_lo, out=lo)
        np.maximum(hi, batch_hi, out=hi)
    return lo, hi


class HulC(IntervalProcedure):
    """Hull of ``B = batch_count(alpha, delta)`` batch estimates.

    Valid at level alpha whenever each batch estimate has median bias at
    most ``delta``; the miscoverage is then at most
    ``(1/2 - delta)**B + (1/2 + delta)**B``.
    """

    name = "hulc"

    def __init__(self, estimator: RandomizedEstimator, delta: float = 0.0, shuffle: bool = False):
        self.estimator = estimator
        self.delta = level_value(delta, "delta")
        self.shuffle = shuffle

    @property
    def spec(self) -> str:
        return f"{self.estimator.spec} > hulc:delta={fmt_param(self.delta)}"

    @property
    def known_slack(self):
        bias = getattr(self.estimator, "known_bias", None)
        return 0.0 if bias is not None and bias <= self.delta else None

    def batches(self, alpha: float) -> int:
        return batch_count(alpha, self.delta)

    def min_n(self, alpha: float) -> int:
        return self.batches(alpha) * self.estimator.min_n()

    def evaluate(self, samples, alpha, rng):
        B = self.batches(alpha)
        need = B * self.estimator.min_n()
        if samples.shape[1] < need:
            raise InsufficientDataError(
                f"{self.spec} at alpha={alpha} needs n >= {need}, got {samples.shape[1]}", need
            )

        def one(batch, child):
            v = self.estimator.evaluate(batch, child)
            return v, v

        return _hull_of_batches(one, samples, B, rng, self.shuffle)

    def endpoint_probs(self, model, n, alpha, t) -> EndpointProbs | None:
        plan = make_batch_plan(n, self.batches(alpha))
        parts = []
        for size in plan.sizes:
            part = point_endpoint_probs(self.estimator, model, size, t)
            if part is None:
                return None
            parts.append(part)
        return hull_endpoint_probs(parts)

    def miscoverage_bound(self, alpha: float) -> float:
        B = self.batches(alpha)
        return (0.5 - self.delta) ** B + (0.5 + self.delta) ** B


def hulc_interval(est: RandomizedEstimator, sample: Sequence[float], alpha: "float | Level",
                  delta: "float | Level" = 0.0, rng: np.random.Generator | None = None,
                  shuffle: bool = False) -> Interval:
    return HulC(est, level_value(delta, "delta"), shuffle)(sample, alpha, rng)


# --------------------------------------------------------- CI -> estimator


def randomized_endpoint(lo: np.ndarray, hi: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    coin = rng.integers(0, 2, size=np.shape(lo), dtype=np.int8)
    return np.where(coin == 0, lo, hi)


def ci_to_estimator(ci: Interval, rng: np.random.Generator) -> float:
    """Either endpoint of ``ci`` with probability 1/2."""
    return float(randomized_endpoint(np.array([ci.lo]), np.array([ci.hi]), rng)[0])


class CIEstimator(RandomizedEstimator):
    """Randomised endpoint of a fixed-level interval; median bias at most (gamma + r)/2."""

    name = "ci_estimator"

    def __init__(self, procedure: IntervalProcedure, gamma: float):
        self.procedure = procedure
        self.gamma = level_value(gamma, "gamma")

    @property
    def spec(self) -> str:
        return f"{self.procedure.spec}@{fmt_param(self.gamma)} > ci_estimator"

    @property
    def known_bias(self):
        r = self.procedure.known_slack
        return None if r is None else (self.gamma + r) / 2.0

    def min_n(self) -> int:
        return self.procedure.min_n(self.gamma)

    def evaluate(self, samples, rng):
        lo, hi = self.procedure.evaluate(samples, self.gamma, rng)
        return randomized_endpoint(lo, hi, rng)

    def exact_tail_probs(self, model, n, t):
        probs = endpoint_probs(self.procedure, model, n, self.gamma, t)
        if probs is None:
            return None
        return 0.5 * (probs.lo_ge + probs.hi_ge), 0.5 * (probs.lo_le + probs.hi_le)


def endpoint_probs(procedure: IntervalProcedure, model, n: int, alpha: float, t: float):
    return procedure.endpoint_probs(model, n, alpha, t)


# ------------------------------------------------------------ level boosting


class BoostedProcedure(HulC):
    """Any-level interval from a fixed-level one.

    Each batch runs ``base`` at level gamma and keeps a random endpoint; the
    batch estimates are hulled with ``B = batch_count(alpha, gamma / 2)``.
    """

    name = "boost_level"

    def __init__(self, base: IntervalProcedure, gamma: float, shuffle: bool = False):
        self.base = base
        self.gamma = level_value(gamma, "gamma")
        if not 0.0 < self.gamma < 1.0:
            raise DomainError(f"boosting needs 0 < gamma < 1, got {self.gamma}")
        super().__init__(CIEstimator(base, self.gamma), delta=self.gamma / 2.0, shuffle=shuffle)

    @property
    def spec(self) -> str:
        return f"{self.base.spec}@{fmt_param(self.gamma)} > boost_level"

    @property
    def known_slack(self):
        return 0.0 if self.base.known_slack == 0.0 else None


def boost_level(base: IntervalProcedure, gamma: "float | Level") -> BoostedProcedure:
    return BoostedProcedure(base, level_value(gamma, "gamma"))


def boost_miscoverage_bound(alpha: float, gamma: float, n: int, slack: SlackSequence | None = None) -> float:
    """``alpha * (1 + 2 r_{floor(n/B)})**B`` with ``B = batch_count(alpha, gamma/2)``."""
    B = batch_count(alpha, gamma / 2.0)
    r = 0.0 if slack is None else slack[max(n // B, 1)]
    return alpha * (1.0 + 2.0 * r) ** B


def hulc_miscoverage_bound(alpha: float, delta: float, n: int, slack: SlackSequence | None = None) -> float:
    """Median bias <= delta + s_n gives ``alpha * (1 + 2 s_{floor(n/B)})**B``, ``B = B_{alpha,delta}``."""
    B = batch_count(alpha, delta)
    s = 0.0 if slack is None else slack[max(n // B, 1)]
    return alpha * (1.0 + 2.0 * s) ** B


def uniform_excess_bound(alpha: float, gamma: float, n: int, slack: SlackSequence) -> float:
    """``exp(2 B r_{floor(n/B)}) - 1`` bound on the excess miscoverage of the boosted family."""
    B = batch_count(alpha, gamma / 2.0)
    return math.expm1(2.0 * B * slack[max(n // B, 1)])


def oracle_alpha_n(n: int, delta: float, slack: SlackSequence) -> float:
    """Smallest level at which the boosted family is certified, given the true slack.

    Oracle mode only: ``slack`` has to be supplied by a harness that knows it.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    B = batch_count(1.0 / n, delta)
    r_star = slack.envelope(max(n // B, 1))
    tail = 0.0 if r_star == 0.0 else 2.0 * math.exp(-(r_star ** -0.5))
    return max(1.0 / n, tail)


# ---------------------------------------------------------- union of batches


class UnionProcedure(IntervalProcedure):
    """Hull of independent level-gamma intervals on ``ceil(log_gamma alpha)`` batches."""

    name = "union"

    def __init__(self, base: IntervalProcedure, gamma: float):
        self.base = base
        self.gamma = level_value(gamma, "gamma")

    @property
    def spec(self) -> str:
        return f"{self.base.spec}@{fmt_param(self.gamma)} > union"

    @property
    def known_slack(self):
        return 0.0 if self.base.known_slack == 0.0 else None

    def batches(self, alpha: float) -> int:
        return union_batch_count(alpha, self.gamma)

    def min_n(self, alpha: float) -> int:
        return self.batches(alpha) * self.base.min_n(self.gamma)

    def evaluate(self, samples, alpha, rng):
        B = self.batches(alpha)
        need = self.min_n(alpha)
        if samples.shape[1] < need:
            raise InsufficientDataError(
                f"{self.spec} at alpha={alpha} needs n >= {need}, got {samples.shape[1]}", need
            )
        return _hull_of_batches(
            lambda batch, child: self.base.evaluate(batch, self.gamma, child), samples, B, rng
        )

    def endpoint_probs(self, model, n, alpha, t):
        plan = make_batch_plan(n, self.batches(alpha))
        parts = []
        for size in plan.sizes:
            part = endpoint_probs(self.base, model, size, self.gamma, t)
            if part is None:
                return None
            parts.append(part)
        return hull_endpoint_probs(parts)


def union_batch_interval(base: IntervalProcedure, sample: Sequence[float], alpha: "float | Level",
                         gamma: "float | Level", rng: np.random.Generator | None = None) -> Interval:
    return UnionProcedure(base, level_value(gamma, "gamma"))(sample, alpha, rng)


def union_miscoverage_bound(alpha: float, gamma: float, n: int, slack: SlackSequence | None = None) -> float:
    B = union_batch_count(alpha, gamma)
    r = 0.0 if slack is None else slack[max(n // B, 1)]
    if B == 1:
        return gamma + r
    return alpha * (1.0 + r / gamma) ** B


# ------------------------------------------------------------ monotonization


def level_grid(alpha: float, size: int = 64) -> np.ndarray:
    """Geometric grid of ``size`` levels from alpha up to 1."""
    alpha = level_value(alpha, "alpha")
    if alpha <= 0.0:
        raise DomainError("level grid needs alpha > 0")
    if alpha == 1.0 or size == 1:
        return np.array([alpha])
    grid = np.geomspace(alpha, 1.0, size)
    grid[0], grid[-1] = alpha, 1.0
    return grid


def _level_streams(rng: np.random.Generator, levels: Sequence[float]) -> list[np.random.Generator]:
    """One child stream per level value rather than per grid position.

    Queries at two levels then share the randomness of every level their
    grids have in common, which makes fixed-grid outputs nest exactly.
    """
    root = int(rng.integers(0, 2**63))
    out = []
    for k in levels:
        bits = int(np.float64(k).view(np.uint64))
        ss = np.random.SeedSequence(root, spawn_key=(bits & 0xFFFFFFFF, bits >> 32))
        out.append(np.random.Generator(np.random.PCG64(ss)))
    return out


class MonotoneFamily(IntervalProcedure):
    """Hull of ``family`` over all grid levels >= alpha, so lower levels nest higher ones.

    With ``levels`` given the grid is fixed; otherwise a geometric grid of
    ``grid_size`` levels from alpha to 1 is built per query.
    """

    name = "monotone"

    def __init__(self, family: IntervalProcedure, grid_size: int = 64, levels: Sequence[float] | None = None):
        self.family = family
        self.grid_size = int(grid_size)
        self.levels = None if levels is None else tuple(sorted(float(x) for x in levels))

    @property
    def spec(self) -> str:
        if self.levels is not None:
            return f"{self.family.spec} > monotone:levels={'/'.join(fmt_param(x) for x in self.levels)}"
        return f"{self.family.spec} > monotone:grid={self.grid_size}"

    @property
    def known_slack(self):
        return self.family.known_slack

    def grid(self, alpha: float) -> list[float]:
        if self.levels is not None:
            out = [k for k in self.levels if k >= alpha]
        else:
            out = list(level_grid(alpha, self.grid_size))
        if not out:
            raise DomainError(f"no grid level at or above alpha={alpha}")
        return out

    def min_n(self, alpha: float) -> int:
        return max(self.family.min_n(k) for k in self.grid(alpha))

    def evaluate(self, samples, alpha, rng):
        grid = self.grid(alpha)
        m = samples.shape[0]
        lo = np.full(m, np.inf)
        hi = np.full(m, -np.inf)
        for kappa, child in zip(grid, _level_streams(rng, grid)):
            k_lo, k_hi = self.family.evaluate(samples, kappa, child)
            np.minimum(lo, k_lo, out=lo)
            np.maximum(hi, k_hi, out=hi)
        return lo, hi


def monotonize_family(family: IntervalProcedure, sample: Sequence[float], alpha: "float | Level",
                      rng: np.random.Generator | None = None, grid: Sequence[float] | None = None,
                      grid_size: int = 64) -> Interval:
    return MonotoneFamily(family, grid_size, grid)(sample, alpha, rng)


class ExtractedEstimator(RandomizedEstimator):
    """Random endpoint of the monotonised family at level ``n**-1/2``.

    ``min_level`` is the smallest level the family is trusted at; when
    ``n**-1/2`` falls below it the floor is used instead, with a warning.
    """

    name = "extract"

    def __init__(self, family: IntervalProcedure, min_level: float | None = None, grid_size: int = 64):
        self.family = family
        self.min_level = None if min_level is None else level_value(min_level)
        self.grid_size = int(grid_size)
        self._monotone = MonotoneFamily(family, grid_size)
        self._min_n = None

    @property
    def spec(self) -> str:
        parts = [f"grid={self.grid_size}"]
        if self.min_level is not None:
            parts.insert(0, f"min_level={fmt_param(self.min_level)}")
        return f"{self.family.spec} > extract:{','.join(parts)}"

    def level(self, n: int, warn: bool = False) -> float:
        target = n ** -0.5
        if self.min_level is not None and target < self.min_level:
            if warn:
                warnings.warn(
                    f"n**-1/2 = {target:.4g} is below the smallest trusted level "
                    f"{self.min_level:.4g}; extracting at {self.min_level:.4g}",
                    stacklevel=3,
                )
            return self.min_level
        return target

    def bias_bound(self, n: int) -> float:
        """Median-bias guarantee for an exactly valid family."""
        return self.level(n) / 2.0

    @property
    def known_bias(self):
        return None

    def min_n(self) -> int:
        # smallest n whose own extraction level the family can serve
        if self._min_n is None:
            n = 1
            while self._monotone.min_n(self.level(n)) > n:
                n += 1
                if n > 1 << 20:
                    raise DomainError(f"{self.spec} cannot be evaluated at any reasonable sample size")
            self._min_n = n
        return self._min_n

    def evaluate(self, samples, rng):
        lo, hi = self._monotone.evaluate(samples, self.level(samples.shape[1], warn=True), rng)
        return randomized_endpoint(lo, hi, rng)


def extract_median_regular_estimator(family: IntervalProcedure, sample: Sequence[float],
                                     rng: np.random.Generator | None = None,
                                     min_level: float | None = None, grid_size: int = 64) -> float:
    return ExtractedEstimator(family, min_level, grid_size)(sample, rng)
