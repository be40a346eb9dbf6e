"""Domain types and the median-bias functional.

Extended reals are plain Python/numpy floats restricted to non-NaN values,
so ``-inf`` and ``+inf`` order correctly against finite numbers and equal
infinities compare equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np
from scipy import stats

from . import mc

if TYPE_CHECKING:
    from .models import DataModel

NEG_INF = -math.inf
POS_INF = math.inf

LEVEL_ROLES = ("alpha", "gamma", "delta")


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class InsufficientDataError(ValueError):
    """The sample is too small for the requested batch plan."""

    def __init__(self, message: str, minimal_n: int):
        super().__init__(message)
        self.minimal_n = minimal_n


def ext_real(x: float) -> float:
    value = float(x)
    if math.isnan(value):
        raise DomainError("extended reals exclude NaN")
    return value


@dataclass(frozen=True)
class Interval:
    """Closed interval with extended-real endpoints."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = ext_real(self.lo), ext_real(self.hi)
        if lo > hi:
            raise DomainError(f"interval endpoints out of order: [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def trivial(self) -> bool:
        return not (math.isfinite(self.lo) or math.isfinite(self.hi))

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def covers(self, theta: float) -> bool:
        return self.lo <= theta <= self.hi

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))


@dataclass(frozen=True)
class Level:
    """A miscoverage (alpha/gamma) or median-bias (delta) level."""

    value: float
    role: str = "alpha"

    def __post_init__(self):
        if self.role not in LEVEL_ROLES:
            raise DomainError(f"unknown level role {self.role!r}")
        v = float(self.value)
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"{self.role} must lie in [0, 1], got {v}")
        if self.role == "delta" and not v < 0.5:
            raise DomainError(f"delta must lie in [0, 1/2), got {v}")
        object.__setattr__(self, "value", v)

    def __float__(self) -> float:
        return self.value


def level_value(x: "float | Level", role: str = "alpha") -> float:
    if isinstance(x, Level):
        return Level(x.value, role).value
    return Level(x, role).value


@dataclass(frozen=True)
class SlackSequence:
    """Excess miscoverage / median bias r_n indexed by sample size.

    Sizes not present in ``values`` are read through the monotone envelope
    ``r*_k = sup_{m >= k} r_m``, with ``tail`` standing in for every size
    beyond the largest supplied key. That makes lookups conservative.
    """

    values: Mapping[int, float] = field(default_factory=dict)
    tail: float = 0.0

    def __post_init__(self):
        items = sorted((int(k), float(v)) for k, v in dict(self.values).items())
        for k, v in items:
            if k < 1:
                raise DomainError(f"slack index must be >= 1, got {k}")
            if not 0.0 <= v < 1.0:
                raise DomainError(f"slack values must lie in [0, 1), got r_{k} = {v}")
        if not 0.0 <= self.tail < 1.0:
            raise DomainError(f"tail slack must lie in [0, 1), got {self.tail}")
        object.__setattr__(self, "values", dict(items))
        # suffix maxima, read right to left
        env: dict[int, float] = {}
        running = float(self.tail)
        for k, v in reversed(items):
            running = max(running, v)
            env[k] = running
        object.__setattr__(self, "_keys", [k for k, _ in items])
        object.__setattr__(self, "_env", env)

    @classmethod
    def constant(cls, r: float) -> "SlackSequence":
        return cls({}, tail=r)

    def envelope(self, k: int) -> float:
        for key in self._keys:
            if key >= k:
                return self._env[key]
        return float(self.tail)

    def __getitem__(self, k: int) -> float:
        if k in self.values:
            return self.values[k]
        return self.envelope(k)


class RandomizedEstimator:
    """An estimator mapping a sample and a random stream to an extended real.

    Subclasses implement :meth:`evaluate` on a ``(reps, n)`` matrix of
    independent samples, returning one estimate per row.
    """

    name = "estimator"

    @property
    def spec(self) -> str:
        return self.name

    def min_n(self) -> int:
        return 1

    def evaluate(self, samples: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def exact_tail_probs(self, model: "DataModel", n: int, t: float) -> tuple[float, float] | None:
        """``(P(est >= t), P(est <= t))`` under ``model`` when a closed form is known."""
        return None

    def exact_probs(self, model: "DataModel", n: int) -> tuple[float, float] | None:
        return self.exact_tail_probs(model, n, model.theta)

    def __call__(self, sample: Sequence[float], rng: np.random.Generator | None = None) -> float:
        arr = np.asarray(sample, dtype=float)[None, :]
        rng = np.random.default_rng() if rng is None else rng
        return float(self.evaluate(arr, rng)[0])

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.spec}>"


class IntervalProcedure:
    """A family of confidence intervals indexed by the miscoverage level."""

    name = "procedure"
    # Excess miscoverage r on its intended models; 0 means exact validity.
    known_slack: float | None = None

    @property
    def spec(self) -> str:
        return self.name

    def min_n(self, alpha: float) -> int:
        return 1

    def evaluate(
        self, samples: np.ndarray, alpha: float, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def endpoint_probs(self, model: "DataModel", n: int, alpha: float, t: float):
        """Closed-form ``EndpointProbs`` of the interval at threshold t, if known."""
        return None

    def exact_miscoverage(self, model: "DataModel", n: int, alpha: float) -> float | None:
        probs = self.endpoint_probs(model, n, alpha, model.theta)
        return None if probs is None else probs.miscoverage

    def __call__(
        self, sample: Sequence[float], alpha: "float | Level", rng: np.random.Generator | None = None
    ) -> Interval:
        arr = np.asarray(sample, dtype=float)[None, :]
        rng = np.random.default_rng() if rng is None else rng
        lo, hi = self.evaluate(arr, level_value(alpha), rng)
        return Interval(lo[0], hi[0])

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.spec}>"


@dataclass(frozen=True)
class MedianBiasEstimate:
    point: float
    lower: float
    upper: float
    reps: int
    exact: bool = False
    confidence: float = 0.999
    model: str = ""
    estimator: str = ""
    n: int = 0
    seed: int = 0
    p_ge: float = math.nan
    p_le: float = math.nan

    def __post_init__(self):
        if not 0.0 <= self.lower <= self.point <= self.upper <= 0.5:
            raise DomainError(
                f"inconsistent median-bias bounds {self.lower} <= {self.point} <= {self.upper}"
            )
        if self.exact and not self.lower == self.point == self.upper:
            raise DomainError("exact estimates carry degenerate bounds")

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_record(self) -> dict:
        return {
            "model": self.model,
            "estimator": self.estimator,
            "n": self.n,
            "reps": self.reps,
            "seed": self.seed,
            "point": self.point,
            "lower": self.lower,
            "upper": self.upper,
            "exact": self.exact,
        }


def _check_prob(name: str, p) -> None:
    if not 0 <= p <= 1:
        raise DomainError(f"{name} must be a probability in [0, 1], got {p}")


def median_bias_from_probs(p_ge, p_le):
    """``(1/2 - min(p_ge, p_le))_+``.

    Works in exact arithmetic when either argument is a ``Fraction``.
    """
    _check_prob("p_ge", p_ge)
    _check_prob("p_le", p_le)
    if isinstance(p_ge, Fraction) or isinstance(p_le, Fraction):
        value = Fraction(1, 2) - min(Fraction(p_ge), Fraction(p_le))
        return max(value, Fraction(0))
    value = 0.5 - min(float(p_ge), float(p_le))
    return min(max(value, 0.0), 0.5)


def clopper_pearson(k: int, reps: int, confidence: float = 0.999) -> tuple[float, float]:
    """Exact two-sided binomial interval for a success probability."""
    if not 0 <= k <= reps or reps < 1:
        raise DomainError(f"need 0 <= k <= reps and reps >= 1, got k={k}, reps={reps}")
    tail = (1.0 - confidence) / 2.0
    lo = 0.0 if k == 0 else float(stats.beta.ppf(tail, k, reps - k + 1))
    hi = 1.0 if k == reps else float(stats.beta.ppf(1.0 - tail, k + 1, reps - k))
    return lo, hi


def binomial_sigma(p: float, reps: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / reps)


def median_bias_bounds(k_ge: int, k_le: int, reps: int, confidence: float = 0.999):
    """Point value and simultaneous bounds for the bias from two event counts.

    Each frequency gets a two-sided exact interval at ``1 - (1 - c)/2`` so the
    pair holds jointly with probability at least ``c``; the bias map is
    nonincreasing in both arguments, so the corners give the bias bounds.
    """
    per = 1.0 - (1.0 - confidence) / 2.0
    ge_lo, ge_hi = clopper_pearson(k_ge, reps, per)
    le_lo, le_hi = clopper_pearson(k_le, reps, per)
    # (reps/2 - k)/reps rounds once, unlike 0.5 - k/reps
    point = max(reps - 2 * min(k_ge, k_le), 0) / (2 * reps)
    lower = median_bias_from_probs(ge_hi, le_hi)
    upper = median_bias_from_probs(ge_lo, le_lo)
    return point, min(lower, point), max(upper, point)


def count_sides(values: np.ndarray, theta: float) -> tuple[int, int]:
    """``(#{v >= theta}, #{v <= theta})``; a tie counts on both sides."""
    if np.isnan(values).any():
        raise DomainError("estimator returned NaN")
    return int(np.count_nonzero(values >= theta)), int(np.count_nonzero(values <= theta))


def estimate_median_bias_mc(
    model: "DataModel",
    est: RandomizedEstimator,
    n: int,
    reps: int,
    seed: int,
    *,
    confidence: float = 0.999,
    workers: int | None = None,
    key: Sequence[int] | None = None,
) -> MedianBiasEstimate:
    if reps < 1:
        raise DomainError(f"reps must be >= 1, got {reps}")
    if n < est.min_n():
        raise InsufficientDataError(
            f"{est.spec} needs n >= {est.min_n()}, got {n}", est.min_n()
        )
    theta = model.theta
    key = mc.stream_key("medbias", model.spec, est.spec, n) if key is None else key

    def block(rng: np.random.Generator, m: int) -> tuple[int, int]:
        samples = model.sample(rng, m, n)
        return count_sides(est.evaluate(samples, rng), theta)

    counts = mc.run_blocks(block, seed=seed, key=key, reps=reps, n=n, workers=workers)
    k_ge = sum(c[0] for c in counts)
    k_le = sum(c[1] for c in counts)
    point, lower, upper = median_bias_bounds(k_ge, k_le, reps, confidence)
    return MedianBiasEstimate(
        point=point,
        lower=lower,
        upper=upper,
        reps=reps,
        confidence=confidence,
        model=model.spec,
        estimator=est.spec,
        n=n,
        seed=seed,
        p_ge=k_ge / reps,
        p_le=k_le / reps,
    )


def exact_median_bias(model: "DataModel", est: RandomizedEstimator, n: int) -> MedianBiasEstimate | None:
    """Closed-form median bias, or None when no exact oracle is wired."""
    probs = est.exact_probs(model, n)
    if probs is None:
        return None
    p_ge, p_le = probs
    bias = median_bias_from_probs(p_ge, p_le)
    return MedianBiasEstimate(
        point=bias, lower=bias, upper=bias, reps=0, exact=True,
        model=model.spec, estimator=est.spec, n=n, p_ge=p_ge, p_le=p_le,
    )


def worst_case_median_bias(
    models: Sequence["DataModel"],
    est: RandomizedEstimator,
    n: int,
    reps: int,
    seed: int,
    **kwargs,
) -> MedianBiasEstimate:
    """Largest MC median bias over a finite model grid; ``.model`` names the argmax."""
    if not models:
        raise DomainError("worst_case_median_bias needs at least one model")
    best = None
    for model in models:
        result = estimate_median_bias_mc(model, est, n, reps, seed, **kwargs)
        if best is None or result.point > best.point:
            best = result
    return best
