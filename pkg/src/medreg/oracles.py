"""Reference computations that share no code with the modules they check.

Exhaustive enumeration runs in exact rational arithmetic, the batch-count
scan in exact integer arithmetic, and the quadrature oracles integrate
densities numerically rather than using the closed forms in ``models``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from scipy import integrate, stats

MAX_ENUM_N = 6
MAX_OUTCOMES = 10**7


class OracleLimitError(ValueError):
    pass


# ------------------------------------------------------------- enumeration


def _enum_sample_mean(xs, params):
    return [(Fraction(1), sum(xs, Fraction(0)) / len(xs))]


def _enum_sample_median(xs, params):
    s = sorted(xs)
    n = len(s)
    mid = s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2
    return [(Fraction(1), mid)]


def _enum_order_stat(xs, params):
    r = int(params.get("r", 1))
    s = sorted(xs)
    n = len(s)
    if not 1 <= r <= n / 2:
        raise ValueError(f"order statistic index needs 1 <= r <= n/2, got r={r}, n={n}")
    return [(Fraction(1, 2), s[r - 1]), (Fraction(1, 2), s[n - r])]


def _enum_first(xs, params):
    return [(Fraction(1), xs[0])]


def _enum_uniform_corrected(xs, params):
    s = sorted(xs)
    return [(Fraction(1), 2 * s[-1] - s[-2])]


ENUM_ESTIMATORS: dict[str, Callable] = {
    "sample_mean": _enum_sample_mean,
    "sample_median": _enum_sample_median,
    "order_stat_median": _enum_order_stat,
    "first": _enum_first,
    "uniform_corrected": _enum_uniform_corrected,
}


@dataclass(frozen=True)
class EnumerationSpec:
    """A finite-support i.i.d. experiment small enough to enumerate."""

    support: Sequence[tuple]  # (value, probability) pairs
    n: int
    estimator: str
    theta: object
    params: dict | None = None

    def __post_init__(self):
        support = tuple((Fraction(v), Fraction(p)) for v, p in self.support)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "theta", Fraction(self.theta))
        object.__setattr__(self, "params", dict(self.params or {}))
        if not support:
            raise OracleLimitError("empty support")
        if any(p < 0 for _, p in support) or sum(p for _, p in support) != 1:
            raise OracleLimitError("support probabilities must be nonnegative and sum to 1")
        if not 1 <= self.n <= MAX_ENUM_N:
            raise OracleLimitError(f"enumeration needs 1 <= n <= {MAX_ENUM_N}, got {self.n}")
        if self.estimator not in ENUM_ESTIMATORS:
            raise OracleLimitError(f"no enumeration routine for {self.estimator!r}")
        if self.outcome_count > MAX_OUTCOMES:
            raise OracleLimitError(f"{self.outcome_count} outcomes exceed the limit {MAX_OUTCOMES}")

    @property
    def outcome_count(self) -> int:
        branches = 2 if self.estimator == "order_stat_median" else 1
        return len(self.support) ** self.n * branches


def enumerate_probs(spec: EnumerationSpec) -> tuple[Fraction, Fraction]:
    """Exact ``(P(est >= theta), P(est <= theta))`` by total enumeration."""
    rule = ENUM_ESTIMATORS[spec.estimator]
    p_ge = Fraction(0)
    p_le = Fraction(0)
    for outcome in itertools.product(spec.support, repeat=spec.n):
        weight = Fraction(1)
        for _, p in outcome:
            weight *= p
        if weight == 0:
            continue
        xs = [v for v, _ in outcome]
        for branch_weight, value in rule(xs, spec.params):
            w = weight * branch_weight
            if value >= spec.theta:
                p_ge += w
            if value <= spec.theta:
                p_le += w
    return p_ge, p_le


def enumerate_median_bias(spec: EnumerationSpec) -> Fraction:
    p_ge, p_le = enumerate_probs(spec)
    return max(Fraction(1, 2) - min(p_ge, p_le), Fraction(0))


# ------------------------------------------------------------- batch count


def brute_force_batch_count(alpha: float, delta: float, B_max: int) -> int | None:
    """Linear scan for the smallest B <= B_max with (1/2-d)^B + (1/2+d)^B <= alpha.

    The inputs are read as the exact dyadic rationals their floats denote
    and the inequality is tested on integers.
    """
    a = Fraction(alpha)
    d = Fraction(delta)
    lo, hi = Fraction(1, 2) - d, Fraction(1, 2) + d
    den = math.lcm(lo.denominator, hi.denominator)
    lo_num, hi_num = lo.numerator * (den // lo.denominator), hi.numerator * (den // hi.denominator)
    pa, qa = a.numerator, a.denominator
    lo_pow = hi_pow = den_pow = 1
    for B in range(1, B_max + 1):
        lo_pow *= lo_num
        hi_pow *= hi_num
        den_pow *= den
        if (lo_pow + hi_pow) * qa <= pa * den_pow:
            return B
    return None


# -------------------------------------------------------------- quadrature


def uniform_top2_probability(n: int) -> float:
    """P(2 X_(n) - X_(n-1) >= 1) for n i.i.d. Unif(0, 1) draws.

    Integrates the joint density n (n-1) v**(n-2) of the top two order
    statistics (0 < v < u < 1) over {v <= 2u - 1}.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    value, _ = integrate.dblquad(
        lambda v, u: n * (n - 1) * v ** (n - 2),
        0.5,
        1.0,
        0.0,
        lambda u: 2.0 * u - 1.0,
        epsabs=1e-14,
        epsrel=1e-13,
    )
    return value


def normal_mean_statistic_probs(stat: Callable[[float], float], mu: float, n: int, t: float,
                                breakpoints: Sequence[float] = (), sigma: float = 1.0,
                                width: float = 40.0) -> tuple[float, float]:
    """``(P(g(X_bar) >= t), P(g(X_bar) <= t))`` for X_bar ~ N(mu, sigma**2 / n) by quadrature.

    ``breakpoints`` should list the discontinuities of the indicator events.
    """
    scale = sigma / math.sqrt(n)
    lo, hi = mu - width * scale, mu + width * scale
    pts = sorted({p for p in breakpoints if lo < p < hi})
    density = stats.norm(loc=mu, scale=scale).pdf

    def prob(event):
        edges = [lo, *pts, hi]
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(lambda x: density(x) * event(x), a, b,
                                    epsabs=1e-13, epsrel=1e-12, limit=200)
            total += val
        return min(max(total, 0.0), 1.0)

    return prob(lambda x: float(stat(x) >= t)), prob(lambda x: float(stat(x) <= t))
