"""Data models and estimators, with closed-form tail probabilities where known.

Every estimator's ``exact_tail_probs(model, n, t)`` returns
``(P(est >= t), P(est <= t))``; ``None`` means no closed form is wired for
that model, and callers fall back to Monte Carlo or enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from fractions import Fraction
from math import comb

import numpy as np
from scipy import stats

from .constructions import EndpointProbs
from .core import DomainError, IntervalProcedure, RandomizedEstimator, level_value
from .fmt import fmt_param

_LOCATION_BASES = {
    "normal": stats.norm,
    "laplace": stats.laplace,
    "cauchy": stats.cauchy,
}


class DataModel:
    """An i.i.d. model P with its target functional theta(P)."""

    name = "model"
    continuous = True

    @property
    def theta(self) -> float:
        raise NotImplementedError

    @property
    def params(self) -> dict:
        return {}

    @property
    def spec(self) -> str:
        params = ",".join(f"{k}={fmt_param(v)}" for k, v in self.params.items())
        return f"{self.name}:{params}" if params else self.name

    def sample(self, rng: np.random.Generator, m: int, n: int) -> np.ndarray:
        """``(m, n)`` matrix, each row an independent sample of size n."""
        raise NotImplementedError

    def prob_le(self, t: float) -> float:
        """P(X <= t) for one observation."""
        raise NotImplementedError

    def prob_ge(self, t: float) -> float:
        """P(X >= t) for one observation."""
        raise NotImplementedError

    def normal_mean(self) -> tuple[float, float] | None:
        """``(mu, sigma)`` when observations are N(mu, sigma**2)."""
        return None

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.spec}>"


@dataclass(frozen=True, repr=False)
class LocationModel(DataModel):
    """Symmetric location family ``mu + scale * Z``; theta is the centre mu."""

    base: str = "normal"
    mu: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.base not in _LOCATION_BASES:
            raise DomainError(f"unknown location base {self.base!r}; choose from {sorted(_LOCATION_BASES)}")
        if not self.scale > 0:
            raise DomainError(f"scale must be positive, got {self.scale}")

    @property
    def name(self) -> str:
        return "normal_mean" if self.base == "normal" else "location"

    @property
    def params(self) -> dict:
        out = {} if self.base == "normal" else {"base": self.base}
        out["mu"] = self.mu
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out

    @property
    def spec(self) -> str:
        parts = [f"base={self.base}"] if self.base != "normal" else []
        parts += [f"mu={fmt_param(self.mu)}"]
        if self.scale != 1.0:
            parts.append(f"scale={fmt_param(self.scale)}")
        return f"{self.name}:{','.join(parts)}"

    @property
    def theta(self) -> float:
        return float(self.mu)

    def _dist(self):
        return _LOCATION_BASES[self.base](loc=self.mu, scale=self.scale)

    def sample(self, rng, m, n):
        if self.base == "normal":
            z = rng.standard_normal((m, n))
        elif self.base == "laplace":
            z = rng.laplace(size=(m, n))
        else:
            z = rng.standard_cauchy((m, n))
        return self.mu + self.scale * z

    def prob_le(self, t):
        return float(self._dist().cdf(t))

    def prob_ge(self, t):
        return float(self._dist().sf(t))

    def normal_mean(self):
        return (float(self.mu), float(self.scale)) if self.base == "normal" else None


def model_normal_mean(mu: float = 0.0) -> LocationModel:
    return LocationModel("normal", float(mu))


def model_location(base: str = "normal", mu: float = 0.0, scale: float = 1.0) -> LocationModel:
    return LocationModel(base, float(mu), float(scale))


@dataclass(frozen=True, repr=False)
class ThresholdNormal(DataModel):
    """N(mu, 1) data with target ``kappa(mu) = mu * 1{mu >= 0}``."""

    mu: float = 0.0
    name = "threshold_normal"

    @property
    def params(self):
        return {"mu": self.mu}

    @property
    def theta(self) -> float:
        return float(self.mu) if self.mu >= 0 else 0.0

    def sample(self, rng, m, n):
        return self.mu + rng.standard_normal((m, n))

    def prob_le(self, t):
        return float(stats.norm.cdf(t - self.mu))

    def prob_ge(self, t):
        return float(stats.norm.sf(t - self.mu))

    def normal_mean(self):
        return float(self.mu), 1.0


def model_threshold_normal(mu: float = 0.0) -> ThresholdNormal:
    return ThresholdNormal(float(mu))


@dataclass(frozen=True, repr=False)
class UniformScale(DataModel):
    """Unif(0, theta) data; the target is the endpoint theta."""

    theta_: float = 1.0
    name = "uniform_scale"

    def __post_init__(self):
        if not self.theta_ > 0:
            raise DomainError(f"uniform scale must be positive, got {self.theta_}")

    @property
    def params(self):
        return {"theta": self.theta_}

    @property
    def theta(self) -> float:
        return float(self.theta_)

    def sample(self, rng, m, n):
        return self.theta_ * rng.random((m, n))

    def prob_le(self, t):
        return float(min(max(t / self.theta_, 0.0), 1.0))

    def prob_ge(self, t):
        return float(min(max(1.0 - t / self.theta_, 0.0), 1.0))


@dataclass(frozen=True, repr=False)
class DiscreteUniform(DataModel):
    """Uniform on {1, ..., k}; the target is the (lower) median ceil(k/2)."""

    k: int = 3
    name = "discrete_uniform"
    continuous = False

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise DomainError(f"support size must be a positive integer, got {self.k}")

    @property
    def params(self):
        return {"k": int(self.k)}

    @property
    def theta(self) -> float:
        return float((int(self.k) + 1) // 2)

    def support(self) -> list[tuple[Fraction, Fraction]]:
        k = int(self.k)
        return [(Fraction(v), Fraction(1, k)) for v in range(1, k + 1)]

    def sample(self, rng, m, n):
        return rng.integers(1, int(self.k) + 1, size=(m, n)).astype(float)

    def prob_le(self, t):
        return float(min(max(math.floor(t), 0), self.k)) / self.k

    def prob_ge(self, t):
        return float(self.k - min(max(math.ceil(t) - 1, 0), self.k)) / self.k


@dataclass(frozen=True, repr=False)
class TwoPoint(DataModel):
    """Bernoulli(p) on {0, 1}; the target is the mean p."""

    p: float = 0.5
    name = "two_point"
    continuous = False

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"p must lie in [0, 1], got {self.p}")

    @property
    def params(self):
        return {"p": self.p}

    @property
    def theta(self) -> float:
        return float(self.p)

    def support(self) -> list[tuple[Fraction, Fraction]]:
        p = Fraction(self.p)
        return [(Fraction(0), 1 - p), (Fraction(1), p)]

    def sample(self, rng, m, n):
        return (rng.random((m, n)) < self.p).astype(float)

    def prob_le(self, t):
        return 0.0 if t < 0 else (1.0 - self.p if t < 1 else 1.0)

    def prob_ge(self, t):
        return 1.0 if t <= 0 else (self.p if t <= 1 else 0.0)


# ------------------------------------------------------------------ normal
# Closed forms for statistics of the sample mean under N(mu, sigma**2) data.


def _mean_law(model: DataModel, n: int):
    params = model.normal_mean()
    if params is None:
        return None
    mu, sigma = params
    return stats.norm(loc=mu, scale=sigma / math.sqrt(n))


def _symmetric_centre(model: DataModel) -> float | None:
    if isinstance(model, LocationModel):
        return model.mu
    if isinstance(model, ThresholdNormal):
        return model.mu
    return None


class SampleMean(RandomizedEstimator):
    """Sample mean; exactly median unbiased in symmetric location families."""

    name = "sample_mean"
    known_bias = 0.0

    def evaluate(self, samples, rng):
        return samples.mean(axis=1)

    def exact_tail_probs(self, model, n, t):
        law = _mean_law(model, n)
        if law is not None:
            return float(law.sf(t)), float(law.cdf(t))
        if isinstance(model, LocationModel) and model.base == "cauchy":
            # the mean of i.i.d. Cauchy draws is Cauchy with the same parameters
            law = stats.cauchy(loc=model.mu, scale=model.scale)
            return float(law.sf(t)), float(law.cdf(t))
        if isinstance(model, LocationModel) and t == model.mu:
            return 0.5, 0.5
        return None


class SampleMedian(RandomizedEstimator):
    name = "sample_median"
    known_bias = 0.0

    def evaluate(self, samples, rng):
        return np.median(samples, axis=1)

    def exact_tail_probs(self, model, n, t):
        centre = _symmetric_centre(model)
        if centre is not None and model.continuous and t == centre and model.theta == centre:
            return 0.5, 0.5
        return None


# ---------------------------------------------------------- order statistic


@lru_cache(maxsize=512)
def _binom_suffix_numerators(n: int, a: int, b: int) -> tuple[int, ...]:
    # entry k is b**n * P(Bin(n, a/b) >= k), an exact integer
    terms = [comb(n, j) * a**j * (b - a) ** (n - j) for j in range(n + 1)]
    out = [0] * (n + 2)
    for j in range(n, -1, -1):
        out[j] = out[j + 1] + terms[j]
    return tuple(out)


def _binom_tail(n: int, p, k: int):
    """P(Bin(n, p) >= k); exact rational when p is a Fraction."""
    if k <= 0:
        return Fraction(1) if isinstance(p, Fraction) else 1.0
    if k > n:
        return Fraction(0) if isinstance(p, Fraction) else 0.0
    if isinstance(p, Fraction):
        suffix = _binom_suffix_numerators(n, p.numerator, p.denominator)
        return Fraction(suffix[k], p.denominator**n)
    return float(stats.binom.sf(k - 1, n, p))


def order_stat_tail_probs(n: int, r: int, p_le_t, p_ge_t):
    """Tail probabilities of the coin-flip choice between X_(r) and X_(n-r+1).

    ``p_le_t`` and ``p_ge_t`` are P(X <= t) and P(X >= t) for one
    observation. Atoms are handled: X_(r) <= t iff at least r observations
    are <= t, and X_(r) >= t iff at least n - r + 1 observations are >= t.
    """
    if not 1 <= r <= n / 2:
        raise DomainError(f"order statistic index needs 1 <= r <= n/2, got r={r}, n={n}")
    half = Fraction(1, 2) if isinstance(p_le_t, Fraction) or isinstance(p_ge_t, Fraction) else 0.5
    p_le = half * (_binom_tail(n, p_le_t, r) + _binom_tail(n, p_le_t, n - r + 1))
    p_ge = half * (_binom_tail(n, p_ge_t, n - r + 1) + _binom_tail(n, p_ge_t, r))
    return p_ge, p_le


def exact_order_stat_bias(n: int, r: int, p_le_m, p_ge_m):
    """Median bias of the randomised order-statistic estimator at the median m."""
    from .core import median_bias_from_probs

    p_ge, p_le = order_stat_tail_probs(n, r, p_le_m, p_ge_m)
    return median_bias_from_probs(min(p_ge, 1), min(p_le, 1))


class RandomizedOrderStat(RandomizedEstimator):
    """X_(r) or X_(n-r+1), each with probability 1/2.

    Median unbiased for the median of any P, atoms included. Permuting
    the sample does not change the estimate's law.
    """

    name = "order_stat_median"
    known_bias = 0.0

    def __init__(self, r: int = 1):
        if int(r) != r or r < 1:
            raise DomainError(f"order statistic index must be a positive integer, got {r}")
        self.r = int(r)

    @property
    def spec(self):
        return f"{self.name}:r={self.r}"

    def min_n(self):
        return 2 * self.r

    def evaluate(self, samples, rng):
        m, n = samples.shape
        if self.r > n / 2:
            raise DomainError(f"order statistic index r={self.r} exceeds n/2 for n={n}")
        ordered = np.sort(samples, axis=1)
        low, high = ordered[:, self.r - 1], ordered[:, n - self.r]
        coin = rng.integers(0, 2, size=m, dtype=np.int8)
        return np.where(coin == 0, low, high)

    def exact_tail_probs(self, model, n, t):
        try:
            p_ge_t, p_le_t = model.prob_ge(t), model.prob_le(t)
        except NotImplementedError:
            return None
        return order_stat_tail_probs(n, self.r, p_le_t, p_ge_t)


def estimator_randomized_order_stat(r: int = 1) -> RandomizedOrderStat:
    return RandomizedOrderStat(r)


# ------------------------------------------------------------ uniform scale


def _top_two(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = samples.shape[1]
    part = np.partition(samples, (n - 2, n - 1), axis=1)
    return part[:, n - 1], part[:, n - 2]


class UniformMLE(RandomizedEstimator):
    """X_(n); almost surely below the endpoint, so its median bias is 1/2."""

    name = "uniform_mle"

    def evaluate(self, samples, rng):
        return samples.max(axis=1)

    def exact_tail_probs(self, model, n, t):
        if not isinstance(model, UniformScale):
            return None
        cdf = min(max(t / model.theta, 0.0), 1.0) ** n
        return 1.0 - cdf, cdf


class UniformCorrected(RandomizedEstimator):
    """``2 X_(n) - X_(n-1)``, exactly median unbiased for the endpoint when n >= 2.

    With U = X_(n), V = X_(n-1) on Unif(0, 1) the event {2U - V >= 1} has
    probability ``int_{1/2}^1 n (2u - 1)**(n-1) du = 1/2``; scale equivariance
    carries this to every endpoint.
    """

    name = "uniform_corrected"
    known_bias = 0.0

    def min_n(self):
        return 2

    def evaluate(self, samples, rng):
        if samples.shape[1] < 2:
            raise DomainError("the corrected uniform estimator needs n >= 2")
        top, second = _top_two(samples)
        return 2.0 * top - second

    def exact_tail_probs(self, model, n, t):
        if isinstance(model, UniformScale) and n >= 2 and t == model.theta:
            return 0.5, 0.5
        return None


class UniformPrinted(RandomizedEstimator):
    """``X_(n) - 2 X_(n-1)``; kept as a counterexample, it never reaches the endpoint."""

    name = "uniform_printed"

    def min_n(self):
        return 2

    def evaluate(self, samples, rng):
        top, second = _top_two(samples)
        return top - 2.0 * second

    def exact_tail_probs(self, model, n, t):
        if isinstance(model, UniformScale) and t == model.theta:
            return 0.0, 1.0
        return None


def estimator_uniform_scale() -> UniformCorrected:
    return UniformCorrected()


# ------------------------------------------------------- threshold / Hodges


class ThresholdMean(RandomizedEstimator):
    """``X_bar * 1{X_bar >= 0}``.

    Median unbiased for ``kappa(mu)`` under N(mu, 1) data (every mu, n);
    read as an estimator of mu itself it is not median regular near 0.
    """

    name = "threshold_mean"

    def __init__(self, name: str = "threshold_mean"):
        self.name = name

    @property
    def known_bias(self):
        return 0.0 if self.name == "threshold_mean" else None

    def evaluate(self, samples, rng):
        xbar = samples.mean(axis=1)
        return np.where(xbar >= 0.0, xbar, 0.0)

    def exact_tail_probs(self, model, n, t):
        law = _mean_law(model, n)
        if law is None:
            return None
        p_ge = 1.0 if t <= 0 else float(law.sf(t))
        p_le = 0.0 if t < 0 else float(law.cdf(t))
        return p_ge, p_le


def estimator_threshold_mean() -> ThresholdMean:
    return ThresholdMean("threshold_mean")


def estimator_hard_threshold() -> ThresholdMean:
    return ThresholdMean("hard_threshold")


class Hodges(RandomizedEstimator):
    """``X_bar * 1{|X_bar| > n**-exponent}``."""

    name = "hodges"

    def __init__(self, exponent: float = 0.25):
        if not exponent > 0:
            raise DomainError(f"Hodges exponent must be positive, got {exponent}")
        self.exponent = float(exponent)

    @property
    def spec(self):
        return f"{self.name}:exponent={fmt_param(self.exponent)}"

    def threshold(self, n: int) -> float:
        return n ** -self.exponent

    def evaluate(self, samples, rng):
        xbar = samples.mean(axis=1)
        c = self.threshold(samples.shape[1])
        return np.where(np.abs(xbar) > c, xbar, 0.0)

    def exact_tail_probs(self, model, n, t):
        law = _mean_law(model, n)
        if law is None:
            return None
        c = self.threshold(n)
        zero = float(law.cdf(c) - law.cdf(-c))

        def between(a, b):
            return max(float(law.cdf(b) - law.cdf(a)), 0.0) if b > a else 0.0

        p_ge = float(law.sf(max(t, c))) + (between(t, -c) if t < -c else 0.0) + (zero if t <= 0 else 0.0)
        p_le = float(law.cdf(min(t, -c))) + (between(c, t) if t > c else 0.0) + (zero if t >= 0 else 0.0)
        return min(p_ge, 1.0), min(p_le, 1.0)


def estimator_hodges(exponent: float = 0.25) -> Hodges:
    return Hodges(exponent)


# ------------------------------------------------------------- Wald baseline


class Wald(IntervalProcedure):
    """``center +- z_{1 - alpha/2} * sigma / sqrt(n)`` with a known sigma."""

    name = "wald"

    def __init__(self, center: RandomizedEstimator, sigma: float = 1.0, name: str | None = None):
        self.center = center
        self.sigma = float(sigma)
        if name is not None:
            self.name = name

    @property
    def spec(self):
        if self.name == "zinterval":
            return "zinterval" if self.sigma == 1.0 else f"zinterval:sigma={fmt_param(self.sigma)}"
        suffix = "" if self.sigma == 1.0 else f":sigma={fmt_param(self.sigma)}"
        return f"{self.center.spec} > wald{suffix}"

    @property
    def known_slack(self):
        return 0.0 if isinstance(self.center, SampleMean) else None

    def min_n(self, alpha):
        return self.center.min_n()

    def half_width(self, n: int, alpha: float) -> float:
        alpha = level_value(alpha)
        return float(stats.norm.isf(alpha / 2.0)) * self.sigma / math.sqrt(n)

    def evaluate(self, samples, alpha, rng):
        c = self.center.evaluate(samples, rng)
        h = self.half_width(samples.shape[1], alpha)
        if math.isinf(h):
            return np.full_like(c, -np.inf), np.full_like(c, np.inf)
        return c - h, c + h

    def endpoint_probs(self, model, n, alpha, t):
        h = self.half_width(n, alpha)
        if math.isinf(h):
            return EndpointProbs(0.0, 1.0, 1.0, 0.0)
        upper = self.center.exact_tail_probs(model, n, t + h)
        lower = self.center.exact_tail_probs(model, n, t - h)
        if upper is None or lower is None:
            return None
        # lo = c - h >= t  iff  c >= t + h;   hi = c + h >= t  iff  c >= t - h
        return EndpointProbs(upper[0], upper[1], lower[0], lower[1])


def zinterval(sigma: float = 1.0) -> Wald:
    return Wald(SampleMean(), sigma, name="zinterval")
