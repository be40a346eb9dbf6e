from fractions import Fraction

import numpy as np
import pytest

from medreg import constructions as C
from medreg.core import estimate_median_bias_mc, median_bias_from_probs
from medreg.models import DiscreteUniform, RandomizedOrderStat, SampleMean, TwoPoint, UniformCorrected, UniformScale
from medreg.oracles import (
    EnumerationSpec,
    OracleLimitError,
    brute_force_batch_count,
    enumerate_median_bias,
    enumerate_probs,
    uniform_top2_probability,
)

THIRDS = [(1, Fraction(1, 3)), (2, Fraction(1, 3)), (3, Fraction(1, 3))]


def test_enumeration_examples():
    assert enumerate_median_bias(EnumerationSpec(THIRDS, 3, "order_stat_median", 2, {"r": 1})) == 0
    assert enumerate_median_bias(EnumerationSpec([(7, 1)], 4, "first", 7)) == 0
    assert enumerate_median_bias(EnumerationSpec([(7, 1)], 4, "sample_median", 7)) == 0
    two = [(0, Fraction(1, 2)), (1, Fraction(1, 2))]
    spec = EnumerationSpec(two, 2, "sample_mean", Fraction(1, 2))
    assert enumerate_probs(spec) == (Fraction(3, 4), Fraction(3, 4))
    assert enumerate_median_bias(spec) == 0


def test_enumeration_is_exact_rational():
    skew = [(0, Fraction(1, 5)), (1, Fraction(4, 5))]
    bias = enumerate_median_bias(EnumerationSpec(skew, 3, "sample_mean", Fraction(4, 5)))
    # P(mean >= 4/5) = P(all ones) = 64/125, P(mean <= 4/5) = 61/125
    assert bias == Fraction(1, 2) - Fraction(61, 125)
    bias = enumerate_median_bias(EnumerationSpec(skew, 2, "first", Fraction(1, 2)))
    assert bias == Fraction(3, 10)


def test_enumeration_limits():
    with pytest.raises(OracleLimitError):
        EnumerationSpec(THIRDS, 7, "sample_mean", 2)
    with pytest.raises(OracleLimitError):
        EnumerationSpec([(1, Fraction(1, 2)), (2, Fraction(1, 3))], 2, "sample_mean", 1)
    with pytest.raises(OracleLimitError):
        EnumerationSpec(THIRDS, 2, "nosuch", 2)
    big = [(i, Fraction(1, 20)) for i in range(20)]
    with pytest.raises(OracleLimitError):
        EnumerationSpec(big, 6, "sample_mean", 0)


@pytest.mark.parametrize("r, n", [(1, 2), (1, 3), (2, 4)])
def test_enumeration_matches_order_stat_formula(r, n):
    model = DiscreteUniform(3)
    exact = enumerate_probs(EnumerationSpec(model.support(), n, "order_stat_median", model.theta, {"r": r}))
    formula = RandomizedOrderStat(r).exact_probs(model, n)
    assert float(exact[0]) == pytest.approx(formula[0], abs=1e-15)
    assert float(exact[1]) == pytest.approx(formula[1], abs=1e-15)


def test_enumeration_matches_mc():
    model = DiscreteUniform(4)
    spec = EnumerationSpec(model.support(), 3, "order_stat_median", model.theta, {"r": 1})
    exact = enumerate_median_bias(spec)
    mc = estimate_median_bias_mc(model, RandomizedOrderStat(1), 3, 100_000, 0)
    assert mc.contains(float(exact))
    two = TwoPoint(0.3)
    exact = enumerate_median_bias(EnumerationSpec(two.support(), 4, "sample_mean", two.theta))
    mc = estimate_median_bias_mc(two, SampleMean(), 4, 100_000, 0)
    assert mc.contains(float(exact))


def test_brute_force_batch_count():
    assert brute_force_batch_count(0.1, 0.0, 100) == 5
    assert brute_force_batch_count(1.0, 0.0, 100) == 1
    assert brute_force_batch_count(1e-9, 0.49, 10) is None


def test_top2_quadrature():
    assert uniform_top2_probability(2) == pytest.approx(0.5, abs=1e-12)
    for n in range(2, 51):
        assert abs(uniform_top2_probability(n) - 0.5) <= 1e-10
    with pytest.raises(ValueError):
        uniform_top2_probability(1)


def test_top2_matches_closed_form_in_models():
    for n in (2, 7, 31):
        p_ge, _ = UniformCorrected().exact_probs(UniformScale(1.0), n)
        assert uniform_top2_probability(n) == pytest.approx(p_ge, abs=1e-10)


def test_bias_formula_against_enumeration_grid():
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = rng.integers(1, 6, size=3)
        support = [(v, Fraction(int(x), int(w.sum()))) for v, x in zip((0, 1, 2), w)]
        spec = EnumerationSpec(support, 3, "sample_median", 1)
        p_ge, p_le = enumerate_probs(spec)
        assert median_bias_from_probs(p_ge, p_le) == enumerate_median_bias(spec)


def test_batch_count_matches_scan_small_grid():
    for alpha in (0.5, 0.2, 0.1, 0.05, 0.01):
        for delta in (0.0, 0.1, 0.3):
            assert C.batch_count(alpha, delta) == brute_force_batch_count(alpha, delta, 5000)
