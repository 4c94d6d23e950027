import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from truncld.errors import AssumptionError
from truncld.model import (LightTailLaw, PowerLawModel, RegimeKind, SpectralMeasure,
                           TruncationSchedule, classify_regime, norming_a, norming_b, sample_h,
                           sample_row, sample_sums, tail_prob, truncate, truncated_mean)

SYM = SpectralMeasure.symmetric_1d()
PLUS = SpectralMeasure((((1.0,), 1.0),))


def sym(alpha):
    return PowerLawModel(alpha, SYM)


@pytest.mark.parametrize("alpha,t,expected", [(0.5, 4, 0.5), (2, 1, 1.0), (1.5, 100, 1e-3)])
def test_tail_prob_examples(alpha, t, expected):
    assert tail_prob(sym(alpha), t) == pytest.approx(expected, rel=1e-15)


def test_tail_prob_rejects_non_positive():
    with pytest.raises(ValueError):
        tail_prob(sym(1.0), 0.0)


@pytest.mark.parametrize("alpha,n,expected", [(2, 100, 10), (1, 7, 7), (0.5, 4, 16)])
def test_norming_a_examples(alpha, n, expected):
    assert norming_a(sym(alpha), n) == pytest.approx(expected, rel=1e-14)


def test_norming_b_examples():
    sched = TruncationSchedule(1.0, 1.0, gamma_md=0.2)
    assert norming_b(sym(1.5), sched, 8) == pytest.approx(4.0, rel=1e-14)
    assert norming_b(sym(2.0), sched, 100) == pytest.approx(15.848931924611133, rel=1e-12)
    assert norming_b(sym(3.0), sched, math.e**2) == pytest.approx(math.e * math.sqrt(2), rel=1e-14)


def test_norming_b_is_the_generalized_inverse_for_alpha_below_two():
    # inf{x : P(|H| > x) <= 1/n} for the exact Pareto radius
    m = sym(1.5)
    for n in (2, 8, 50, 1000):
        b = norming_b(m, None, n)
        assert tail_prob(m, b) == pytest.approx(1.0 / n, rel=1e-12)
        assert tail_prob(m, b * (1 - 1e-9)) > 1.0 / n


@pytest.mark.parametrize("alpha,rho,kind,side", [
    (1.0, 2.0, RegimeKind.SOFT, True),
    (0.5, 1.0, RegimeKind.HARD, False),
    (2.0, 0.5, RegimeKind.INTERMEDIATE, False),
    (3.0, 0.4, RegimeKind.SOFT, False),
    (3.0, 0.6, RegimeKind.SOFT, True),
])
def test_classify_regime_examples(alpha, rho, kind, side):
    model = sym(alpha)
    r = classify_regime(model, TruncationSchedule(1.0, rho))
    assert r.kind is kind
    assert r.side_conditions_ok is side


@given(st.floats(0.05, 6.0), st.floats(0.01, 5.0))
def test_classify_regime_partitions(alpha, rho):
    r = classify_regime(PowerLawModel(alpha, SYM), TruncationSchedule(1.0, rho))
    growth = 1 - alpha * rho
    expected = (RegimeKind.INTERMEDIATE if abs(growth) <= 1e-12
                else RegimeKind.HARD if growth > 0 else RegimeKind.SOFT)
    assert r.kind is expected


def test_truncate_examples():
    np.testing.assert_array_equal(truncate([3, 4], 10, 7), [3, 4])
    np.testing.assert_allclose(truncate([3, 4], 1, 0.5), [0.9, 1.2], rtol=1e-15)
    np.testing.assert_array_equal(truncate([0, -2], 2, 1), [0, -2])
    with pytest.raises(ValueError):
        truncate([0, 0], 1, 0)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=4).filter(lambda v: np.linalg.norm(v) > 1e-6),
       st.floats(0.01, 50), st.floats(0, 10))
def test_truncate_properties(h, m, l):
    out = truncate(h, m, l)
    if np.linalg.norm(h) <= m:
        np.testing.assert_array_equal(out, h)
        np.testing.assert_array_equal(truncate(out, m, l), out)
    else:
        assert np.linalg.norm(out) == pytest.approx(m + l, rel=1e-12)


@given(st.floats(0.1, 4.0), st.floats(0.01, 1.0), st.integers(1, 10**6))
def test_norming_a_scaling_identity(alpha, r_frac, n):
    m = PowerLawModel(alpha, SYM)
    r = max(r_frac, n ** (-1 / alpha))
    assert n * tail_prob(m, norming_a(m, n) * r) == pytest.approx(r ** (-alpha), rel=1e-9)


def test_truncated_mean_examples():
    m = PowerLawModel(1.5, PLUS, strict=False)
    np.testing.assert_allclose(truncated_mean(m, TruncationSchedule(4.0, 1.0), 1), [2.0], rtol=1e-14)
    np.testing.assert_array_equal(truncated_mean(sym(1.5), TruncationSchedule(4.0, 1.0), 1), [0.0])
    big = truncated_mean(m, TruncationSchedule(1.0, 1.0), 10**12)[0]
    assert big == pytest.approx(3.0, rel=1e-3)


def test_truncated_mean_matches_simulation_with_overshoot():
    m = PowerLawModel(0.7, PLUS)
    sched = TruncationSchedule(5.0, 1.0, LightTailLaw("exponential", 2.0))
    rng = np.random.default_rng(3)
    sims = sample_sums(m, sched, 1, 400_000, rng)[:, 0]
    exact = truncated_mean(m, sched, 1)[0]
    se = sims.std() / math.sqrt(len(sims))
    assert abs(sims.mean() - exact) < 4 * se


@given(st.floats(1.05, 3.0))
@settings(max_examples=30)
def test_truncated_mean_monotone_in_truncation(alpha):
    m = PowerLawModel(alpha, PLUS, strict=False)
    vals = [truncated_mean(m, TruncationSchedule(c, 1.0), 1)[0] for c in (1.5, 3, 10, 100, 1e4)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < alpha / (alpha - 1)


def test_spectral_validation():
    with pytest.raises(AssumptionError):
        SpectralMeasure((((1.0, 1.0), 1.0),))
    with pytest.raises(AssumptionError):
        SpectralMeasure((((1.0,), 0.6),))
    with pytest.raises(AssumptionError):
        SpectralMeasure((((1.0,), 1.2), ((-1.0,), -0.2)))
    s = SpectralMeasure((), 1.0, 3)
    np.testing.assert_allclose(s.second_moment(), np.eye(3) / 3)


def test_model_assumptions():
    with pytest.raises(AssumptionError, match="alpha=1 requires symmetric"):
        PowerLawModel(1.0, PLUS)
    with pytest.raises(AssumptionError, match="E\\(H\\)=0"):
        PowerLawModel(1.5, SpectralMeasure((((1.0,), 0.7), ((-1.0,), 0.3))))
    with pytest.raises(AssumptionError):
        PowerLawModel(0.0, SYM)
    PowerLawModel(0.5, PLUS)
    PowerLawModel(1.0, PLUS, strict=False)
    PowerLawModel(1.0, SpectralMeasure((), 1.0, 2))


def test_empirical_tail_matches_pareto():
    m = PowerLawModel(1.3, SpectralMeasure((), 1.0, 3))
    rng = np.random.default_rng(11)
    h = sample_h(m, rng, 10**6)
    for t in (1.5, 4.0, 20.0):
        p = tail_prob(m, t)
        frac = np.mean(np.linalg.norm(h, axis=1) > t)
        assert abs(frac - p) < 4 * math.sqrt(p * (1 - p) / 1e6)
    # isotropic directions have mean zero and covariance I/d
    theta = h / np.linalg.norm(h, axis=1, keepdims=True)
    np.testing.assert_allclose(theta.mean(axis=0), 0, atol=5e-3)
    np.testing.assert_allclose(theta.T @ theta / len(theta), np.eye(3) / 3, atol=5e-3)


def test_one_dimensional_fast_path_has_the_right_law():
    m = PowerLawModel(0.8, SpectralMeasure((((1.0,), 0.3), ((-1.0,), 0.7))))
    sched = TruncationSchedule(50.0, 1.0)
    s = sample_sums(m, sched, 1, 10**6, np.random.default_rng(5))[:, 0]
    for lo, hi, sign, w in ((2.0, 10.0, 1, 0.3), (2.0, 10.0, -1, 0.7)):
        p = w * (lo ** -0.8 - hi ** -0.8)
        frac = np.mean((sign * s > lo) & (sign * s <= hi))
        assert abs(frac - p) < 4 * math.sqrt(p * (1 - p) / 1e6)
    p_atom = 0.3 * 50 ** -0.8
    assert abs(np.mean(s == 50.0) - p_atom) < 4 * math.sqrt(p_atom / 1e6)


def test_sampling_is_deterministic():
    m = PowerLawModel(1.2, SpectralMeasure((), 1.0, 2))
    sched = TruncationSchedule(2.0, 1.0, LightTailLaw("uniform", 1.0))
    a = sample_sums(m, sched, 37, 500, np.random.default_rng(99))
    b = sample_sums(m, sched, 37, 500, np.random.default_rng(99))
    assert a.tobytes() == b.tobytes()
    x, s = sample_row(m, sched, 10, np.random.default_rng(1))
    np.testing.assert_allclose(x.sum(axis=0), s)
    assert np.all(np.linalg.norm(x, axis=1) <= sched.M(10) + 1.0)


def test_light_tail_laws():
    assert LightTailLaw().mean() == 0 and LightTailLaw().upper() == 0
    e = LightTailLaw("exponential", 4.0)
    assert e.mean() == 0.25 and e.cdf(1.0) == pytest.approx(1 - math.exp(-4))
    u = LightTailLaw("uniform", 3.0)
    assert u.mean() == 1.5 and u.cdf(1.5) == 0.5 and u.upper() == 3.0
    with pytest.raises(AssumptionError):
        LightTailLaw("exponential", 0.0)


def test_schedule_validation():
    with pytest.raises(AssumptionError):
        TruncationSchedule(1.0, 0.0)
    with pytest.raises(AssumptionError):
        TruncationSchedule(-1.0, 1.0)
    assert TruncationSchedule(2.0, 0.5).M(16) == pytest.approx(8.0)
