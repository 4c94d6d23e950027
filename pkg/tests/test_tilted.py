import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from truncld.errors import AssumptionError
from truncld.model import LightTailLaw, PowerLawModel, SpectralMeasure, TruncationSchedule
from truncld.tilted import TruncatedLine


def mgf_oracle(alpha, m, w_plus, theta):
    a, m, th = mpmath.mpf(alpha), mpmath.mpf(m), mpmath.mpf(theta)

    def one_side(u):
        body = mpmath.quad(lambda r: mpmath.exp(u * r) * a * r ** (-a - 1), [1, m])
        return body + m ** (-a) * mpmath.exp(u * m)
    return w_plus * one_side(th) + (1 - w_plus) * one_side(-th)


@given(st.floats(0.3, 1.9), st.floats(1.5, 40.0), st.floats(0.0, 1.0), st.floats(-2.0, 2.0))
@settings(max_examples=40, deadline=None)
def test_cumulant_against_mpmath(alpha, m, w_plus, theta):
    line = TruncatedLine(alpha, m, w_plus)
    k, dk = line.cumulant(theta)
    with mpmath.workdps(30):
        ref = mpmath.log(mgf_oracle(alpha, m, w_plus, theta))
        dref = mpmath.diff(lambda t: mpmath.log(mgf_oracle(alpha, m, w_plus, t)), theta)
    assert k == pytest.approx(float(ref), rel=1e-11, abs=1e-14)
    assert dk == pytest.approx(float(dref), rel=1e-9, abs=1e-12)


def test_cumulant_when_truncation_below_one():
    line = TruncatedLine(1.2, 0.5, 1.0)
    k, dk = line.cumulant(2.0)
    assert k == pytest.approx(1.0) and dk == pytest.approx(0.5)


def test_saddle_solves_the_tilt_equation():
    line = TruncatedLine(0.8, 20.0, 0.5)
    for n, x in ((10, 30.0), (10, -50.0), (100, 900.0)):
        theta = line.saddle(n, x)
        assert n * line.cumulant(theta)[1] == pytest.approx(x, rel=1e-10)
    assert line.saddle(10, 0.0) == 0.0
    with pytest.raises(AssumptionError):
        line.saddle(10, 200.0)


def test_support_edge_probability():
    line = TruncatedLine(1.5, 4.0, 0.7)
    assert line.support_probability(3, 5.0) is None
    assert line.support_probability(3, 12.0) == pytest.approx((0.7 * 4.0**-1.5) ** 3)
    assert line.support_probability(3, -12.0) == pytest.approx((0.3 * 4.0**-1.5) ** 3)
    assert line.support_probability(3, 12.5) == 0.0


def test_tilted_draws_have_the_tilted_mean():
    line = TruncatedLine(0.9, 10.0, 0.6)
    theta = 0.3
    x = line.sample_tilted(theta, np.random.default_rng(8), 400_000)
    assert np.all(np.abs(x) <= 10.0)
    mean = line.cumulant(theta)[1]
    assert abs(x.mean() - mean) < 4 * x.std() / math.sqrt(len(x))
    # the truncation atom is reweighted by exp(theta m) / E exp(theta X)
    atom = 0.6 * 10.0**-0.9 * math.exp(theta * 10.0 - line.cumulant(theta)[0])
    frac = np.mean(x == 10.0)
    assert abs(frac - atom) < 4 * math.sqrt(atom * (1 - atom) / len(x))


def test_from_model_requirements():
    sched = TruncationSchedule(2.0, 0.5)
    line = TruncatedLine.from_model(PowerLawModel(1.0, SpectralMeasure.symmetric_1d()), sched, 16)
    assert line == TruncatedLine(1.0, 8.0, 0.5)
    # in one dimension the isotropic part is the pair of atoms at +-1
    assert TruncatedLine.from_model(PowerLawModel(1.0, SpectralMeasure((), 1.0, 1)), sched, 16) == line
    with pytest.raises(AssumptionError):
        TruncatedLine.from_model(PowerLawModel(1.0, SpectralMeasure((), 1.0, 2)), sched, 16)
    with pytest.raises(AssumptionError):
        TruncatedLine.from_model(PowerLawModel(1.0, SpectralMeasure.symmetric_1d()),
                                 TruncationSchedule(2.0, 0.5, LightTailLaw("uniform", 1.0)), 16)
