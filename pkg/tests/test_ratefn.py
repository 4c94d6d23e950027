import csv
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from truncld.errors import AssumptionError
from truncld.model import PowerLawModel, SpectralMeasure, TruncationSchedule
from truncld.ratefn import (Case, RadialKernel, RateFunction, beta_n, case_for, check_cn, d_matrix,
                            export_grid, lambda_eval, lambda_grad, ldp_scale, ldp_speed, legendre,
                            speed_window)

PLUS = SpectralMeasure((((1.0,), 1.0),))
SYM = SpectralMeasure.symmetric_1d()


def kernel_series(alpha, u, deriv=0):
    """sum_m u^(m-deriv)/(m-deriv)! * m/(m-alpha), from integrating the power series term by term."""
    start = 1 if alpha < 1 else 2
    a, u = mpmath.mpf(alpha), mpmath.mpf(u)

    def term(m):
        m = int(m)
        if m - deriv < 0:
            return 0
        return u ** (m - deriv) / mpmath.factorial(m - deriv) * m / (m - a)
    return mpmath.nsum(term, [start, mpmath.inf])


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.9, 1.0, 1.5, 1.9])
@pytest.mark.parametrize("u", [-7.0, -0.5, 1e-4, 0.8, 4.0])
def test_kernel_against_series(alpha, u):
    case = case_for(alpha)
    k = RadialKernel(alpha, case)
    for deriv, fn in enumerate((k.value, k.first, k.second)):
        ref = float(kernel_series(alpha, u, deriv))
        assert fn(u)[0] == pytest.approx(ref, rel=1e-10, abs=1e-15)


def conjugate_oracle(alpha, x):
    lam = mpmath.findroot(lambda t: kernel_series(alpha, t, 1) - x, 1.0)
    return float(x * lam - kernel_series(alpha, lam)), float(lam)


def test_conjugate_reference_value():
    rf = RateFunction(PowerLawModel(0.5, PLUS))
    res = legendre(rf, [3.0])
    value, lam = conjugate_oracle(0.5, 3.0)
    assert value == pytest.approx(0.3107252657, rel=1e-9)
    assert res.value == pytest.approx(value, rel=1e-10)
    assert res.lam_hat[0] == pytest.approx(lam, rel=1e-8)
    assert not res.diverged


def test_conjugate_outside_gradient_range_diverges():
    rf = RateFunction(PowerLawModel(0.5, PLUS))
    res = legendre(rf, [-1.0])
    assert res.diverged and math.isinf(res.value)
    assert res.to_dict()["value"] == "inf"


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
@given(lam=st.floats(-3.0, 3.0))
@settings(max_examples=8, deadline=None)
def test_legendre_duality(alpha, lam):
    rf = RateFunction(PowerLawModel(alpha, SYM))
    g = lambda_grad(rf, [lam])
    res = legendre(rf, g)
    assert res.value == pytest.approx(lam * g[0] - lambda_eval(rf, [lam]), rel=1e-9, abs=1e-11)


@pytest.mark.parametrize("model", [
    PowerLawModel(0.7, SpectralMeasure((((1.0, 0.0), 0.3), ((0.0, -1.0), 0.7)))),
    PowerLawModel(1.5, SpectralMeasure((), 1.0, 3)),
    PowerLawModel(1.0, SpectralMeasure((((0.6, 0.8), 0.2), ((-0.6, -0.8), 0.2)), 0.6, 2)),
])
def test_gradient_and_hessian_by_finite_differences(model):
    rf = RateFunction(model)
    rng = np.random.default_rng(0)
    h = 1e-5
    for _ in range(3):
        lam = rng.normal(size=model.dim)
        eye = np.eye(model.dim)
        fd_g = np.array([(rf.value(lam + h * e) - rf.value(lam - h * e)) / (2 * h) for e in eye])
        fd_h = np.array([(rf.grad(lam + h * e) - rf.grad(lam - h * e)) / (2 * h) for e in eye])
        np.testing.assert_allclose(rf.grad(lam), fd_g, rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose(rf.hess(lam), fd_h, rtol=1e-7, atol=1e-9)
        assert np.min(np.linalg.eigvalsh(rf.hess(lam))) > 0


def test_isotropic_value_against_direct_angular_integral():
    # in d=3 the projection of a uniform direction is uniform on [-1, 1]
    model = PowerLawModel(1.5, SpectralMeasure((), 1.0, 3))
    rf = RateFunction(model)
    lam = np.array([0.3, -1.2, 0.4])
    norm = float(np.linalg.norm(lam))
    ref = mpmath.quad(lambda t: kernel_series(1.5, norm * t), [-1, 0, 1]) / 2
    assert rf.value(lam) == pytest.approx(float(ref), rel=1e-10)


def test_supercritical_drift_is_removed():
    # a mean-zero model has a stationary point at the origin
    model = PowerLawModel(1.5, SpectralMeasure((((1.0,), 0.5), ((-1.0,), 0.5))))
    rf = RateFunction(model)
    np.testing.assert_allclose(rf.grad([0.0]), [0.0], atol=1e-14)
    assert legendre(rf, [0.0]).value == pytest.approx(0.0, abs=1e-14)


@given(st.floats(0.2, 1.9), st.floats(-4.0, 4.0), st.floats(-4.0, 4.0), st.floats(0.05, 0.95))
@settings(max_examples=30, deadline=None)
def test_cumulant_is_convex(alpha, a, b, t):
    rf = RateFunction(PowerLawModel(alpha, SYM))
    mid = rf.value([t * a + (1 - t) * b])
    assert mid <= t * rf.value([a]) + (1 - t) * rf.value([b]) + 1e-10


def test_quadratic_case():
    model = PowerLawModel(3.0, SYM)
    np.testing.assert_allclose(d_matrix(model), [[3.0]])  # E H^2 = alpha/(alpha-2)
    rf = RateFunction(model, Case.QUADRATIC)
    assert rf.value([2.0]) == pytest.approx(6.0)
    assert legendre(rf, [1.5]).value == pytest.approx(1.5**2 / 6, rel=1e-12)
    iso = PowerLawModel(1.5, SpectralMeasure((), 1.0, 2))
    np.testing.assert_allclose(d_matrix(iso), 2 / 0.5 * np.eye(2) / 2)
    with pytest.raises(AssumptionError):
        d_matrix(PowerLawModel(2.0, SYM))
    with pytest.raises(ValueError):
        RateFunction(model, Case.QUADRATIC, D=np.array([[-1.0]]))


def test_case_selection():
    assert case_for(0.5) is Case.SUB_CRITICAL
    assert case_for(1.0) is Case.CRITICAL
    assert case_for(1.5) is Case.SUPER_CRITICAL
    with pytest.raises(AssumptionError):
        case_for(2.5)
    with pytest.raises(AssumptionError):
        RateFunction(PowerLawModel(0.5, PLUS), Case.CRITICAL)
    with pytest.raises(ValueError):
        RateFunction(PowerLawModel(0.5, PLUS)).value([1.0, 2.0])


def test_speed_window_and_scales():
    model = PowerLawModel(1.5, SYM)
    sched = TruncationSchedule(1.0, 0.5)
    w = speed_window(model, sched)
    assert (w.lo, w.hi) == pytest.approx((0.625, 0.75))
    assert check_cn(model, sched, 0.7) and not check_cn(model, sched, 0.8)
    heavy = PowerLawModel(1.0, SYM)
    sched = TruncationSchedule(1.0, 0.3)
    n = 1e4
    assert beta_n(heavy, sched, n, 0.825) == pytest.approx(n**0.35, rel=1e-12)
    assert ldp_speed(heavy, sched, n) == pytest.approx(n**0.7, rel=1e-12)
    assert ldp_scale(heavy, sched, n) == pytest.approx(n, rel=1e-12)
    light = PowerLawModel(3.5, SYM)
    w = speed_window(light, TruncationSchedule(1.0, 0.2))
    assert (w.lo, w.hi, w.asymptotic) == (0.5, 1.0, False)
    assert speed_window(PowerLawModel(2.5, SYM), TruncationSchedule(1.0, 0.2)).hi == pytest.approx(0.9)
    with pytest.raises(AssumptionError, match="hard regime"):
        speed_window(model, TruncationSchedule(1.0, 1.0))


def test_export_grid(tmp_path):
    rf = RateFunction(PowerLawModel(0.5, PLUS))
    path = tmp_path / "grid.csv"
    export_grid(rf, [[1.0], [3.0], [-1.0]], path, "conjugate")
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x0", "value", "diverged"]
    assert float(rows[2][1]) == pytest.approx(0.3107252657, rel=1e-9)
    assert rows[3][1:] == ["inf", "1"]
    export_grid(rf, [[0.0]], path)
    assert list(csv.reader(open(path)))[1] == ["0", "0"]
    with pytest.raises(ValueError):
        export_grid(rf, [[0.0]], path, "other")
