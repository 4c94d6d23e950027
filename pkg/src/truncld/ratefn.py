"""Cumulant limits and rate functions for hard truncation.

The limiting cumulant is an integral over the radial measure
``gamma(dr) = alpha r**(-alpha-1) dr + delta_1(dr)`` on ``(0, 1]`` and over the
spectral measure.  Everything reduces to the one-dimensional radial kernel
``K(u) = int f(r u) gamma(dr)``, with ``f(y) = e**y - 1`` when ``alpha < 1`` and
``f(y) = e**y - 1 - y`` when ``1 <= alpha < 2``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError
from .model import PowerLawModel, RegimeKind, TruncationSchedule, classify_regime, tail_prob
from .quadrature import power_weighted, sphere_projection_rule

QUAD_TOL = 1e-14
QUAD_REL_TOL = 1e-14
ESCAPE_RADIUS = 60.0
MAX_NEWTON = 100
COND_LIMIT = 1e12


class Case(str, enum.Enum):
    SUB_CRITICAL = "subcritical"      # alpha < 1
    CRITICAL = "critical"             # alpha = 1
    SUPER_CRITICAL = "supercritical"  # 1 < alpha < 2
    QUADRATIC = "quadratic"


def case_for(alpha: float) -> Case:
    if alpha < 1:
        return Case.SUB_CRITICAL
    if alpha == 1:
        return Case.CRITICAL
    if alpha < 2:
        return Case.SUPER_CRITICAL
    raise AssumptionError("the exponential cumulant limit needs alpha < 2; use the quadratic case")


def _expm1_over_x(x: np.ndarray) -> np.ndarray:
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = np.expm1(x[nz]) / x[nz]
    return out


def _second_order_remainder(x: np.ndarray) -> np.ndarray:
    """``(e**x - 1 - x) / x**2`` without cancellation near zero."""
    out = np.empty_like(x)
    small = np.abs(x) < 1e-2
    xs = x[small]
    out[small] = 0.5 + xs * (1 / 6 + xs * (1 / 24 + xs * (1 / 120 + xs * (1 / 720 + xs / 5040))))
    xb = x[~small]
    out[~small] = (np.expm1(xb) - xb) / (xb * xb)
    return out


class RadialKernel:
    """``K``, ``K'`` and ``K''`` of the radial measure, vectorized over ``u``."""

    def __init__(self, alpha: float, case: Case):
        self.alpha = alpha
        self.compensated = case in (Case.CRITICAL, Case.SUPER_CRITICAL)

    def _integral(self, beta: float, fn, u: np.ndarray) -> np.ndarray:
        # int_0^1 r**beta fn(r u) dr for every entry of u
        if u.size == 0:
            return np.zeros(0)
        return np.atleast_1d(power_weighted(lambda r: fn(np.outer(r, u)), beta,
                                            tol=QUAD_TOL, rel_tol=QUAD_REL_TOL))

    def value(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        a = self.alpha
        if self.compensated:
            body = a * u * u * self._integral(1.0 - a, _second_order_remainder, u)
            return body + (np.expm1(u) - u)
        return a * u * self._integral(-a, _expm1_over_x, u) + np.expm1(u)

    def first(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        a = self.alpha
        if self.compensated:
            return a * u * self._integral(1.0 - a, _expm1_over_x, u) + np.expm1(u)
        return a * self._integral(-a, np.exp, u) + np.exp(u)

    def second(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        a = self.alpha
        return a * self._integral(1.0 - a, np.exp, u) + np.exp(u)


@dataclass(frozen=True)
class RateFunction:
    """Limiting cumulant of the normalized hard-truncation sums.

    ``case`` is inferred from the tail index when omitted.  The quadratic case
    uses ``0.5 <lam, D lam>`` with ``D`` from :func:`d_matrix` unless given.
    """

    model: PowerLawModel
    case: Case | None = None
    D: np.ndarray | None = None

    def __post_init__(self):
        a = self.model.alpha
        case = Case(self.case) if self.case is not None else case_for(a)
        if case is not Case.QUADRATIC and case is not case_for(a):
            raise AssumptionError(f"case {case.value} does not match alpha={a}")
        object.__setattr__(self, "case", case)
        if case is Case.QUADRATIC:
            D = d_matrix(self.model) if self.D is None else np.atleast_2d(np.asarray(self.D, dtype=float))
            if D.shape != (self.model.dim, self.model.dim) or not np.allclose(D, D.T):
                raise ValueError("D must be a symmetric d x d matrix")
            if np.min(np.linalg.eigvalsh(D)) < -1e-12:
                raise ValueError("D must be positive semidefinite")
            object.__setattr__(self, "D", D)
        else:
            object.__setattr__(self, "_kernel", RadialKernel(a, case))

    @property
    def dim(self) -> int:
        return self.model.dim

    def _drift(self) -> np.ndarray:
        if self.case is Case.SUPER_CRITICAL:
            return self.model.spectral.mean_direction() / (self.model.alpha - 1.0)
        return np.zeros(self.dim)

    def _pieces(self, lam: np.ndarray, order: int):
        """Atom and isotropic contributions to the value (0), gradient (1) or Hessian (2)."""
        spec = self.model.spectral
        kern: RadialKernel = self._kernel
        fn = (kern.value, kern.first, kern.second)[order]
        atoms = spec.point_atoms()
        d = self.dim
        total = 0.0 if order == 0 else (np.zeros(d) if order == 1 else np.zeros((d, d)))
        if atoms:
            dirs = np.array([s for s, _ in atoms])
            w = np.array([wt for _, wt in atoms])
            vals = fn(dirs @ lam) * w
            if order == 0:
                total += float(vals.sum())
            elif order == 1:
                total += vals @ dirs
            else:
                total += (dirs * vals[:, None]).T @ dirs
        iso = spec.continuous_weight
        if iso > 0:
            t, tw = sphere_projection_rule(d)
            norm = float(np.linalg.norm(lam))
            if order == 0:
                total += iso * float(tw @ fn(norm * t))
            elif norm == 0.0:
                if order == 2:
                    total += iso * float(fn(np.zeros(1))[0]) * np.eye(d) / d
            else:
                e = lam / norm
                vals = fn(norm * t)
                if order == 1:
                    total += iso * float(tw @ (t * vals)) * e
                else:
                    along = float(tw @ (t * t * vals))
                    across = float(tw @ ((1.0 - t * t) * vals)) / (d - 1)
                    proj = np.outer(e, e)
                    total += iso * (along * proj + across * (np.eye(d) - proj))
        return total

    def value(self, lam) -> float:
        lam = self._vec(lam)
        if self.case is Case.QUADRATIC:
            return 0.5 * float(lam @ self.D @ lam)
        return self._pieces(lam, 0) - float(lam @ self._drift())

    def grad(self, lam) -> np.ndarray:
        lam = self._vec(lam)
        if self.case is Case.QUADRATIC:
            return self.D @ lam
        return self._pieces(lam, 1) - self._drift()

    def hess(self, lam) -> np.ndarray:
        lam = self._vec(lam)
        if self.case is Case.QUADRATIC:
            return self.D.copy()
        return self._pieces(lam, 2)

    def _vec(self, lam) -> np.ndarray:
        v = np.atleast_1d(np.asarray(lam, dtype=float))
        if v.shape != (self.dim,):
            raise ValueError(f"lambda must have shape ({self.dim},)")
        if not np.all(np.isfinite(v)):
            raise ValueError("lambda must be finite")
        return v


def lambda_eval(rf: RateFunction, lam) -> float:
    return rf.value(lam)


def lambda_grad(rf: RateFunction, lam) -> np.ndarray:
    return rf.grad(lam)


@dataclass(frozen=True)
class ConjugateResult:
    value: float
    lam_hat: np.ndarray
    grad_residual: float
    iterations: int
    diverged: bool = False

    def to_dict(self) -> dict:
        return {
            "value": "inf" if math.isinf(self.value) else self.value,
            "lam_hat": self.lam_hat.tolist(),
            "grad_residual": self.grad_residual,
            "iterations": self.iterations,
            "diverged": self.diverged,
        }


def legendre(rf: RateFunction, x, escape_radius: float = ESCAPE_RADIUS,
             max_iter: int = MAX_NEWTON) -> ConjugateResult:
    """``sup_lam <lam, x> - Lambda(lam)`` by damped Newton ascent from ``lam = 0``.

    Returns ``diverged=True`` and an infinite value once ``|lam|`` leaves the
    escape radius while the objective is still increasing, which happens
    exactly when ``x`` is outside the closure of the gradient range.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    target = 1e-10 * (1.0 + float(np.linalg.norm(x)))
    lam = np.zeros_like(x)
    obj = 0.0
    g = x - rf.grad(lam)
    step_size = 1.0
    for it in range(max_iter + 1):
        res = float(np.linalg.norm(g))
        if res <= target:
            return ConjugateResult(obj, lam, res, it)
        if it == max_iter:
            break
        H = rf.hess(lam)
        if np.linalg.cond(H) > COND_LIMIT:
            # Hessian is nearly singular: fall back to plain ascent with an adaptive step
            direction = step_size * g
        else:
            direction = np.linalg.solve(H, g)
        slope = float(g @ direction)
        if slope <= 1e-12 * max(1.0, abs(obj)):
            # the gain is below the rounding of the objective: Armijo cannot see it,
            # but the full Newton step is safe this close to the maximizer
            lam = lam + direction
            obj = float(lam @ x) - rf.value(lam)
            g = x - rf.grad(lam)
            continue
        t = 1.0
        while True:
            trial = lam + t * direction
            if np.linalg.norm(trial) > escape_radius:
                trial_obj = float(trial @ x) - rf.value(trial)
                if trial_obj >= obj:
                    return ConjugateResult(math.inf, trial, res, it + 1, diverged=True)
            else:
                trial_obj = float(trial @ x) - rf.value(trial)
            if trial_obj >= obj + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-16:
                # no further ascent is possible in floating point
                return ConjugateResult(obj, lam, res, it)
        step_size = min(step_size * 2.0, 1e6) if t == 1.0 else step_size * t
        lam, obj = trial, trial_obj
        g = x - rf.grad(lam)
    return ConjugateResult(obj, lam, float(np.linalg.norm(g)), max_iter)


def d_matrix(model: PowerLawModel) -> np.ndarray:
    """Covariance-type matrix of the quadratic rate."""
    a = model.alpha
    if a == 2:
        raise AssumptionError("alpha=2 is not supported: E|H|^2 is infinite for the exact Pareto radius")
    factor = 2.0 / (2.0 - a) if a < 2 else a / (a - 2.0)
    return factor * model.spectral.second_moment()


@dataclass(frozen=True)
class SpeedWindow:
    """Admissible exponents ``kappa`` for ``c_n = n**kappa`` (open interval).

    ``asymptotic`` marks an upper end that is only reached as a limit.
    """

    alpha: float
    lo: float
    hi: float
    asymptotic: bool = False

    def contains(self, kappa: float) -> bool:
        return self.lo < kappa < self.hi

    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "asymptotic": self.asymptotic}


def _require_hard(model: PowerLawModel, schedule: TruncationSchedule) -> None:
    regime = classify_regime(model, schedule)
    if regime.kind is not RegimeKind.HARD:
        raise AssumptionError(
            f"hard regime requires lim nP(|H|>M_n)=infinity (rho < 1/alpha); got {regime.kind.value}")


def speed_window(model: PowerLawModel, schedule: TruncationSchedule) -> SpeedWindow:
    _require_hard(model, schedule)
    a, rho = model.alpha, schedule.exponent
    if a == 2:
        raise AssumptionError("alpha=2 is not supported: E|H|^2 is infinite for the exact Pareto radius")
    if a < 2:
        return SpeedWindow(a, 0.5 + rho * (1.0 - a / 2.0), 1.0 + rho * (1.0 - a))
    if a < 3:
        return SpeedWindow(a, 0.5, 1.0 - rho * (3.0 - a))
    return SpeedWindow(a, 0.5, 1.0, asymptotic=(a == 3))


def check_cn(model: PowerLawModel, schedule: TruncationSchedule, kappa: float) -> bool:
    return speed_window(model, schedule).contains(kappa)


def beta_n(model: PowerLawModel, schedule: TruncationSchedule, n: float, kappa: float) -> float:
    """Speed of the moderate-deviation principle for ``c_n = n**kappa``."""
    c2 = float(n) ** (2.0 * kappa)
    if model.alpha < 2:
        m = schedule.M(n)
        return c2 / (n * m * m * tail_prob(model, m))
    return c2 / n


def ldp_speed(model: PowerLawModel, schedule: TruncationSchedule, n: float) -> float:
    """``n P(|H| > M_n)``."""
    return n * tail_prob(model, schedule.M(n))


def ldp_scale(model: PowerLawModel, schedule: TruncationSchedule, n: float) -> float:
    """Normalizer ``n M_n P(|H| > M_n)`` of the hard-regime sums."""
    m = schedule.M(n)
    return n * m * tail_prob(model, m)


def export_grid(rf: RateFunction, points, path, what: str = "lambda") -> None:
    """Write ``Lambda`` (``what='lambda'``) or its conjugate (``what='conjugate'``) on a lattice."""
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
    cols = [f"x{i}" for i in range(rf.dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if what == "lambda":
            writer.writerow(cols + ["value"])
            for p in pts:
                writer.writerow([f"{v:.17g}" for v in p] + [f"{rf.value(p):.17g}"])
        elif what == "conjugate":
            writer.writerow(cols + ["value", "diverged"])
            for p in pts:
                res = legendre(rf, p)
                writer.writerow([f"{v:.17g}" for v in p] + [f"{res.value:.17g}", int(res.diverged)])
        else:
            raise ValueError("what must be 'lambda' or 'conjugate'")
