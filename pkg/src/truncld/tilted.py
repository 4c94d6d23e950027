"""Exponential tilting of a one-dimensional truncated summand.

Only atom-only spectral measures on the line with a zero overshoot are
covered, so a summand is ``X = sign * min(R, M)`` with ``R`` exact Pareto.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import AssumptionError
from .model import PowerLawModel, TruncationSchedule, _signed_pareto_1d
from .quadrature import tanh_sinh

_TOL = 1e-15


@dataclass(frozen=True)
class TruncatedLine:
    """Law of one truncated summand on the line."""

    alpha: float
    m: float
    w_plus: float

    @classmethod
    def from_model(cls, model: PowerLawModel, schedule: TruncationSchedule, n: int) -> "TruncatedLine":
        if model.dim != 1 or model.spectral.continuous_weight > 0:
            raise AssumptionError("tilted sampling needs a one-dimensional atom-only spectral measure")
        if not schedule.light_tail.is_zero:
            raise AssumptionError("tilted sampling needs a zero overshoot (light_tail kind 'zero')")
        w_plus = sum(w for s, w in model.spectral.point_atoms() if s[0] > 0)
        return cls(model.alpha, float(schedule.M(n)), w_plus)

    def _moments(self, u: float):
        """``(E e**(u Y) - 1, E Y e**(u Y))`` for ``Y = min(R, M)``, scaled by ``exp(-shift)``.

        Returns ``(shift, m0, m1)`` where ``m0 = E exp(u Y - shift)`` minus one
        when ``shift`` is zero, which keeps small tilts free of cancellation.
        """
        a, m = self.alpha, self.m
        if m <= 1.0:
            e = math.exp(u * m)
            return 0.0, math.expm1(u * m), m * e
        top = math.log(m)
        atom = m ** (-a)
        if abs(u) * m <= 1.0:
            def f0(v):
                return a * np.exp(-a * v) * np.expm1(u * np.exp(v))

            def f1(v):
                return a * np.exp((1.0 - a) * v) * np.exp(u * np.exp(v))

            m0 = tanh_sinh(f0, 0.0, top, tol=_TOL, rel_tol=1e-14) + atom * math.expm1(u * m)
            m1 = tanh_sinh(f1, 0.0, top, tol=_TOL, rel_tol=1e-14) + atom * m * math.exp(u * m)
            return 0.0, m0, m1
        shift = max(u, u * m)

        def g0(v):
            return a * np.exp(-a * v + u * np.exp(v) - shift)

        def g1(v):
            return a * np.exp((1.0 - a) * v + u * np.exp(v) - shift)

        m0 = tanh_sinh(g0, 0.0, top, tol=_TOL, rel_tol=1e-14) + atom * math.exp(u * m - shift)
        m1 = tanh_sinh(g1, 0.0, top, tol=_TOL, rel_tol=1e-14) + atom * m * math.exp(u * m - shift)
        return shift, m0, m1

    def cumulant(self, theta: float) -> tuple[float, float]:
        """``(kappa(theta), kappa'(theta))`` with ``kappa = log E exp(theta X)``."""
        parts = []
        for sign, w in ((1.0, self.w_plus), (-1.0, 1.0 - self.w_plus)):
            if w > 0:
                parts.append((sign, w) + self._moments(sign * theta))
        if all(shift == 0.0 for _, _, shift, _, _ in parts):
            excess = sum(w * m0 for _, w, _, m0, _ in parts)
            first = sum(sign * w * m1 for sign, w, _, _, m1 in parts)
            return math.log1p(excess), first / (1.0 + excess)
        top = max(shift for _, _, shift, _, _ in parts)
        z = z1 = 0.0
        for sign, w, shift, m0, m1 in parts:
            if shift == 0.0:
                m0 += 1.0
            scale = math.exp(shift - top)
            z += w * m0 * scale
            z1 += sign * w * m1 * scale
        return top + math.log(z), z1 / z

    def support_probability(self, n: int, threshold: float) -> float | None:
        """Exact ``P(sign * S_n >= |threshold|)`` when the threshold reaches the edge ``n M``.

        Returns ``None`` for thresholds strictly inside the support.
        """
        edge = n * self.m
        if abs(threshold) < edge:
            return None
        if abs(threshold) > edge:
            return 0.0
        w = self.w_plus if threshold > 0 else 1.0 - self.w_plus
        return (w * min(1.0, self.m ** (-self.alpha))) ** n

    def saddle(self, n: int, threshold: float) -> float:
        """Tilt ``theta`` with ``n kappa'(theta) = threshold``."""
        mean = n * self.cumulant(0.0)[1]
        if threshold == mean:
            return 0.0
        sign = 1.0 if threshold > mean else -1.0
        if abs(threshold) >= n * self.m:
            raise AssumptionError("threshold is outside the support of the row sum")

        def gap(th):
            return n * self.cumulant(th)[1] - threshold

        hi = sign / self.m
        while sign * gap(hi) < 0:
            hi *= 2.0
            if abs(hi) * self.m > 700:
                raise AssumptionError("saddle point tilt is too large to represent")
        return brentq(gap, 0.0, hi, xtol=1e-14, rtol=1e-13) if sign > 0 else brentq(gap, hi, 0.0, xtol=1e-14, rtol=1e-13)

    def sample_tilted(self, theta: float, rng: np.random.Generator, size: int) -> np.ndarray:
        """Exact draws from the law proportional to ``exp(theta x) P(X in dx)``.

        Rejection from the untilted law: a proposal ``x`` is kept with
        probability ``exp(theta x - |theta| M)``.
        """
        model = PowerLawModel(self.alpha, _line_spectral(self.w_plus), strict=False)
        out = np.empty(size)
        filled = 0
        bound = abs(theta) * self.m
        while filled < size:
            want = size - filled
            batch = max(1024, int(want * 1.2 / max(self._acceptance(theta), 1e-3)))
            x = _signed_pareto_1d(model, rng, batch)
            x = np.clip(x, -self.m, self.m)
            keep = x[rng.random(batch) < np.exp(theta * x - bound)]
            take = min(len(keep), want)
            out[filled:filled + take] = keep[:take]
            filled += take
        return out

    def _acceptance(self, theta: float) -> float:
        k, _ = self.cumulant(theta)
        return math.exp(k - abs(theta) * self.m)


def _line_spectral(w_plus: float):
    from .model import SpectralMeasure

    atoms = []
    if w_plus > 0:
        atoms.append(((1.0,), w_plus))
    if w_plus < 1:
        atoms.append(((-1.0,), 1.0 - w_plus))
    return SpectralMeasure(tuple(atoms))
