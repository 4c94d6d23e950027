"""Radial cap regions ``{x : r_lo < |x| <= r_hi, angle(x, axis) <= theta}``.

Every set handed to a measure, probability or estimator in this package is a
radial cap (or a finite disjoint union of them).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

_UNIT_TOL = 1e-12


def _as_unit(axis) -> tuple[float, ...]:
    a = np.atleast_1d(np.asarray(axis, dtype=float))
    if a.ndim != 1 or a.size == 0:
        raise ValueError("axis must be a non-empty vector")
    norm = float(np.linalg.norm(a))
    if abs(norm - 1.0) > _UNIT_TOL:
        raise ValueError(f"axis must have unit norm, got {norm!r}")
    return tuple(float(v) for v in a)


@dataclass(frozen=True)
class SphereCap:
    """Closed geodesic cap ``{s : angle(s, axis) <= half_angle}`` on the unit sphere."""

    axis: tuple[float, ...]
    half_angle: float = math.pi

    def __post_init__(self):
        object.__setattr__(self, "axis", _as_unit(self.axis))
        if not 0.0 < self.half_angle <= math.pi:
            raise ValueError("half_angle must lie in (0, pi]")

    @classmethod
    def full(cls, dim: int) -> "SphereCap":
        axis = [0.0] * dim
        axis[0] = 1.0
        return cls(tuple(axis), math.pi)

    @property
    def dim(self) -> int:
        return len(self.axis)

    @property
    def is_full(self) -> bool:
        return self.half_angle >= math.pi

    def contains_directions(self, dirs: np.ndarray) -> np.ndarray:
        """Membership of unit vectors ``dirs`` (shape ``(m, d)``)."""
        dirs = np.asarray(dirs, dtype=float).reshape(-1, self.dim)
        if self.is_full:
            return np.ones(len(dirs), dtype=bool)
        cosines = dirs @ np.asarray(self.axis)
        return cosines >= math.cos(self.half_angle) - _UNIT_TOL

    def on_boundary(self, dirs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        dirs = np.asarray(dirs, dtype=float).reshape(-1, self.dim)
        if self.is_full:
            return np.zeros(len(dirs), dtype=bool)
        cosines = dirs @ np.asarray(self.axis)
        return np.abs(cosines - math.cos(self.half_angle)) <= tol

    def area_fraction(self) -> float:
        """Normalized surface measure of the cap (uniform law on the sphere)."""
        d, theta = self.dim, self.half_angle
        if self.is_full:
            return 1.0
        if d == 1:
            # the "sphere" is {-1, +1}; a proper cap holds only the axis point
            return 0.5
        if d == 2:
            return theta / math.pi
        # P(angle <= theta) for uniform directions, via the regularized incomplete beta
        half = 0.5 * float(betainc((d - 1) / 2.0, 0.5, math.sin(theta) ** 2))
        return half if theta <= math.pi / 2 else 1.0 - half

    def to_dict(self) -> dict:
        return {"axis": list(self.axis), "half_angle": self.half_angle}


@dataclass(frozen=True)
class RadialCapRegion:
    r_lo: float
    r_hi: float
    axis: tuple[float, ...]
    half_angle: float = math.pi

    def __post_init__(self):
        object.__setattr__(self, "axis", _as_unit(self.axis))
        if not self.r_lo > 0:
            raise ValueError("degenerate region: r_lo must be positive")
        if not self.r_hi > self.r_lo:
            raise ValueError("degenerate region: r_hi must exceed r_lo")
        if not 0.0 < self.half_angle <= math.pi:
            raise ValueError("half_angle must lie in (0, pi]")

    @classmethod
    def shell(cls, r_lo: float, r_hi: float = math.inf, dim: int = 1) -> "RadialCapRegion":
        """Full-sphere annulus ``r_lo < |x| <= r_hi``."""
        cap = SphereCap.full(dim)
        return cls(r_lo, r_hi, cap.axis, math.pi)

    @property
    def dim(self) -> int:
        return len(self.axis)

    @property
    def cap(self) -> SphereCap:
        return SphereCap(self.axis, self.half_angle)

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Vectorized membership test for points ``x`` of shape ``(m, d)`` or ``(m,)`` when d=1."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            x = x.reshape(-1)
            r = np.abs(x)
            inside = (r > self.r_lo) & (r <= self.r_hi)
            if self.half_angle >= math.pi:
                return inside
            return inside & (np.sign(x) == np.sign(self.axis[0]))
        x = x.reshape(-1, self.dim)
        r = np.linalg.norm(x, axis=1)
        inside = (r > self.r_lo) & (r <= self.r_hi)
        if self.half_angle >= math.pi:
            return inside
        with np.errstate(invalid="ignore", divide="ignore"):
            cosines = (x @ np.asarray(self.axis)) / r
        return inside & (cosines >= math.cos(self.half_angle) - _UNIT_TOL)

    def scaled(self, factor: float) -> "RadialCapRegion":
        return RadialCapRegion(self.r_lo * factor, self.r_hi * factor, self.axis, self.half_angle)

    def to_dict(self) -> dict:
        return {
            "r_lo": self.r_lo,
            "r_hi": "inf" if math.isinf(self.r_hi) else self.r_hi,
            "axis": list(self.axis),
            "half_angle": self.half_angle,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RadialCapRegion":
        r_hi = data.get("r_hi", math.inf)
        if isinstance(r_hi, str):
            r_hi = float(r_hi)  # accepts "inf"
        half_angle = data.get("half_angle", math.pi)
        if isinstance(half_angle, str) and half_angle.lower() in {"pi", "full"}:
            half_angle = math.pi
        return cls(float(data["r_lo"]), float(r_hi), tuple(data["axis"]), float(half_angle))
