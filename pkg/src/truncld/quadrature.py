"""Double-exponential quadrature on finite intervals and a projection rule for the sphere."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .errors import QuadratureError

_T_MAX = 4.5  # exp(-pi*sinh(4.5)) ~ 1e-61, so endpoint singularities lose nothing
_MAX_LEVEL = 12


@lru_cache(maxsize=None)
def _level_nodes(level: int):
    """Offsets, endpoint distances (as fractions of the interval) and weights.

    Level 0 uses step 1/2 on [-T, T]; each further level halves the step and
    contributes only the new (odd) nodes.
    """
    h = 0.5 / 2**level
    if level == 0:
        t = np.arange(-int(_T_MAX / h), int(_T_MAX / h) + 1) * h
    else:
        k = np.arange(1, 2 * int(_T_MAX / h) + 2, 2)
        k = k[k * h <= _T_MAX]
        t = np.concatenate([-k[::-1], k]) * h
    q = np.exp(-math.pi * np.sinh(np.abs(t)))
    frac = q / (1.0 + q)  # distance to the nearer endpoint over (b - a)
    w = 0.5 * (math.pi / 2) * np.cosh(t) * 4.0 * q / (1.0 + q) ** 2
    keep = frac > 0
    return t[keep], frac[keep], w[keep], h


def tanh_sinh(f, a: float, b: float, tol: float = 1e-10, rel_tol: float = 1e-12,
              max_level: int = _MAX_LEVEL):
    """Integrate a vectorized ``f`` over the closed interval ``[a, b]``.

    ``f`` maps an array of ``N`` points to shape ``(N,)`` or ``(N, m)``; in the
    second case an array of ``m`` integrals is returned.  Nodes never touch the
    endpoints, so integrable endpoint singularities are allowed.  Raises
    :class:`QuadratureError` if successive levels differ by more than
    ``max(tol, rel_tol*|I|)`` (componentwise).
    """
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("tanh_sinh needs a finite interval")
    if a == b:
        probe = np.asarray(f(np.array([a])), dtype=float)
        return 0.0 if probe.ndim == 1 else np.zeros(probe.shape[1])
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    width = b - a
    total = 0.0
    prev = None
    change = math.inf
    for level in range(max_level + 1):
        t, frac, w, h = _level_nodes(level)
        x = np.where(t < 0, a + width * frac, b - width * frac)
        inside = (x > a) & (x < b)
        vals = np.asarray(f(x[inside]), dtype=float)
        total = total + (w[inside] @ vals) * width
        est = total * h
        if not np.all(np.isfinite(est)):
            raise QuadratureError(f"non-finite integrand on [{a}, {b}]")
        if prev is not None:
            gap = np.abs(est - prev)
            change = float(np.max(gap))
            if np.all(gap <= np.maximum(tol, rel_tol * np.abs(est))):
                return sign * (float(est) if np.ndim(est) == 0 else est)
        prev = est
    raise QuadratureError(f"tanh-sinh did not converge on [{a}, {b}] (last change {change:.3g})")


def integrate_pieces(f, breakpoints, tol: float = 1e-10) -> float:
    """Sum of :func:`tanh_sinh` over consecutive breakpoints (kinks, jumps)."""
    pts = sorted(set(float(p) for p in breakpoints))
    return sum(tanh_sinh(f, lo, hi, tol=tol) for lo, hi in zip(pts[:-1], pts[1:]) if hi > lo)


def power_weighted(g, beta: float, tol: float = 1e-10, rel_tol: float = 1e-12):
    """``int_0^1 r**beta * g(r) dr`` for ``beta > -1`` and smooth ``g``.

    The substitution ``s = r**(1+beta)`` removes the endpoint singularity.
    """
    if beta <= -1:
        raise ValueError("power weight must satisfy beta > -1")
    p = 1.0 + beta
    return tanh_sinh(lambda s: g(s ** (1.0 / p)), 0.0, 1.0, tol=tol * p, rel_tol=rel_tol) / p


@lru_cache(maxsize=None)
def sphere_projection_rule(dim: int, n_nodes: int = 96):
    """Nodes and probability weights for ``<e, Theta>`` with ``Theta`` uniform on the sphere.

    The projection has density proportional to ``(1 - t**2)**((dim-3)/2)`` on
    ``[-1, 1]``; Gauss-Jacobi is exact for polynomials in ``t`` up to degree
    ``2*n_nodes - 1``.
    """
    if dim < 2:
        raise ValueError("projection rule needs dim >= 2")
    ab = (dim - 3) / 2.0
    t, w = roots_jacobi(n_nodes, ab, ab)
    return t, w / w.sum()
