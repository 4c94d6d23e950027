"""Pareto-radial heavy-tailed vectors, the truncation map and its schedules.

``H = R * Theta`` where ``P(R > t) = t**-alpha`` for ``t >= 1`` and ``Theta`` is
drawn from a spectral measure made of finitely many atoms plus an optional
isotropic part.  A row of the truncated array replaces every summand whose
norm exceeds ``M_n = c * n**rho`` by a vector of norm ``M_n + L`` in the same
direction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError

UNIT_TOL = 1e-12
REGIME_TOL = 1e-12

# upper bound on the number of float64 cells drawn at once by the row samplers
_BLOCK_CELLS = 1 << 21


@dataclass(frozen=True)
class SpectralMeasure:
    """Probability measure on the unit sphere: weighted atoms plus a uniform part.

    In dimension one the isotropic part is the uniform law on ``{-1, +1}``.
    """

    atoms: tuple[tuple[tuple[float, ...], float], ...]
    isotropic_weight: float = 0.0
    dim: int = field(default=0)

    def __post_init__(self):
        atoms = []
        dim = self.dim
        for direction, weight in self.atoms:
            vec = tuple(float(v) for v in np.atleast_1d(np.asarray(direction, dtype=float)))
            if dim == 0:
                dim = len(vec)
            if len(vec) != dim:
                raise AssumptionError(f"atom direction {vec} does not have dimension {dim}")
            norm = math.sqrt(sum(v * v for v in vec))
            if abs(norm - 1.0) > UNIT_TOL:
                raise AssumptionError(f"atom direction {vec} must have unit norm (got {norm!r})")
            if weight < 0:
                raise AssumptionError(f"atom weight {weight} must be non-negative")
            atoms.append((vec, float(weight)))
        if dim < 1:
            raise AssumptionError("spectral measure needs a dimension (no atoms given and dim unset)")
        if self.isotropic_weight < 0:
            raise AssumptionError("isotropic_weight must be non-negative")
        total = sum(w for _, w in atoms) + self.isotropic_weight
        if abs(total - 1.0) > UNIT_TOL:
            raise AssumptionError(f"spectral weights must sum to 1 (got {total!r})")
        object.__setattr__(self, "atoms", tuple(atoms))
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "isotropic_weight", float(self.isotropic_weight))

    @classmethod
    def symmetric_1d(cls) -> "SpectralMeasure":
        return cls((((1.0,), 0.5), ((-1.0,), 0.5)))

    @classmethod
    def isotropic(cls, dim: int) -> "SpectralMeasure":
        return cls((), 1.0, dim)

    def point_atoms(self) -> list[tuple[np.ndarray, float]]:
        """Atoms as arrays, with a one-dimensional isotropic part split onto ``+1`` and ``-1``."""
        out = [(np.asarray(s), w) for s, w in self.atoms if w > 0]
        if self.dim == 1 and self.isotropic_weight > 0:
            half = self.isotropic_weight / 2
            out += [(np.array([1.0]), half), (np.array([-1.0]), half)]
        return out

    @property
    def continuous_weight(self) -> float:
        """Mass not carried by atoms (zero in dimension one)."""
        return 0.0 if self.dim == 1 else self.isotropic_weight

    def merged_atoms(self) -> list[tuple[np.ndarray, float]]:
        """Point atoms with coincident directions combined."""
        merged: list[tuple[np.ndarray, float]] = []
        for s, w in self.point_atoms():
            for i, (s2, w2) in enumerate(merged):
                if np.max(np.abs(s2 - s)) <= UNIT_TOL:
                    merged[i] = (s2, w2 + w)
                    break
            else:
                merged.append((s, w))
        return merged

    def mean_direction(self) -> np.ndarray:
        m = np.zeros(self.dim)
        for s, w in self.atoms:
            m += w * np.asarray(s)
        return m

    def second_moment(self) -> np.ndarray:
        """``E[Theta Theta^T]`` under the spectral measure."""
        m = self.isotropic_weight * np.eye(self.dim) / self.dim
        for s, w in self.atoms:
            v = np.asarray(s)
            m += w * np.outer(v, v)
        return m

    def is_symmetric(self, tol: float = UNIT_TOL) -> bool:
        pts = self.point_atoms()
        for s, w in pts:
            mirrored = sum(w2 for s2, w2 in pts if np.max(np.abs(s2 + s)) <= tol)
            same = sum(w2 for s2, w2 in pts if np.max(np.abs(s2 - s)) <= tol)
            if abs(mirrored - same) > tol:
                return False
        return True

    def cap_weight(self, cap) -> float:
        """Spectral mass of a closed cap on the sphere."""
        mass = 0.0
        for s, w in self.point_atoms():
            if cap.contains_directions(s[None, :])[0]:
                mass += w
        if self.continuous_weight > 0:
            mass += self.continuous_weight * cap.area_fraction()
        return mass

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` directions, returned with shape ``(size, dim)``."""
        d = self.dim
        weights = [w for _, w in self.atoms] + [self.isotropic_weight]
        comp = rng.choice(len(weights), size=size, p=np.asarray(weights) / sum(weights))
        out = np.empty((size, d))
        for i, (s, _) in enumerate(self.atoms):
            out[comp == i] = s
        iso = comp == len(self.atoms)
        m = int(iso.sum())
        if m:
            g = rng.standard_normal((m, d))
            if d == 1:
                g = np.sign(g)
                g[g == 0] = 1.0
            else:
                g /= np.linalg.norm(g, axis=1, keepdims=True)
            out[iso] = g
        return out

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "atoms": [list(s) + [w] for s, w in self.atoms],
            "isotropic_weight": self.isotropic_weight,
        }


@dataclass(frozen=True)
class PowerLawModel:
    """Tail index, dimension and spectral measure of ``H``.

    With ``strict`` on, construction enforces symmetry at ``alpha == 1`` and a
    zero mean direction for ``alpha > 1``.  Pure limit-measure computations do
    not need these assumptions and may pass ``strict=False``.
    """

    alpha: float
    spectral: SpectralMeasure
    strict: bool = True

    def __post_init__(self):
        a = self.alpha
        if not (a > 0 and math.isfinite(a)):
            raise AssumptionError(f"tail index must satisfy alpha > 0 (got {a})")
        if not self.strict:
            return
        if a == 1 and not self.spectral.is_symmetric():
            raise AssumptionError("alpha=1 requires symmetric distribution")
        if a > 1 and np.max(np.abs(self.spectral.mean_direction())) > UNIT_TOL:
            raise AssumptionError("alpha>1 requires E(H)=0 (spectral mean direction must vanish)")

    @property
    def dim(self) -> int:
        return self.spectral.dim

    @classmethod
    def symmetric_1d(cls, alpha: float) -> "PowerLawModel":
        return cls(alpha, SpectralMeasure.symmetric_1d())


class LightTailKind(str, enum.Enum):
    ZERO = "zero"
    EXPONENTIAL = "exponential"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class LightTailLaw:
    """Law of the overshoot ``L``: zero, exponential(rate) or uniform on [0, upper]."""

    kind: LightTailKind = LightTailKind.ZERO
    param: float = 0.0

    def __post_init__(self):
        kind = LightTailKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is not LightTailKind.ZERO and not self.param > 0:
            raise AssumptionError(f"light tail '{kind.value}' needs a positive parameter")

    @property
    def is_zero(self) -> bool:
        return self.kind is LightTailKind.ZERO

    def mean(self) -> float:
        if self.kind is LightTailKind.EXPONENTIAL:
            return 1.0 / self.param
        if self.kind is LightTailKind.UNIFORM:
            return self.param / 2.0
        return 0.0

    def cdf(self, x: float) -> float:
        """``P(L <= x)``."""
        if x < 0:
            return 0.0
        if self.kind is LightTailKind.EXPONENTIAL:
            return -math.expm1(-self.param * x)
        if self.kind is LightTailKind.UNIFORM:
            return min(1.0, x / self.param)
        return 1.0

    def upper(self) -> float:
        """Essential supremum of ``L``."""
        if self.kind is LightTailKind.EXPONENTIAL:
            return math.inf
        if self.kind is LightTailKind.UNIFORM:
            return self.param
        return 0.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind is LightTailKind.EXPONENTIAL:
            return rng.exponential(1.0 / self.param, size)
        if self.kind is LightTailKind.UNIFORM:
            return rng.uniform(0.0, self.param, size)
        return np.zeros(size)

    def satisfies_kth_order(self, k: int) -> bool:
        # P(L > x) decays exponentially (or vanishes), which beats any power of x
        return True

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "param": self.param}


@dataclass(frozen=True)
class TruncationSchedule:
    """Truncation levels ``M(n) = coeff * n**exponent`` and the overshoot law."""

    coeff: float
    exponent: float
    light_tail: LightTailLaw = field(default_factory=LightTailLaw)
    gamma_md: float = 0.5

    def __post_init__(self):
        if not self.coeff > 0:
            raise AssumptionError("truncation coefficient must be positive")
        if not self.exponent > 0:
            raise AssumptionError("truncation exponent must be positive (M_n must increase to infinity)")
        if not self.gamma_md > 0:
            raise AssumptionError("gamma_md must be positive")

    def M(self, n):
        if np.ndim(n):
            return self.coeff * np.asarray(n, dtype=float) ** self.exponent
        return self.coeff * float(n) ** self.exponent


class RegimeKind(str, enum.Enum):
    SOFT = "soft"
    HARD = "hard"
    INTERMEDIATE = "intermediate"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    side_conditions_ok: bool

    def to_dict(self) -> dict:
        return {"regime": self.kind.value, "side_conditions_ok": self.side_conditions_ok}


def tail_prob(model: PowerLawModel, t):
    """``P(|H| > t) = min(1, t**-alpha)``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("tail_prob needs t > 0")
    out = np.minimum(1.0, t_arr ** (-model.alpha))
    return float(out) if out.ndim == 0 else out


def norming_a(model: PowerLawModel, n: float) -> float:
    return float(n) ** (1.0 / model.alpha)


def norming_b(model: PowerLawModel, schedule: TruncationSchedule, n: float) -> float:
    a = model.alpha
    if a < 2:
        return float(n) ** (1.0 / a)
    if a == 2:
        return math.sqrt(float(n) ** (1.0 + schedule.gamma_md))
    return math.sqrt(n * math.log(n))


def classify_regime(model: PowerLawModel, schedule: TruncationSchedule) -> Regime:
    """Soft, hard or intermediate according to the sign of ``1 - alpha * rho``.

    ``n * P(|H| > M_n) = c**-alpha * n**(1 - alpha*rho)``.
    """
    a, rho = model.alpha, schedule.exponent
    growth = 1.0 - a * rho
    if abs(growth) <= REGIME_TOL:
        return Regime(RegimeKind.INTERMEDIATE, False)
    if growth > 0:
        return Regime(RegimeKind.HARD, False)
    side_ok = True if a < 2 else rho > 0.5
    return Regime(RegimeKind.SOFT, side_ok)


def truncate(h, m: float, l: float = 0.0) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    norm = float(np.linalg.norm(h))
    if norm == 0:
        raise ValueError("truncate needs a non-zero vector")
    if m <= 0 or l < 0:
        raise ValueError("truncate needs m > 0 and l >= 0")
    if norm <= m:
        return h.copy()
    return h / norm * (m + l)


def sample_radius(alpha: float, rng: np.random.Generator, size) -> np.ndarray:
    # 1 - U lies in (0, 1], so the radius is finite and at least 1
    return (1.0 - rng.random(size)) ** (-1.0 / alpha)


def sample_h(model: PowerLawModel, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """One draw of ``H`` (shape ``(d,)``) or ``size`` draws (shape ``(size, d)``)."""
    m = 1 if size is None else size
    r = sample_radius(model.alpha, rng, m)
    h = r[:, None] * model.spectral.sample(rng, m)
    return h[0] if size is None else h


def sample_row(model: PowerLawModel, schedule: TruncationSchedule, n: int, rng: np.random.Generator):
    """Draw ``X_n1 .. X_nn`` (shape ``(n, d)``) and their sum."""
    if n < 1:
        raise ValueError("row length must be at least 1")
    h = sample_h(model, rng, n)
    x = _truncate_rows(h, schedule.M(n), schedule.light_tail, rng)
    return x, x.sum(axis=0)


def _truncate_rows(h: np.ndarray, m: float, light: LightTailLaw, rng) -> np.ndarray:
    norms = np.linalg.norm(h, axis=-1)
    big = norms > m
    if not big.any():
        return h
    out = h.copy()
    radius = m + light.sample(rng, int(big.sum()))
    out[big] = h[big] / norms[big][:, None] * radius[:, None]
    return out


def sample_sums(
    model: PowerLawModel,
    schedule: TruncationSchedule,
    n: int,
    reps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Row sums ``S_n`` for ``reps`` independent rows, shape ``(reps, d)``.

    Works in blocks so that memory stays bounded for long rows.  In dimension
    one a single uniform decides both the sign and the radius of each summand.
    """
    if model.dim == 1:
        return _sample_sums_1d(model, schedule, n, reps, rng)[:, None]
    m_n = schedule.M(n)
    out = np.empty((reps, model.dim))
    rows_per_block = max(1, _BLOCK_CELLS // (n * model.dim))
    for start in range(0, reps, rows_per_block):
        stop = min(reps, start + rows_per_block)
        b = stop - start
        if n * model.dim <= _BLOCK_CELLS:
            h = sample_h(model, rng, b * n).reshape(b, n, model.dim)
            out[start:stop] = _truncate_rows(h, m_n, schedule.light_tail, rng).sum(axis=1)
        else:
            # a single row does not fit; accumulate it in slices
            per = max(1, _BLOCK_CELLS // model.dim)
            acc = np.zeros(model.dim)
            for j in range(0, n, per):
                h = sample_h(model, rng, min(per, n - j))
                acc += _truncate_rows(h, m_n, schedule.light_tail, rng).sum(axis=0)
            out[start] = acc
    return out


def _block_rows(rows: int, cells_per_row: int):
    """``(start, stop)`` row ranges holding at most about ``_BLOCK_CELLS`` cells each."""
    per = max(1, _BLOCK_CELLS // max(1, cells_per_row))
    for start in range(0, rows, per):
        yield start, min(rows, start + per)


def _signed_pareto_1d(model: PowerLawModel, rng, shape) -> np.ndarray:
    pts = model.spectral.point_atoms()
    p_plus = sum(w for s, w in pts if s[0] > 0)
    u = rng.random(shape)
    plus = u < p_plus
    # rescale the part of u that was not used by the sign decision into (0, 1]
    v = np.where(plus, (p_plus - u) / max(p_plus, 1e-300), (1.0 - u) / max(1.0 - p_plus, 1e-300))
    r = v ** (-1.0 / model.alpha)
    return np.where(plus, r, -r)


def _sample_sums_1d(model, schedule, n, reps, rng) -> np.ndarray:
    m_n = schedule.M(n)
    light = schedule.light_tail
    out = np.empty(reps)
    if n <= _BLOCK_CELLS:
        rows_per_block = max(1, _BLOCK_CELLS // n)
        for start in range(0, reps, rows_per_block):
            b = min(reps, start + rows_per_block) - start
            x = _signed_pareto_1d(model, rng, (b, n))
            out[start:start + b] = _clip_1d(x, m_n, light, rng).sum(axis=1)
        return out
    for i in range(reps):
        acc = 0.0
        for j in range(0, n, _BLOCK_CELLS):
            x = _signed_pareto_1d(model, rng, min(_BLOCK_CELLS, n - j))
            acc += float(_clip_1d(x, m_n, light, rng).sum())
        out[i] = acc
    return out


def _clip_1d(x: np.ndarray, m: float, light: LightTailLaw, rng) -> np.ndarray:
    big = np.abs(x) > m
    if light.is_zero:
        return np.where(big, np.sign(x) * m, x)
    k = int(big.sum())
    if k == 0:
        return x
    x = x.copy()
    x[big] = np.sign(x[big]) * (m + light.sample(rng, k))
    return x


def truncated_mean(model: PowerLawModel, schedule: TruncationSchedule, n: int) -> np.ndarray:
    """Exact ``E X_n`` for a single truncated summand."""
    direction = model.spectral.mean_direction()
    if not np.any(direction):
        return np.zeros(model.dim)
    a = model.alpha
    m = float(schedule.M(n))
    if m <= 1.0:
        body = 0.0
    elif a == 1:
        body = math.log(m)
    else:
        body = a * (1.0 - m ** (1.0 - a)) / (a - 1.0)
    tail = (m + schedule.light_tail.mean()) * min(1.0, m ** (-a))
    return direction * (body + tail)
