"""Limit measures of the soft-truncation regime.

* ``mu_ratio``  normalized exponent measure of ``H``
* ``nu_eval``   one-summand limit of ``X^t / t``: power law inside the unit
  ball plus the spectral measure placed on the unit sphere
* ``nu_k_eval`` its k-fold convolution, by nested quadrature (d=1) or
  weighted Monte Carlo
* ``gamma_k_eval`` boundary measures on the sphere, weighted by the sign
  probabilities of the stable limit
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import AssumptionError
from .model import PowerLawModel, TruncationSchedule, sample_h, UNIT_TOL
from .quadrature import integrate_pieces, tanh_sinh
from .regions import RadialCapRegion, SphereCap

BOUNDARY_TOL = 1e-12
_MC_CHUNK = 1 << 20


@dataclass(frozen=True)
class LimitValue:
    value: float
    std_error: float | None
    method: str

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "method": self.method}


def _power_mass(alpha: float, lo: float, hi: float) -> float:
    """``int_lo^hi alpha r**(-alpha-1) dr`` (zero when ``hi <= lo``)."""
    if hi <= lo:
        return 0.0
    return lo ** (-alpha) - (0.0 if math.isinf(hi) else hi ** (-alpha))


def mu_ratio(model: PowerLawModel, region: RadialCapRegion) -> float:
    """``mu(A) / mu(B_1^c)`` for a radial cap ``A``."""
    _check_dim(model, region)
    return _power_mass(model.alpha, region.r_lo, region.r_hi) * model.spectral.cap_weight(region.cap)


def nu_eval(model: PowerLawModel, region: RadialCapRegion, method: str = "closed",
            tol: float = 1e-12) -> float:
    """Mass of a radial cap under ``nu``.

    The sphere atom is counted whenever ``r_lo <= 1 <= r_hi``; a cap whose
    inner radius is exactly 1 therefore picks up the whole spectral mass.
    """
    _check_dim(model, region)
    a = model.alpha
    hi = min(region.r_hi, 1.0)
    if method == "closed":
        radial = _power_mass(a, region.r_lo, hi)
    elif method == "quadrature":
        radial = 0.0
        if hi > region.r_lo:
            radial = tanh_sinh(lambda r: a * r ** (-a - 1.0), region.r_lo, hi, tol=tol, rel_tol=1e-14)
    else:
        raise ValueError(f"unknown method {method!r}")
    if region.r_lo <= 1.0 <= region.r_hi:
        radial += 1.0
    return radial * model.spectral.cap_weight(region.cap)


class NuKMethod(str, enum.Enum):
    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class NuK:
    """Evaluator settings for the k-fold convolution of ``nu``."""

    model: PowerLawModel
    k: int
    method: NuKMethod = NuKMethod.QUADRATURE
    samples: int = 1_000_000
    seed: int = 0
    tol: float = 1e-10

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        object.__setattr__(self, "method", NuKMethod(self.method))
        if self.method is NuKMethod.QUADRATURE and (self.model.dim != 1 or self.k > 3):
            raise ValueError("exact quadrature is available for d=1 and k<=3; use monte_carlo")


def atom_sum_boundary(model: PowerLawModel, k: int, region: RadialCapRegion) -> bool:
    """True if some sum of ``k`` spectral atoms sits on the boundary of ``region``.

    Such sums are atoms of the k-fold convolution, so the region would not be
    a continuity set.
    """
    atoms = model.spectral.merged_atoms()
    if not atoms:
        return False
    cap = region.cap
    for combo in product(range(len(atoms)), repeat=k):
        total = sum(atoms[i][0] for i in combo)
        norm = float(np.linalg.norm(total))
        if abs(norm - region.r_lo) <= BOUNDARY_TOL or abs(norm - region.r_hi) <= BOUNDARY_TOL:
            return True
        if norm > 0 and region.r_lo <= norm <= region.r_hi:
            if cap.on_boundary((total / norm)[None, :])[0]:
                return True
    return False


def nu_k_eval(nuk: NuK, region: RadialCapRegion) -> LimitValue:
    """Mass of a radial cap under the k-fold convolution of ``nu``.

    Every summand of a tuple whose sum has norm above ``r_lo`` must itself have
    norm above ``eta = r_lo - (k - 1)``; both methods restrict to that set.
    """
    model, k = nuk.model, nuk.k
    _check_dim(model, region)
    if region.r_lo <= k - 1:
        raise ValueError(f"inner radius {region.r_lo} must exceed k-1={k - 1} for a finite mass")
    if k == 1:
        return LimitValue(nu_eval(model, region), None, "closed")
    if atom_sum_boundary(model, k, region):
        raise AssumptionError("region boundary carries an atom of the convolution (not a continuity set)")
    if nuk.method is NuKMethod.QUADRATURE:
        return LimitValue(_nu_k_quadrature_1d(model, k, region, nuk.tol), None, "quadrature")
    return _nu_k_monte_carlo(nuk, region)


def _nu_k_quadrature_1d(model: PowerLawModel, k: int, region: RadialCapRegion, tol: float) -> float:
    a = model.alpha
    lo, hi = region.r_lo, region.r_hi
    eta = lo - (k - 1)

    def block(m: int, s: float) -> float:
        # continuous part of gamma, m-fold, on {lo < s + sum r <= hi} with r in (eta, 1]
        if m == 0:
            return 1.0 if lo < s <= hi else 0.0
        if m == 1:
            return _power_mass(a, max(eta, lo - s), min(1.0, hi - s))
        cuts = [eta, 1.0]
        for edge in (lo, hi):
            if math.isinf(edge):
                continue
            for i in range(m):
                c = edge - s - (i + (m - 1 - i) * eta)
                if eta < c < 1.0:
                    cuts.append(c)

        def integrand(r):
            return a * r ** (-a - 1.0) * np.array([block(m - 1, s + ri) for ri in np.atleast_1d(r)])

        return integrate_pieces(integrand, cuts, tol=tol)

    radial = sum(math.comb(k, j) * block(k - j, float(j)) for j in range(k + 1))
    w_plus = sum(w for s, w in model.spectral.point_atoms() if s[0] > 0)
    w_minus = 1.0 - w_plus
    cap = region.cap
    total = 0.0
    for sign, w in ((1.0, w_plus), (-1.0, w_minus)):
        if w > 0 and cap.contains_directions(np.array([[sign]]))[0]:
            total += w**k
    return total * radial


def _nu_k_monte_carlo(nuk: NuK, region: RadialCapRegion) -> LimitValue:
    model, k = nuk.model, nuk.k
    a = model.alpha
    eta = region.r_lo - (k - 1)
    hits = 0
    done = 0
    chunk = 0
    while done < nuk.samples:
        m = min(_MC_CHUNK, nuk.samples - done)
        rng = np.random.default_rng(np.random.SeedSequence(nuk.seed, spawn_key=(chunk,)))
        total = np.zeros((m, model.dim))
        for _ in range(k):
            r = np.minimum(eta * (1.0 - rng.random(m)) ** (-1.0 / a), 1.0)
            total += r[:, None] * model.spectral.sample(rng, m)
        hits += int(region.contains(total if model.dim > 1 else total[:, 0]).sum())
        done += m
        chunk += 1
    scale = eta ** (-a * k)
    p = hits / nuk.samples
    return LimitValue(scale * p, scale * math.sqrt(p * (1.0 - p) / nuk.samples), "monte_carlo")


class StableMode(str, enum.Enum):
    ANALYTIC_SYMMETRIC = "analytic_symmetric"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class StableLimit:
    """Sign probabilities of the stable limit of untruncated normalized sums.

    Monte Carlo mode approximates the limit by a sum of ``n_approx`` copies of
    ``H``; the bias of that approximation is not quantified, only the sampling
    error is reported.  The events used are invariant under positive scaling,
    so the choice of normalizer does not matter.
    """

    model: PowerLawModel
    n_approx: int = 1000
    mode: StableMode = StableMode.ANALYTIC_SYMMETRIC
    samples: int = 20_000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", StableMode(self.mode))
        if self.mode is StableMode.ANALYTIC_SYMMETRIC and not self.model.spectral.is_symmetric():
            raise AssumptionError("analytic stable limit requires a symmetric model")

    def normalizer(self, n: int) -> float:
        a = self.model.alpha
        return n ** (1.0 / a) if a < 2 else math.sqrt(n)

    def draw(self) -> np.ndarray:
        """``samples`` approximate draws of the limit, shape ``(samples, d)``."""
        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        out = np.empty((self.samples, self.model.dim))
        block = max(1, _MC_CHUNK // self.n_approx)
        for start in range(0, self.samples, block):
            b = min(self.samples, start + block) - start
            h = sample_h(self.model, rng, b * self.n_approx).reshape(b, self.n_approx, -1)
            out[start:start + b] = h.sum(axis=1) / self.normalizer(self.n_approx)
        return out


def gamma_k_eval(model: PowerLawModel, stable: StableLimit, k: int, cap: SphereCap) -> LimitValue:
    """Boundary limit measure of a sphere cap.

    ``k = 1`` integrates ``P(<x, V> >= 0)`` against the spectral measure over
    the cap; ``k >= 2`` keeps only atoms, each weighted by its mass to the
    power ``k`` and divided by ``k!``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if cap.dim != model.dim:
        raise ValueError("cap dimension does not match the model")
    atoms = [(s, w) for s, w in model.spectral.merged_atoms()
             if cap.contains_directions(s[None, :])[0]]
    coef = [w if k == 1 else w**k / math.factorial(k) for _, w in atoms]
    iso = model.spectral.continuous_weight if k == 1 else 0.0

    if stable.mode is StableMode.ANALYTIC_SYMMETRIC:
        value = 0.5 * sum(coef) + (0.5 * iso * cap.area_fraction() if iso else 0.0)
        return LimitValue(value, None, "analytic_symmetric")

    v = stable.draw()
    g = np.zeros(len(v))
    for (s, _), c in zip(atoms, coef):
        g += c * (v @ s >= 0)
    if iso:
        rng = np.random.default_rng(np.random.SeedSequence(stable.seed, spawn_key=(1,)))
        x = rng.standard_normal(v.shape)
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        g += iso * (cap.contains_directions(x) & (np.einsum("ij,ij->i", x, v) >= 0))
    se = float(g.std(ddof=1) / math.sqrt(len(g))) if len(g) > 1 else math.inf
    return LimitValue(float(g.mean()), se, "monte_carlo")


def prokhorov_bound(n_terms: int, bound_c: float, variance: float, lam: float) -> float:
    """``exp(-(lam / 2C) * asinh(C lam / (2 variance)))``."""
    if n_terms < 1 or not bound_c > 0 or not variance > 0 or not lam > 0:
        raise ValueError("prokhorov_bound needs n_terms >= 1 and positive C, variance, lambda")
    return math.exp(-(lam / (2.0 * bound_c)) * math.asinh(bound_c * lam / (2.0 * variance)))


@dataclass(frozen=True)
class XtCheck:
    exact_ratio: float
    limit: float
    empirical: float | None = None
    std_error: float | None = None


def xt_limit_check(model: PowerLawModel, schedule: TruncationSchedule, t: float,
                   region: RadialCapRegion, samples: int = 0, seed: int = 0) -> XtCheck:
    """Compare ``P(X^t/t in A) / P(|H| > t)`` with ``nu(A)``.

    ``X^t`` truncates a single ``H`` at level ``t`` with overshoot ``L`` from
    the schedule.  The exact ratio is closed form; ``samples > 0`` adds a
    direct Monte Carlo estimate.
    """
    if not 0 < region.r_lo < 1:
        raise ValueError("xt_limit_check needs 0 < r_lo < 1")
    _check_dim(model, region)
    a = model.alpha
    p_big = min(1.0, t ** (-a))
    hi = min(region.r_hi, 1.0)
    cont = 0.0
    if hi > region.r_lo:
        cont = max(t * region.r_lo, 1.0) ** (-a) - max(t * hi, 1.0) ** (-a)
    light = schedule.light_tail
    # X^t/t has norm 1 + L/t on the event |H| > t
    upper = light.cdf(t * (region.r_hi - 1.0)) if math.isfinite(region.r_hi) else 1.0
    shell = upper - light.cdf(t * (region.r_lo - 1.0))
    if light.is_zero:
        shell = 1.0 if region.r_lo < 1.0 <= region.r_hi else 0.0
    exact = (cont + p_big * shell) * model.spectral.cap_weight(region.cap) / p_big

    empirical = se = None
    if samples > 0:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        h = sample_h(model, rng, samples)
        norms = np.linalg.norm(h, axis=1)
        big = norms > t
        x = h.copy()
        x[big] = h[big] / norms[big][:, None] * (t + light.sample(rng, int(big.sum())))[:, None]
        x /= t
        hit = region.contains(x if model.dim > 1 else x[:, 0])
        p = hit.mean()
        empirical = float(p / p_big)
        se = float(math.sqrt(p * (1 - p) / samples) / p_big)
    return XtCheck(exact, nu_eval(model, region), empirical, se)


def _check_dim(model: PowerLawModel, region: RadialCapRegion) -> None:
    if region.dim != model.dim:
        raise ValueError(f"region dimension {region.dim} does not match model dimension {model.dim}")
