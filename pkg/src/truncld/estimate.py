"""Monte Carlo estimators for the truncated-sum limit theorems.

Each estimator draws independent rows in fixed-size chunks.  Chunk ``i`` of
stream ``key`` always uses ``SeedSequence(seed, spawn_key=(*key, i))``, and
chunk results are concatenated in index order, so results do not depend on
the number of worker processes.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from scipy.stats import norm

from .errors import AssumptionError
from .limits import (NuK, NuKMethod, StableLimit, StableMode, atom_sum_boundary, gamma_k_eval,
                     mu_ratio, nu_k_eval)
from .model import (PowerLawModel, RegimeKind, TruncationSchedule, _block_rows, _clip_1d,
                    _signed_pareto_1d, _truncate_rows, classify_regime, sample_h, sample_radius,
                    sample_sums, tail_prob, truncated_mean)
from .ratefn import (RateFunction, beta_n, d_matrix, legendre, ldp_scale, ldp_speed, speed_window)
from .regions import RadialCapRegion, SphereCap
from .tilted import TruncatedLine

DEFAULT_CHUNK = 10_000
CI_LEVEL = 0.95
WILSON_BELOW = 50
OVERLAP_WARN = 0.3


class Sampler(str, enum.Enum):
    PLAIN = "plain"
    KTAGGED = "ktagged"
    TILTED = "tilted"


@dataclass
class EstimateResult:
    estimate: float
    se: float
    ci_level: float
    ci_lo: float
    ci_hi: float
    samples: int
    method: str
    ess: float | None = None
    hits: int = 0
    limit: float | None = None
    warnings: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "estimate": self.estimate,
            "se": self.se,
            "ci": {"level": self.ci_level, "lo": self.ci_lo, "hi": self.ci_hi},
            "samples": self.samples,
            "ess": self.ess,
            "hits": self.hits,
            "method": self.method,
            "limit": self.limit,
            "warnings": list(self.warnings),
        }


@dataclass
class SlopeFit:
    """Rate extrapolated from estimated log-probabilities on an ``n`` grid.

    ``points`` holds ``(n, speed, p_hat, -log(p_hat)/speed)``.  ``rate`` is
    ``None`` when the fit could not be made, with the reason in ``failure``.
    """

    mode: str
    points: list[tuple[int, float, float, float]]
    rate: float | None
    residual: float | None
    failure: str | None = None

    def to_record(self) -> dict:
        return {"mode": self.mode, "rate": self.rate, "residual": self.residual,
                "failure": self.failure,
                "points": [{"n": n, "speed": s, "p": p, "y": y} for n, s, p, y in self.points]}


def fit_rate(mode: str, ns, speeds, probs) -> SlopeFit:
    """Fit an exponential rate.

    ``mode='ldp'`` regresses ``-log p / speed`` on ``1/speed`` and reads the
    rate off the intercept; ``mode='moderate'`` regresses ``-log p`` on the
    speed and reads the rate off the slope.
    """
    ns = [int(n) for n in ns]
    speeds = np.asarray(speeds, dtype=float)
    probs = np.asarray(probs, dtype=float)
    with np.errstate(divide="ignore"):
        ys = -np.log(probs) / speeds
    points = [(n, float(s), float(p), float(y)) for n, s, p, y in zip(ns, speeds, probs, ys)]
    if len(set(ns)) < 3:
        return SlopeFit(mode, points, None, None, "need at least 3 distinct n values")
    if np.any(probs <= 0):
        return SlopeFit(mode, points, None, None,
                        "zero probability at some n (no hits, or the threshold is beyond the support)")
    if mode == "ldp":
        X, y = 1.0 / speeds, ys
    elif mode == "moderate":
        X, y = speeds, -np.log(probs)
    else:
        raise ValueError("mode must be 'ldp' or 'moderate'")
    A = np.column_stack([np.ones_like(X), X])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    rate = float(coef[0] if mode == "ldp" else coef[1])
    return SlopeFit(mode, points, rate, float(np.sqrt(np.mean(resid**2))))


# --------------------------------------------------------------------------- engine


@dataclass(frozen=True)
class _RowJob:
    """Picklable unit of work: draw ``chunk`` rows for one chunk index."""

    kind: str
    model: PowerLawModel
    schedule: TruncationSchedule
    n: int
    reps: int
    chunk: int
    seed: int
    key: tuple[int, ...]
    k: int = 0
    tau: float = 0.0
    theta: float = 0.0

    def __call__(self, idx: int):
        m = min(self.chunk, self.reps - idx * self.chunk)
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(*self.key, idx)))
        if self.kind == "plain":
            return sample_sums(self.model, self.schedule, self.n, m, rng), None
        if self.kind == "ktagged":
            return _tagged_rows(self.model, self.schedule, self.n, self.k, self.tau, m, rng)
        if self.kind == "tilted":
            line = TruncatedLine.from_model(self.model, self.schedule, self.n)
            return _tilted_rows(line, self.theta, self.n, m, rng)
        raise ValueError(self.kind)


def _run(job: _RowJob, workers: int):
    n_chunks = -(-job.reps // job.chunk)
    if workers <= 1 or n_chunks == 1:
        parts = [job(i) for i in range(n_chunks)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(n_chunks)))
    sums = np.concatenate([p[0] for p in parts])
    logw = None if parts[0][1] is None else np.concatenate([p[1] for p in parts])
    return sums, logw


def _tagged_rows(model, schedule, n, k, tau, m, rng):
    """Rows with ``k`` summands forced above ``tau``; returns sums and log-weights.

    The weight ``C(n,k) q**k / C(N,k)`` with ``q = P(|X| > tau)`` and ``N`` the
    number of summands above ``tau`` in the row makes the estimator unbiased
    for events that need at least ``k`` such summands.
    """
    d = model.dim
    m_n = schedule.M(n)
    light = schedule.light_tail
    base = max(tau, 1.0)
    sums = np.zeros((m, d))
    counts = np.full(m, k)
    # tagged summands: the radius conditioned to exceed tau
    r = base * sample_radius(model.alpha, rng, m * k)
    h = (r[:, None] * model.spectral.sample(rng, m * k)).reshape(m, k, d)
    sums += _truncate_rows(h, m_n, light, rng).sum(axis=1)
    rest = n - k
    if rest > 0:
        for start, stop in _block_rows(m, rest * d):
            b = stop - start
            if d == 1:
                x = _signed_pareto_1d(model, rng, (b, rest))
                counts[start:stop] += (np.abs(x) > tau).sum(axis=1)
                sums[start:stop, 0] += _clip_1d(x, m_n, light, rng).sum(axis=1)
            else:
                h = sample_h(model, rng, b * rest).reshape(b, rest, d)
                counts[start:stop] += (np.linalg.norm(h, axis=-1) > tau).sum(axis=1)
                sums[start:stop] += _truncate_rows(h, m_n, light, rng).sum(axis=1)
    q = tail_prob(model, tau)
    log_c_nk = _log_comb(n, k)
    logw = log_c_nk + k * math.log(q) - (gammaln(counts + 1) - gammaln(k + 1) - gammaln(counts - k + 1))
    return sums, logw


def _tilted_rows(line: TruncatedLine, theta: float, n: int, m: int, rng):
    kappa, _ = line.cumulant(theta)
    sums = np.empty((m, 1))
    for start, stop in _block_rows(m, n):
        b = stop - start
        x = line.sample_tilted(theta, rng, b * n).reshape(b, n)
        sums[start:stop, 0] = x.sum(axis=1)
    logw = -theta * sums[:, 0] + n * kappa
    return sums, logw


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


# --------------------------------------------------------------------------- summaries


def wilson_interval(hits: int, trials: int, level: float = CI_LEVEL) -> tuple[float, float]:
    z = norm.ppf(0.5 + level / 2)
    p = hits / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def summarize(hit: np.ndarray, logw: np.ndarray | None, scale: float, method: str,
              level: float = CI_LEVEL) -> EstimateResult:
    """Point estimate, standard error and CI of ``mean(hit * w) / scale``."""
    samples = len(hit)
    hits = int(hit.sum())
    z = norm.ppf(0.5 + level / 2)
    if logw is None:
        p = hits / samples
        se = math.sqrt(p * (1 - p) / samples)
        if hits < WILSON_BELOW:
            lo, hi = wilson_interval(hits, samples, level)
        else:
            lo, hi = p - z * se, p + z * se
        return EstimateResult(p / scale, se / scale, level, lo / scale, hi / scale, samples,
                              method, None, hits)
    w = np.where(hit, np.exp(np.where(hit, logw, 0.0)), 0.0)
    p = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    nz = w[w > 0]
    ess = float(nz.sum() ** 2 / (nz**2).sum()) if len(nz) else 0.0
    res = EstimateResult(p / scale, se / scale, level, (p - z * se) / scale, (p + z * se) / scale,
                         samples, method, ess, hits)
    if hits < WILSON_BELOW:
        res.warnings.append(f"only {hits} weighted hits; normal interval may be unreliable")
    return res


# --------------------------------------------------------------------------- checks


def require_soft(model: PowerLawModel, schedule: TruncationSchedule) -> None:
    regime = classify_regime(model, schedule)
    if regime.kind is RegimeKind.INTERMEDIATE:
        raise AssumptionError("intermediate regime (rho = 1/alpha) is not supported; "
                              "soft regime requires lim nP(|H|>M_n)=0")
    if regime.kind is not RegimeKind.SOFT:
        raise AssumptionError("soft regime requires lim nP(|H|>M_n)=0")
    if not regime.side_conditions_ok:
        raise AssumptionError("soft regime with alpha>=2 requires M_n to outgrow b_n (rho > 1/2)")


def require_hard(model: PowerLawModel, schedule: TruncationSchedule) -> None:
    regime = classify_regime(model, schedule)
    if regime.kind is RegimeKind.INTERMEDIATE:
        raise AssumptionError("intermediate regime (rho = 1/alpha) is not supported; "
                              "hard regime requires lim nP(|H|>M_n)=infinity")
    if regime.kind is not RegimeKind.HARD:
        raise AssumptionError("hard regime requires lim nP(|H|>M_n)=infinity")


def b_exponent(model: PowerLawModel, schedule: TruncationSchedule) -> float:
    """Growth exponent of ``b_n`` (for ``alpha > 2`` the extra log factor makes it a strict bound)."""
    a = model.alpha
    if a < 2:
        return 1.0 / a
    if a == 2:
        return (1.0 + schedule.gamma_md) / 2.0
    return 0.5


def ratio_window_ok(model, schedule, lambda_exponent: float) -> bool:
    return b_exponent(model, schedule) < lambda_exponent < schedule.exponent


def single_summand_prob(model: PowerLawModel, schedule: TruncationSchedule,
                        region: RadialCapRegion) -> float:
    """Exact ``P(X_1 in region)`` for a row of length one (truncation at ``M_1 = coeff``)."""
    a = model.alpha
    m = schedule.M(1)
    hi = min(region.r_hi, m)
    cont = 0.0
    if hi > region.r_lo:
        cont = max(region.r_lo, 1.0) ** (-a) - max(hi, 1.0) ** (-a)
    light = schedule.light_tail
    if light.is_zero:
        shell = 1.0 if region.r_lo < m <= region.r_hi else 0.0
    else:
        upper = light.cdf(region.r_hi - m) if math.isfinite(region.r_hi) else 1.0
        shell = upper - light.cdf(region.r_lo - m)
    return (cont + tail_prob(model, m) * shell) * model.spectral.cap_weight(region.cap)


def _contains(region: RadialCapRegion, pts: np.ndarray) -> np.ndarray:
    return region.contains(pts[:, 0] if pts.shape[1] == 1 else pts)


# --------------------------------------------------------------------------- estimators


def est_ratio_window(model: PowerLawModel, schedule: TruncationSchedule, lambda_exponent: float,
                     region: RadialCapRegion, n: int, reps: int, seed: int, workers: int = 1,
                     chunk_reps: int = DEFAULT_CHUNK) -> EstimateResult:
    """``P(S_n / lambda_n in A) / (n P(|H| > lambda_n))`` with ``lambda_n = n**lambda_exponent``."""
    require_soft(model, schedule)
    if not ratio_window_ok(model, schedule, lambda_exponent):
        raise AssumptionError(
            f"lambda exponent {lambda_exponent} outside the admissible window "
            f"({b_exponent(model, schedule)}, {schedule.exponent}) between b_n and M_n")
    if region.r_lo < 1:
        raise ValueError("ratio window regions need r_lo >= 1")
    lam = float(n) ** lambda_exponent
    job = _RowJob("plain", model, schedule, n, reps, chunk_reps, seed, (1, n))
    sums, _ = _run(job, workers)
    res = summarize(_contains(region.scaled(lam), sums), None, n * tail_prob(model, lam), "plain")
    res.limit = mu_ratio(model, region)
    return res


def kth_order_limit(model: PowerLawModel, k: int, region: RadialCapRegion,
                    mc_samples: int = 2_000_000, seed: int = 0) -> float:
    if model.dim == 1 and k <= 3:
        nuk = NuK(model, k, NuKMethod.QUADRATURE)
    else:
        nuk = NuK(model, k, NuKMethod.MONTE_CARLO, samples=mc_samples, seed=seed)
    return nu_k_eval(nuk, region).value / math.factorial(k)


def est_kth_order(model: PowerLawModel, schedule: TruncationSchedule, k: int,
                  region: RadialCapRegion, n: int, reps: int, seed: int,
                  method: Sampler = Sampler.PLAIN, workers: int = 1,
                  chunk_reps: int = DEFAULT_CHUNK, tag_level: float | None = None) -> EstimateResult:
    """``P(S_n / M_n in A) / (n P(|H| > M_n))**k`` against ``nu^(k)(A)/k!``.

    Tagged sampling forces ``k`` summands above ``tag_level * M_n`` (default
    ``r_lo - (k - 1)``) and is unbiased for the event restricted to rows with at
    least ``k`` such summands.
    """
    require_soft(model, schedule)
    method = Sampler(method)
    if not k - 1 < region.r_lo < k:
        raise ValueError(f"region inner radius must lie in ({k - 1}, {k})")
    if k > n:
        raise ValueError("k cannot exceed the row length")
    if not schedule.light_tail.satisfies_kth_order(k):
        raise AssumptionError("k-th order limit requires P(L>x)=o(P(|H|>x)^(k-1))")
    if atom_sum_boundary(model, k, region) or (k == 1 and region.r_hi == 1.0):
        raise AssumptionError("region boundary carries an atom of the limit measure (not a continuity set)")
    m_n = schedule.M(n)
    n_p = n * tail_prob(model, m_n)
    scaled = region.scaled(m_n)
    if method is Sampler.PLAIN:
        job = _RowJob("plain", model, schedule, n, reps, chunk_reps, seed, (2, n, k))
    elif method is Sampler.KTAGGED:
        level = region.r_lo - (k - 1) if tag_level is None else tag_level
        if not 0 < level <= region.r_lo - (k - 1):
            raise ValueError("tag_level must lie in (0, r_lo - (k-1)]")
        tau = level * m_n
        job = _RowJob("ktagged", model, schedule, n, reps, chunk_reps, seed, (3, n, k), k=k, tau=tau)
    else:
        raise ValueError("est_kth_order supports plain and ktagged sampling")
    sums, logw = _run(job, workers)
    res = summarize(_contains(scaled, sums), logw, n_p**k, method.value)
    if method is Sampler.KTAGGED and n_p > OVERLAP_WARN:
        res.warnings.append(f"nP(|H|>M_n) = {n_p:.3g} > {OVERLAP_WARN}: overlap terms are not small")
    res.limit = kth_order_limit(model, k, region)
    return res


def est_boundary(model: PowerLawModel, schedule: TruncationSchedule, k: int, cap: SphereCap,
                 n: int, reps: int, seed: int, workers: int = 1, chunk_reps: int = DEFAULT_CHUNK,
                 stable: StableLimit | None = None) -> EstimateResult:
    """``P(|S_n| > k M_n, S_n/|S_n| in cap) / (n P(|H| > M_n))**k`` against ``Gamma_k(cap)``."""
    require_soft(model, schedule)
    if k < 1:
        raise ValueError("k must be at least 1")
    m_n = schedule.M(n)
    n_p = n * tail_prob(model, m_n)
    if stable is None:
        mode = StableMode.ANALYTIC_SYMMETRIC if model.spectral.is_symmetric() else StableMode.MONTE_CARLO
        stable = StableLimit(model, mode=mode, seed=seed)
    region = RadialCapRegion(k * m_n, math.inf, cap.axis, cap.half_angle)
    job = _RowJob("plain", model, schedule, n, reps, chunk_reps, seed, (4, n, k))
    sums, _ = _run(job, workers)
    res = summarize(_contains(region, sums), None, n_p**k, "plain")
    ref = gamma_k_eval(model, stable, k, cap)
    res.limit = ref.value
    if k >= 2 and not model.spectral.merged_atoms():
        res.warnings.append("no spectral atoms: the limit is 0, only the upper CI is informative")
    return res


def _ray_direction(primary: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    for v in (primary, fallback):
        nv = float(np.linalg.norm(v))
        if nv > 1e-12:
            return v / nv
    e = np.zeros(len(primary))
    e[0] = 1.0
    return e


@dataclass
class RateExperiment:
    fit: SlopeFit
    reference: float
    direction: np.ndarray
    per_n: list[EstimateResult]
    lam_hat: np.ndarray | None = None


def _half_space_estimate(model, schedule, n, u, threshold, reps, seed, key, sampler, workers,
                         chunk_reps, tilt_target=None):
    """``P(<u, S_n> >= threshold)`` by plain or tilted sampling."""
    if sampler is Sampler.PLAIN:
        job = _RowJob("plain", model, schedule, n, reps, chunk_reps, seed, (5, *key))
        sums, logw = _run(job, workers)
        method = "plain"
    elif sampler is Sampler.TILTED:
        line = TruncatedLine.from_model(model, schedule, n)
        edge = line.support_probability(n, float(u[0]) * threshold)
        if edge is not None:
            res = EstimateResult(edge, 0.0, CI_LEVEL, edge, edge, 0, "exact")
            res.warnings.append("threshold at or beyond the support of the row sum; probability is exact")
            return res
        theta = tilt_target if tilt_target is not None else line.saddle(n, float(u[0]) * threshold)
        job = _RowJob("tilted", model, schedule, n, reps, chunk_reps, seed, (6, *key), theta=theta)
        sums, logw = _run(job, workers)
        method = "tilted"
    else:
        raise ValueError("half-space estimates support plain and tilted sampling")
    hit = sums @ u >= threshold
    return summarize(hit, logw, 1.0, method)


def est_ldp_slope(model: PowerLawModel, schedule: TruncationSchedule, x, n_grid, reps: int,
                  seed: int, sampler: Sampler = Sampler.PLAIN, workers: int = 1,
                  chunk_reps: int = DEFAULT_CHUNK, tilt: str = "saddle") -> RateExperiment:
    """Fit the hard-regime rate at ``x`` from half-space probabilities along an ``n`` grid.

    The event is ``<u, S_n/(n M_n P(|H|>M_n))> >= <u, x>`` with ``u`` the unit
    maximizer direction of the conjugate at ``x``.
    """
    require_hard(model, schedule)
    sampler = Sampler(sampler)
    if model.alpha == 2:
        raise AssumptionError("alpha=2 hard-regime LDP needs E|H|^2<infinity, which fails for the exact Pareto radius")
    if model.alpha > 2:
        raise AssumptionError("hard-regime LDP experiments need alpha < 2")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rf = RateFunction(model)
    conj = legendre(rf, x)
    u = _ray_direction(conj.lam_hat if not conj.diverged else x - rf.grad(np.zeros_like(x)), x)
    per_n, speeds, probs = [], [], []
    for n in n_grid:
        n = int(n)
        threshold = float(u @ x) * ldp_scale(model, schedule, n)
        theta = None
        if sampler is Sampler.TILTED and tilt == "asymptotic":
            theta = float(u[0] * np.linalg.norm(conj.lam_hat)) / schedule.M(n)
        res = _half_space_estimate(model, schedule, n, u, threshold, reps, seed, (n,), sampler,
                                   workers, chunk_reps, theta)
        per_n.append(res)
        speeds.append(ldp_speed(model, schedule, n))
        probs.append(res.estimate)
    fit = fit_rate("ldp", [int(n) for n in n_grid], speeds, probs)
    for res in per_n:
        res.limit = conj.value
    return RateExperiment(fit, conj.value, u, per_n, conj.lam_hat)


def est_moderate(model: PowerLawModel, schedule: TruncationSchedule, kappa: float, x, n_grid,
                 reps: int, seed: int, sampler: Sampler = Sampler.PLAIN, workers: int = 1,
                 chunk_reps: int = DEFAULT_CHUNK) -> RateExperiment:
    """Fit the quadratic rate from ``P(<u, (S_n - E S_n)/c_n> >= <u, x>)`` against ``beta_n``."""
    require_hard(model, schedule)
    sampler = Sampler(sampler)
    window = speed_window(model, schedule)
    if not window.contains(kappa):
        raise AssumptionError(f"c_n exponent {kappa} outside the admissible window ({window.lo}, {window.hi})")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    D = d_matrix(model)
    Dinv = np.linalg.pinv(D)
    reference = 0.5 * float(x @ Dinv @ x)
    u = _ray_direction(Dinv @ x, x)
    per_n, speeds, probs = [], [], []
    for n in n_grid:
        n = int(n)
        centre = n * truncated_mean(model, schedule, n)
        threshold = float(u @ x) * float(n) ** kappa + float(u @ centre)
        res = _half_space_estimate(model, schedule, n, u, threshold, reps, seed, (7, n), sampler,
                                   workers, chunk_reps)
        res.limit = reference
        per_n.append(res)
        speeds.append(beta_n(model, schedule, n, kappa))
        probs.append(res.estimate)
    fit = fit_rate("moderate", [int(n) for n in n_grid], speeds, probs)
    return RateExperiment(fit, reference, u, per_n)


def est_probability(model: PowerLawModel, schedule: TruncationSchedule, region: RadialCapRegion,
                    n: int, reps: int, seed: int, workers: int = 1,
                    chunk_reps: int = DEFAULT_CHUNK) -> EstimateResult:
    """Plain estimate of ``P(S_n in region)`` with no normalization."""
    job = _RowJob("plain", model, schedule, n, reps, chunk_reps, seed, (8, n))
    sums, _ = _run(job, workers)
    return summarize(_contains(region, sums), None, 1.0, "plain")

