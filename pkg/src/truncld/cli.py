"""Command line runner: ``truncld run|validate|list-experiments``.

Exit codes: 0 success, 1 runtime error, 2 refusal (invalid config or a
violated model/regime assumption).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENTS, ExperimentConfig, load_config
from .errors import AssumptionError, ConfigError
from .estimate import (RateExperiment, Sampler, b_exponent, est_boundary, est_kth_order,
                       est_ldp_slope, est_moderate, est_ratio_window, ratio_window_ok)
from .limits import (NuK, NuKMethod, StableLimit, StableMode, atom_sum_boundary, mu_ratio,
                     nu_eval, nu_k_eval, xt_limit_check)
from .model import RegimeKind, classify_regime, norming_a, norming_b, tail_prob
from .ratefn import d_matrix, speed_window
from .report import ResultRow, convergence_svg, fmt, write_results, write_table

THEOREMS = {
    "ratio_window": ("soft_truncation_window", "P(S_n/lambda_n in A)/(nP(|H|>lambda_n)) vs the mu-ratio"),
    "kth_order": ("kth_order_soft_truncation", "P(S_n/M_n in A)/(nP(|H|>M_n))^k vs nu^(k)(A)/k!"),
    "boundary": ("boundary_case", "P(|S_n|>kM_n, direction in cap)/(nP)^k vs Gamma_k(cap)"),
    "ldp_slope": ("hard_truncation_ldp", "rate of S_n/(nM_nP) half-space probabilities vs Lambda*(x)"),
    "moderate": ("moderate_deviations", "rate of (S_n-ES_n)/c_n half-space probabilities vs x'D^-1x/2"),
    "limits_table": ("limit_measures", "nu, nu^(k) and the one-point truncation ratio on regions"),
    "regime_report": ("regime_classification", "soft/hard/intermediate verdict and normalizing sequences"),
}

LIMITS_HEADER = ["k", "r_lo", "r_hi", "axis", "half_angle", "mu_ratio", "nu", "nu_k",
                 "nu_k_over_kfact", "std_error", "method"]
REGIME_HEADER = ["n", "M_n", "nP_exceed", "a_n", "b_n"]


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("WORKER_COUNT")
    return int(env) if env else 1


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("OUTPUT_DIR")
    return Path(env) if env else Path(cfg.output_dir)


def _row(n, res, method=None) -> ResultRow:
    return ResultRow(n, res.estimate, res.se, res.ci_lo, res.ci_hi, res.limit, method or res.method)


def _rate_rows(exp: RateExperiment, ns, speeds, walls) -> list[ResultRow]:
    """Per-n empirical rates ``-log p / speed`` with delta-method errors."""
    rows = []
    for n, speed, res, wall in zip(ns, speeds, exp.per_n, walls):
        p = res.estimate
        if p > 0:
            y = -math.log(p) / speed
            se = res.se / (p * speed)
            lo = -math.log(res.ci_hi) / speed if res.ci_hi > 0 else math.inf
            hi = -math.log(res.ci_lo) / speed if res.ci_lo > 0 else math.inf
        else:
            y = se = lo = hi = math.inf
        rows.append(ResultRow(int(n), y, se, lo, hi, exp.reference, res.method, wall))
    return rows


def _grid_loop(ns, fn):
    rows, records = [], []
    for n in ns:
        t0 = time.perf_counter()
        res = fn(int(n))
        wall = 1e3 * (time.perf_counter() - t0)
        row = _row(int(n), res)
        row.wall_ms = wall
        rows.append(row)
        records.append({"n": int(n), "wall_ms": wall, **res.to_record()})
    return rows, records


def run_experiment(cfg: ExperimentConfig, params, workers: int) -> dict:
    """Run one experiment; returns rows, optional extra table and summary fields."""
    name = cfg.experiment
    strict = name != "limits_table"
    model = cfg.model.build(strict=strict)
    schedule = cfg.schedule.build()
    seed, reps, chunk = cfg.seed, cfg.reps, cfg.chunk_reps
    regime = classify_regime(model, schedule)
    summary = {"regime": regime.kind.value, "side_conditions_ok": regime.side_conditions_ok}
    out = {"rows": [], "table": None, "summary": summary, "ylabel": "estimate"}

    if name == "ratio_window":
        region = params.region.build()
        rows, records = _grid_loop(params.n_grid, lambda n: est_ratio_window(
            model, schedule, params.lambda_exponent, region, n, reps, seed, workers, chunk))
        out.update(rows=rows, ylabel="P(S_n/lambda_n in A) / (n P(|H|>lambda_n))")
        summary.update(limit=mu_ratio(model, region), per_n=records)
    elif name == "kth_order":
        region = params.region.build()
        rows, records = _grid_loop(params.n_grid, lambda n: est_kth_order(
            model, schedule, params.k, region, n, reps, seed, Sampler(params.method), workers, chunk,
            params.tag_level))
        out.update(rows=rows, ylabel=f"P(S_n/M_n in A) / (n P(|H|>M_n))^{params.k}")
        summary.update(k=params.k, limit=rows[0].analytic_limit, per_n=records)
    elif name == "boundary":
        cap = params.cap.build()
        mode = params.stable_mode
        if mode == "auto":
            mode = "analytic_symmetric" if model.spectral.is_symmetric() else "monte_carlo"
        stable = StableLimit(model, params.stable_n, StableMode(mode), params.stable_samples, seed)
        rows, records = _grid_loop(params.n_grid, lambda n: est_boundary(
            model, schedule, params.k, cap, n, reps, seed, workers, chunk, stable))
        out.update(rows=rows, ylabel=f"P(|S_n|>{params.k}M_n, dir in cap) / (nP)^{params.k}")
        summary.update(k=params.k, limit=rows[0].analytic_limit, per_n=records)
        summary["theorem"] = "boundary_case_k1" if params.k == 1 else "boundary_case_k_ge_2"
    elif name in ("ldp_slope", "moderate"):
        t0 = time.perf_counter()
        if name == "ldp_slope":
            exp = est_ldp_slope(model, schedule, params.x, params.n_grid, reps, seed,
                                Sampler(params.sampler), workers, chunk, params.tilt)
            summary["lam_hat"] = exp.lam_hat.tolist()
            ylabel = "-log p_n / (n P(|H|>M_n))"
        else:
            window = speed_window(model, schedule)
            kappa = window.midpoint() if params.kappa == "mid" else float(params.kappa)
            exp = est_moderate(model, schedule, kappa, params.x, params.n_grid, reps, seed,
                               Sampler(params.sampler), workers, chunk)
            summary.update(kappa=kappa, window=window.to_dict(), D=d_matrix(model).tolist())
            ylabel = "-log p_n / beta_n"
        wall = 1e3 * (time.perf_counter() - t0) / len(params.n_grid)
        speeds = [pt[1] for pt in exp.fit.points]
        out.update(rows=_rate_rows(exp, params.n_grid, speeds, [wall] * len(speeds)), ylabel=ylabel)
        summary.update(limit=exp.reference, fit=exp.fit.to_record(), direction=exp.direction.tolist(),
                       per_n=[{"n": int(n), **r.to_record()} for n, r in zip(params.n_grid, exp.per_n)])
    elif name == "limits_table":
        table = []
        records = []
        k = params.k
        for spec in params.regions:
            region = spec.build()
            method = NuKMethod(params.method)
            if method is NuKMethod.QUADRATURE and (model.dim != 1 or k > 3):
                method = NuKMethod.MONTE_CARLO
            nuk = NuK(model, k, method, params.samples, seed)
            val = nu_k_eval(nuk, region)
            nu1 = nu_eval(model, region)
            rec = {"region": region.to_dict(), "mu_ratio": mu_ratio(model, region), "nu": nu1,
                   "nu_k": val.to_dict(), "nu_k_over_kfact": val.value / math.factorial(k)}
            if params.xt_t is not None and 0 < region.r_lo < 1:
                xt = xt_limit_check(model, schedule, params.xt_t, region)
                rec["xt_check"] = {"t": params.xt_t, "exact_ratio": xt.exact_ratio, "limit": xt.limit}
            records.append(rec)
            table.append([fmt(k), fmt(region.r_lo), fmt(region.r_hi),
                          " ".join(fmt(a) for a in region.axis), fmt(region.half_angle),
                          fmt(rec["mu_ratio"]), fmt(nu1), fmt(val.value), fmt(rec["nu_k_over_kfact"]),
                          fmt(val.std_error), val.method])
        out["table"] = (LIMITS_HEADER, table)
        summary.update(k=k, regions=records)
    elif name == "regime_report":
        table, rows = [], []
        for n in params.n_grid:
            m_n = float(schedule.M(n))
            n_p = n * tail_prob(model, m_n)
            b = norming_b(model, schedule, n) if n >= 2 else float("nan")
            table.append([fmt(int(n)), fmt(m_n), fmt(n_p), fmt(norming_a(model, n)), fmt(b)])
            rows.append(ResultRow(int(n), n_p, 0.0, n_p, n_p, None, "exact"))
        out.update(table=(REGIME_HEADER, table), rows=rows, ylabel="n P(|H| > M_n)")
    else:  # pragma: no cover - schema restricts names
        raise ValueError(name)
    summary.setdefault("theorem", THEOREMS[name][0])
    return out


def cmd_run(args) -> int:
    try:
        cfg, params = load_config(args.config)
    except ConfigError as err:
        print(str(err), file=sys.stderr)
        return 2
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.reps is not None:
        updates["reps"] = args.reps
    cfg = cfg.model_copy(update=updates)
    workers = _workers(args)
    if workers < 1:
        print("refused: worker count must be at least 1", file=sys.stderr)
        return 2
    out_dir = _out_dir(args, cfg)
    t0 = time.perf_counter()
    try:
        result = run_experiment(cfg, params, workers)
    except (AssumptionError, ConfigError) as err:
        print(f"refused: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - reported and mapped to exit code 1
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if result["table"] is not None:
            header, table = result["table"]
            write_table(out_dir / "results.csv", header, table)
        else:
            write_results(out_dir / "results.csv", result["rows"])
        if result["rows"]:
            title = f"{cfg.experiment} (alpha={cfg.model.alpha}, rho={cfg.schedule.trunc_exponent})"
            (out_dir / "convergence.svg").write_text(
                convergence_svg(result["rows"], title, result["ylabel"]))
        summary = {
            "experiment": cfg.experiment,
            "version": __version__,
            "config": cfg.model_dump(),
            "seed": cfg.seed,
            "reps": cfg.reps,
            "workers": workers,
            "wall_time_s": time.perf_counter() - t0,
            "rows": [r.to_dict() for r in result["rows"]],
            **result["summary"],
        }
        (out_dir / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    except OSError as err:
        print(f"error: cannot write outputs to {out_dir}: {err}", file=sys.stderr)
        return 1
    print(f"wrote {out_dir / 'results.csv'}")
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def validation_report(cfg: ExperimentConfig, params) -> list[tuple[bool, str]]:
    """Every checked assumption as ``(passed, message)``; never samples."""
    checks: list[tuple[bool, str]] = [(True, "schema")]
    name = cfg.experiment
    try:
        model = cfg.model.build(strict=name != "limits_table")
        checks.append((True, "model assumptions (symmetry at alpha=1, zero mean for alpha>1)"))
    except (AssumptionError, ConfigError) as err:
        checks.append((False, str(err)))
        return checks
    try:
        schedule = cfg.schedule.build()
    except AssumptionError as err:
        checks.append((False, str(err)))
        return checks
    regime = classify_regime(model, schedule)
    need = {"ratio_window": RegimeKind.SOFT, "kth_order": RegimeKind.SOFT, "boundary": RegimeKind.SOFT,
            "ldp_slope": RegimeKind.HARD, "moderate": RegimeKind.HARD}.get(name)
    if need is None:
        checks.append((True, f"regime: {regime.kind.value} (no requirement)"))
    elif regime.kind is RegimeKind.INTERMEDIATE:
        checks.append((False, "regime: intermediate (rho = 1/alpha) is not supported"))
    elif regime.kind is not need:
        cond = "lim nP(|H|>M_n)=0" if need is RegimeKind.SOFT else "lim nP(|H|>M_n)=infinity"
        checks.append((False, f"regime: {need.value} regime requires {cond}; got {regime.kind.value}"))
    else:
        checks.append((True, f"regime: {regime.kind.value}"))
    if need is RegimeKind.SOFT and regime.kind is RegimeKind.SOFT:
        checks.append((regime.side_conditions_ok, "soft-regime side conditions (rho > 1/2 when alpha >= 2)"))

    if name == "ratio_window":
        ok = ratio_window_ok(model, schedule, params.lambda_exponent)
        checks.append((ok, f"lambda_n window: exponent {params.lambda_exponent} in "
                           f"({b_exponent(model, schedule):.6g}, {schedule.exponent:.6g})"))
        checks.append((params.region.r_lo >= 1, "region r_lo >= 1"))
    elif name == "kth_order":
        k = params.k
        region = params.region.build()
        checks.append((k - 1 < region.r_lo < k, f"region r_lo in ({k - 1}, {k})"))
        checks.append((schedule.light_tail.satisfies_kth_order(k),
                       f"L condition P(L>x)=o(P(|H|>x)^{k - 1}) ({schedule.light_tail.kind.value})"))
        checks.append((not atom_sum_boundary(model, k, region), "region is a continuity set of the limit"))
    elif name == "boundary":
        if params.k >= 2:
            checks.append((bool(model.spectral.merged_atoms()),
                           "spectral atoms present (otherwise the k>=2 limit is 0)"))
    elif name in ("ldp_slope", "moderate"):
        if model.alpha == 2:
            checks.append((False, "alpha=2 rejected: hard-regime results need E|H|^2<infinity, "
                                  "but the exact Pareto radius has E|H|^2=infinity at alpha=2"))
        elif name == "ldp_slope":
            checks.append((model.alpha < 2, "hard-regime LDP needs alpha < 2"))
        if name == "ldp_slope" and params.sampler == "tilted":
            ok = model.dim == 1 and model.spectral.continuous_weight == 0 and schedule.light_tail.is_zero
            checks.append((ok, "tilted sampler applicability (d=1, atom-only, L=0)"))
        if name == "moderate" and model.alpha != 2 and regime.kind is RegimeKind.HARD:
            window = speed_window(model, schedule)
            kappa = window.midpoint() if params.kappa == "mid" else float(params.kappa)
            checks.append((window.contains(kappa),
                           f"c_n window: kappa {kappa:.6g} in ({window.lo:.6g}, {window.hi:.6g})"
                           + (" (upper end asymptotic)" if window.asymptotic else "")))
    return checks


def cmd_validate(args) -> int:
    try:
        cfg, params = load_config(args.config)
    except ConfigError as err:
        print("[FAIL] schema")
        for p in err.problems:
            print(f"[FAIL]   {p}")
        return 0
    for ok, msg in validation_report(cfg, params):
        print(f"[{'PASS' if ok else 'FAIL'}] {msg}")
    return 0


def cmd_list(args) -> int:
    for name in EXPERIMENTS:
        theorem, desc = THEOREMS[name]
        print(f"{name:<14} {theorem:<28} {desc}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="truncld", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config and write results")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--reps", type=int)
    run.add_argument("--out", help="output directory (overrides OUTPUT_DIR and the config)")
    run.add_argument("--workers", type=int, help="worker processes (default WORKER_COUNT or 1)")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config's assumptions without sampling")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)

    lst = sub.add_parser("list-experiments", help="list experiment names and what they probe")
    lst.set_defaults(func=cmd_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
