"""Experiment runner: every verification and simulation as a subcommand.

Usage:

    matsde verify <identity> [--config FILE] [flags]
    matsde simulate [--config FILE] [flags]
    matsde fx {ingest,estimate,simulate,combine} [flags]

Configuration is a flat JSON document; command-line flags override file
values, which override built-in defaults.  Every report record embeds the
fully resolved configuration, carries no timestamps, and is appended as one
JSON line, so identical configs and seeds produce byte-identical outputs.

Exit codes: 0 pass, 1 check failed, 2 usage or config error, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import os
import sys
from pathlib import Path

import numpy as np

from matsde import calculus, fxmarket, integrator, sde
from matsde.brownian import (
    SeedSpec,
    TimeGrid,
    empirical_covariance,
    sample_path,
    sample_paths,
)
from matsde.matspace import save_matrix_csv

IDENTITIES = (
    "covariance",
    "isometry",
    "qv-martingale",
    "ito-formula",
    "taylor",
    "moment-bound",
    "monotone-bound",
    "picard-contraction",
    "truncation-consistency",
    "strong-order",
    "conditions",
)

DEFAULTS = {
    "dim": 2,
    "horizon": 1.0,
    "steps": 32,
    "paths": 10_000,
    "seed": 20_260_810,
    "samples": 10_000,
    "radius": 3.0,
    "pairs": 10,
    "iterations": 8,
    "picard_paths": 500,
    "base_steps": 16,
    "levels": 4,
    "order_paths": 200,
    "sweep_seeds": 100,
    "drift": 0.5,
    "vol": 0.3,
    "sigma_level": 3.0,  # statistical acceptance band in standard errors
    "out": "matsde-out",
    "threads": 0,  # 0 = available cores
}


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    return cfg


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(load_config(getattr(args, "config", None)))
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    if getattr(args, "report", None) is not None:
        cfg["report"] = args.report
    if cfg["threads"] == 0:
        cfg["threads"] = os.cpu_count() or 1
    if cfg["paths"] < 1 or cfg["steps"] < 1 or cfg["dim"] < 1:
        raise ValueError("paths, steps and dim must be positive")
    return cfg


def _seed(cfg: dict) -> SeedSpec:
    return SeedSpec(int(cfg["seed"]))


def _grid(cfg: dict) -> TimeGrid:
    return TimeGrid.uniform(float(cfg["horizon"]), int(cfg["steps"]))


def _linear(cfg: dict) -> sde.Coefficients:
    return sde.linear_test_coefficients(float(cfg["drift"]), float(cfg["vol"]))


# ---------------------------------------------------------------------------
# verify identities: each returns (lhs, rhs, stderr, passed, detail)
# ---------------------------------------------------------------------------


def _verify_covariance(cfg: dict):
    n = int(cfg["dim"])
    paths = int(cfg["paths"])
    pairs = int(cfg["pairs"])
    rng = np.random.default_rng(int(cfg["seed"]))
    hits = 0
    rows = []
    for k in range(pairs):
        u = rng.normal(size=(n, n))
        v = rng.normal(size=(n, n))
        est = empirical_covariance(
            n, float(cfg["horizon"]), u, v, paths, _seed(cfg).with_path(paths * k)
        )
        ok = abs(est.estimate - est.target) <= float(cfg["sigma_level"]) * est.stderr
        hits += ok
        rows.append(
            {
                "estimate": est.estimate,
                "target": est.target,
                "stderr": est.stderr,
                "within_3se": ok,
            }
        )
    required = pairs - 1 if pairs > 1 else 1
    return float(hits), float(required), 0.0, hits >= required, {"pairs": rows}


def _verify_isometry(cfg: dict):
    n = int(cfg["dim"])
    rep = integrator.verify_isometry(
        integrator.AdaptedProcess.constant(np.eye(n)),
        n,
        _grid(cfg),
        int(cfg["paths"]),
        _seed(cfg),
    )
    exact_factor = rep.rhs == rep.n * rep.time_integral
    within = abs(rep.lhs - rep.rhs) <= float(cfg["sigma_level"]) * rep.stderr
    return (
        rep.lhs,
        rep.rhs,
        rep.stderr,
        within and exact_factor,
        {"time_integral": rep.time_integral, "dimension_factor_exact": exact_factor},
    )


def _verify_qv_martingale(cfg: dict):
    n = int(cfg["dim"])
    horizon = float(cfg["horizon"])
    steps = int(cfg["steps"])
    if steps % 4:
        raise ValueError("steps must be divisible by 4 for quarter checkpoints")
    v = np.eye(n)
    v[1, 0] = 1.0
    e11 = np.zeros((n, n))
    e11[0, 0] = 1.0
    rows = integrator.verify_qv_martingale(
        integrator.AdaptedProcess.constant(v),
        e11,
        e11,
        _grid(cfg),
        int(cfg["paths"]),
        _seed(cfg),
        checkpoints=[horizon / 4, horizon / 2, horizon],
    )
    worst = max(rows, key=lambda r: abs(r.residual))
    level = float(cfg["sigma_level"])
    ok = all(
        (abs(r.residual) <= level * r.stderr) if r.stderr > 0 else r.residual == 0.0
        for r in rows
    )
    return (
        worst.residual,
        0.0,
        worst.stderr,
        ok,
        {"checkpoints": [{"t": r.t, "residual": r.residual, "stderr": r.stderr} for r in rows]},
    )


def _verify_ito_formula(cfg: dict):
    n = int(cfg["dim"])
    horizon = float(cfg["horizon"])
    paths = int(cfg["paths"])
    c = sde.constant_coefficients(np.zeros((n, n)), np.eye(n))
    f = calculus.hs_norm_sq_field()
    x0 = np.eye(n)
    grid = _grid(cfg)
    finals = np.empty(paths)
    gaps = np.empty(paths)
    seed = _seed(cfg)
    for i in range(paths):
        sol = sde.euler_maruyama(c, x0, sample_path(n, grid, seed.with_path(i)))
        finals[i] = calculus.ito_residual(f, c, sol).final
        gaps[i] = f.value(horizon, sol.final) - f.value(0.0, x0)
    res_err = float(finals.std(ddof=1) / np.sqrt(paths))
    gap_err = float(gaps.std(ddof=1) / np.sqrt(paths))
    target = n * n * horizon
    level = float(cfg["sigma_level"])
    residual_ok = abs(finals.mean()) <= level * res_err
    gap_ok = abs(gaps.mean() - target) <= level * gap_err

    # refinement half-rate on the state-dependent family
    lin = _linear(cfg)
    rms = []
    for steps in (16, 32, 64):
        acc = 0.0
        for i in range(300):
            sol = sde.euler_maruyama(
                lin,
                x0,
                sample_path(n, TimeGrid.uniform(horizon, steps), seed.with_path(i)),
            )
            acc += calculus.ito_residual(f, lin, sol).final ** 2
        rms.append(float(np.sqrt(acc / 300)))
    slope = float(
        np.polyfit(np.log([horizon / 16, horizon / 32, horizon / 64]), np.log(rms), 1)[0]
    )
    return (
        float(finals.mean()),
        0.0,
        res_err,
        residual_ok and gap_ok and slope >= 0.4,
        {
            "value_gap": float(gaps.mean()),
            "value_gap_target": target,
            "value_gap_stderr": gap_err,
            "refinement_rms": rms,
            "refinement_order": slope,
        },
    )


def _verify_taylor(cfg: dict):
    rng = np.random.default_rng(int(cfg["seed"]))
    y = rng.normal(size=(2, 2))
    d = rng.normal(size=(2, 2))
    cubic = calculus.trace_cube_field()
    hs = np.array([1e-1, 1e-2, 1e-3])
    rems = np.array([calculus.taylor_remainder(cubic, y, y + h * d) for h in hs])
    slope = float(np.polyfit(np.log(hs), np.log(rems), 1)[0])
    quad_rem = calculus.taylor_remainder(
        calculus.hs_norm_sq_field(), y, y + rng.normal(size=(2, 2))
    )
    return (
        slope,
        2.8,
        0.0,
        slope >= 2.8 and quad_rem <= 1e-10,
        {"cubic_remainders": rems.tolist(), "quadratic_remainder": quad_rem},
    )


def _verify_moment_bound(cfg: dict):
    n = int(cfg["dim"])
    c = _linear(cfg)
    ens = sde.solve_ensemble(
        c,
        np.eye(n),
        n,
        _grid(cfg),
        min(int(cfg["paths"]), 1000),
        _seed(cfg),
        workers=int(cfg["threads"]),
    )
    kappa = lambda t: c.kappa1(t) + c.kappa2(t)
    rep = sde.moment_bound_check(ens, np.eye(n), kappa, float(cfg["horizon"]), n)
    return rep.lhs, rep.bound, 0.0, rep.passed, {"margin": rep.margin}


def _verify_monotone_bound(cfg: dict):
    n = int(cfg["dim"])
    c = _linear(cfg)
    ens = sde.solve_ensemble(
        c,
        np.eye(n),
        n,
        _grid(cfg),
        min(int(cfg["paths"]), 1000),
        _seed(cfg),
        workers=int(cfg["threads"]),
    )
    rep = sde.monotone_moment_bound_check(
        ens, np.eye(n), c.kappa, c.kappa0, float(cfg["horizon"])
    )
    return rep.lhs, rep.bound, 0.0, rep.passed, {"margin": rep.margin}


def _verify_picard(cfg: dict):
    n = int(cfg["dim"])
    horizon = float(cfg["horizon"])
    c = _linear(cfg)
    lam, alpha = sde.find_contraction_lambda(c, horizon, n)
    fine = sample_paths(
        n,
        TimeGrid.uniform(horizon, 2 * int(cfg["steps"])),
        _seed(cfg),
        int(cfg["picard_paths"]),
    )
    from matsde.brownian import coarsen

    drivers = [coarsen(d, 2) for d in fine]
    x0 = np.eye(n)
    res = sde.picard_iterate(
        c, x0, drivers, int(cfg["iterations"]), sde.WeightedNormSpec(lam)
    )
    norms = res.successive_norms
    ratios = [b / a for a, b in zip(norms, norms[1:]) if a > 1e-14]
    max_ratio = max(ratios) if ratios else 0.0
    em = np.stack([sde.euler_maruyama(c, x0, d).states for d in drivers])
    em_fine = np.stack([sde.euler_maruyama(c, x0, d).states[::2] for d in fine])

    def sup_l2(diff):
        return float(np.sqrt(np.mean(np.sum(diff * diff, axis=(2, 3)), axis=0)).max())

    gap = sup_l2(res.final - em)
    refinement = sup_l2(em - em_fine)
    passed = max_ratio <= alpha and gap <= 10.0 * refinement
    return (
        max_ratio,
        alpha,
        0.0,
        passed,
        {
            "lambda": lam,
            "successive_norms": norms,
            "em_gap": gap,
            "em_refinement_error": refinement,
        },
    )


def _verify_truncation(cfg: dict):
    n = int(cfg["dim"])
    c = sde.Coefficients(b=lambda t, x: 2.0 * x, sigma=lambda t, x: 0.5 * x)
    seeds = int(cfg["sweep_seeds"])
    grid = _grid(cfg)
    seed = _seed(cfg)
    agreements = 0
    for i in range(seeds):
        driver = sample_path(n, grid, seed.with_path(i))
        agreements += sde.consistency_under_truncation(c, np.eye(n), 2.0, driver)
    return (
        float(agreements),
        float(seeds),
        0.0,
        agreements == seeds,
        {"radius": 2.0},
    )


def _verify_strong_order(cfg: dict):
    fit = sde.strong_error_order(
        _linear(cfg),
        np.eye(int(cfg["dim"])),
        int(cfg["base_steps"]),
        int(cfg["levels"]),
        int(cfg["order_paths"]),
        _seed(cfg),
        horizon=float(cfg["horizon"]),
    )
    det = sde.strong_error_order(
        sde.Coefficients(
            b=lambda t, x: float(cfg["drift"]) * x,
            sigma=lambda t, x: np.zeros_like(x),
        ),
        np.eye(int(cfg["dim"])),
        int(cfg["base_steps"]),
        int(cfg["levels"]),
        1,
        _seed(cfg),
        horizon=float(cfg["horizon"]),
    )
    passed = (
        fit.order is not None
        and 0.35 <= fit.order <= 0.65
        and det.order is not None
        and 0.9 <= det.order <= 1.1
    )
    return (
        fit.order if fit.order is not None else -1.0,
        0.5,
        0.0,
        passed,
        {
            "stochastic_errors": list(fit.errors),
            "deterministic_order": det.order,
            "deterministic_errors": list(det.errors),
        },
    )


def _verify_conditions(cfg: dict):
    reports = sde.check_conditions(
        _linear(cfg),
        int(cfg["dim"]),
        int(cfg["samples"]),
        float(cfg["radius"]),
        float(cfg["horizon"]),
        master_seed=int(cfg["seed"]),
    )
    worst = min(r.worst_margin for r in reports)
    return (
        worst,
        0.0,
        0.0,
        all(r.passed for r in reports),
        {
            "conditions": [
                {
                    "condition": r.condition,
                    "samples": r.samples,
                    "worst_margin": r.worst_margin,
                    "pass": r.passed,
                }
                for r in reports
            ]
        },
    )


VERIFIERS = {
    "covariance": _verify_covariance,
    "isometry": _verify_isometry,
    "qv-martingale": _verify_qv_martingale,
    "ito-formula": _verify_ito_formula,
    "taylor": _verify_taylor,
    "moment-bound": _verify_moment_bound,
    "monotone-bound": _verify_monotone_bound,
    "picard-contraction": _verify_picard,
    "truncation-consistency": _verify_truncation,
    "strong-order": _verify_strong_order,
    "conditions": _verify_conditions,
}


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _append_report(cfg: dict, record: dict) -> Path:
    path = Path(cfg.get("report") or (_out_dir(cfg) / "report.jsonl"))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record, sort_keys=True, default=float) + "\n")
    return path


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    lhs, rhs, stderr, passed, detail = VERIFIERS[args.identity](cfg)
    record = {
        "identity": args.identity,
        "n": int(cfg["dim"]),
        "grid": {"horizon": float(cfg["horizon"]), "steps": int(cfg["steps"])},
        "paths": int(cfg["paths"]),
        "lhs": lhs,
        "rhs": rhs,
        "stderr": stderr,
        "pass": bool(passed),
        "detail": detail,
        "config": cfg,
    }
    path = _append_report(cfg, record)
    status = "PASS" if passed else "FAIL"
    print(
        f"{args.identity}: {status} (lhs={lhs:.6g}, rhs={rhs:.6g}, "
        f"stderr={stderr:.3g}) -> {path}"
    )
    return 0 if passed else 1


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    n = int(cfg["dim"])
    c = _linear(cfg) if cfg.get("family", "linear") == "linear" else None
    if c is None:
        raise ValueError(f"unknown coefficient family {cfg.get('family')!r}")
    ens = sde.solve_ensemble(
        c,
        np.eye(n),
        n,
        _grid(cfg),
        int(cfg["paths"]),
        _seed(cfg),
        workers=int(cfg["threads"]),
    )
    if ens.paths == 0:
        raise RuntimeError("every path blew up")
    out = _out_dir(cfg)
    csv_path = out / "ensemble.csv"
    header = ",".join(
        ["path_id", "scheme", "t"]
        + [f"e{i}{j}" for i in range(1, n + 1) for j in range(1, n + 1)]
    )
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for pid, sol in enumerate(ens.solutions):
            for t, state in zip(sol.grid.nodes, sol.states):
                cells = ",".join(repr(float(x)) for x in state.ravel())
                f.write(f"{pid},{sol.scheme},{float(t)!r},{cells}\n")
    final_norms = np.sqrt(np.sum(ens.states[:, -1] ** 2, axis=(1, 2)))
    summary = {
        "paths": int(cfg["paths"]),
        "completed": ens.paths,
        "blow_ups": len(ens.aborted),
        "final_norm_mean": float(final_norms.mean()),
        "final_norm_variance": float(final_norms.var(ddof=1))
        if final_norms.size > 1
        else 0.0,
        "config": cfg,
    }
    summary_path = out / "summary.json"
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(summary, f, sort_keys=True, indent=2)
        f.write("\n")
    print(f"simulate: {ens.paths} paths -> {csv_path}, {summary_path}")
    return 0


def _fx_ingest(args: argparse.Namespace) -> int:
    series = fxmarket.ingest_csv(args.input)
    if args.warn_crossed:
        for m in series.matrices:
            fxmarket.validate_rate_matrix(m.entries, m.date, warn_crossed=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    series_path = out / "series.csv"
    fxmarket.export_csv(series, series_path)
    summary = {
        "currencies": list(series.currencies),
        "n": series.n,
        "dates": len(series.matrices),
        "first_date": series.dates[0].isoformat(),
        "last_date": series.dates[-1].isoformat(),
    }
    with open(out / "series-summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, sort_keys=True, indent=2)
        f.write("\n")
    print(f"ingest: {series.n} currencies, {len(series.matrices)} dates -> {series_path}")
    return 0


def _fx_estimate(args: argparse.Namespace) -> int:
    series = fxmarket.ingest_csv(args.input)
    spec = fxmarket.estimate_coefficients(series, args.family)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = {
        "family": spec.family,
        "currencies": list(series.currencies),
        "drift": spec.drift.tolist(),
        "vol": spec.vol.tolist(),
    }
    if spec.anchor is not None:
        model["anchor"] = spec.anchor.tolist()
    path = out / "model.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model, f, sort_keys=True, indent=2)
        f.write("\n")
    print(f"estimate: {spec.family} model -> {path}")
    return 0


def _fx_simulate(args: argparse.Namespace) -> int:
    with open(args.params, "r", encoding="utf-8") as f:
        model = json.load(f)
    spec = fxmarket.FxModelSpec(
        model["family"],
        np.asarray(model["drift"], dtype=float),
        np.asarray(model["vol"], dtype=float),
        np.asarray(model["anchor"], dtype=float) if "anchor" in model else None,
    )
    series = fxmarket.ingest_csv(args.start)
    s0 = series.matrices[-1]
    grid = TimeGrid.uniform(args.days / 365.0, args.days)
    ensemble = fxmarket.simulate_market(
        spec,
        s0,
        grid,
        args.paths,
        SeedSpec(args.seed),
        start_date=s0.date,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "fx-ensemble.csv"
    currencies = model.get("currencies", list(series.currencies))
    with open(path, "w", encoding="utf-8") as f:
        f.write("date,base,quote,bid,ask,path_id\n")
        for pid, sim in enumerate(ensemble):
            for m in sim.matrices:
                for i in range(sim.n):
                    for j in range(i + 1, sim.n):
                        f.write(
                            f"{m.date.isoformat()},{currencies[i]},{currencies[j]},"
                            f"{float(m.entries[j, i])!r},{float(m.entries[i, j])!r},"
                            f"{pid}\n"
                        )
    print(f"fx simulate: {args.paths} paths x {args.days} days -> {path}")
    return 0


def _fx_combine(args: argparse.Namespace) -> int:
    series = fxmarket.ingest_csv(args.input)
    by_date = {m.date: m for m in series.matrices}
    try:
        first = by_date[dt.date.fromisoformat(args.date1)]
        second = by_date[dt.date.fromisoformat(args.date2)]
    except KeyError as missing:
        raise ValueError(f"date {missing} not in the series") from None
    combined = fxmarket.combine_matrices(first, second, args.mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"combined-{args.mode}.csv"
    save_matrix_csv(path, combined.entries)
    print(f"fx combine: {args.date1} + {args.date2} ({args.mode}) -> {path}")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--paths", type=int, help="Monte Carlo paths")
    parser.add_argument("--steps", type=int, help="time steps")
    parser.add_argument("--dim", type=int, help="matrix dimension n")
    parser.add_argument("--horizon", type=float, help="time horizon T")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--report", help="report JSONL path (appended)")
    parser.add_argument("--threads", type=int, help="worker cap (0 = cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matsde",
        description="Monte Carlo verification and simulation of matrix-valued SDEs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run a named identity check")
    p_verify.add_argument("identity", choices=IDENTITIES)
    _add_common(p_verify)
    p_verify.set_defaults(run=cmd_verify)

    p_sim = sub.add_parser("simulate", help="solve an SDE ensemble to CSV")
    _add_common(p_sim)
    p_sim.set_defaults(run=cmd_simulate)

    p_fx = sub.add_parser("fx", help="exchange-rate data and simulation")
    fx_sub = p_fx.add_subparsers(dest="fx_command", required=True)

    p_ing = fx_sub.add_parser("ingest", help="read and normalize a quote CSV")
    p_ing.add_argument("--input", required=True)
    p_ing.add_argument("--out", default="matsde-out")
    p_ing.add_argument(
        "--warn-crossed",
        action="store_true",
        help="warn on pairs whose buy and sell quotes imply a free round trip",
    )
    p_ing.set_defaults(run=_fx_ingest)

    p_est = fx_sub.add_parser("estimate", help="fit per-entry dynamics")
    p_est.add_argument("--input", required=True)
    p_est.add_argument(
        "--family",
        choices=("entrywise-geometric", "additive-ou"),
        default="entrywise-geometric",
    )
    p_est.add_argument("--out", default="matsde-out")
    p_est.set_defaults(run=_fx_estimate)

    p_fxs = fx_sub.add_parser("simulate", help="simulate rate-matrix paths")
    p_fxs.add_argument("--params", required=True, help="model JSON from estimate")
    p_fxs.add_argument("--start", required=True, help="series CSV; last date seeds s0")
    p_fxs.add_argument("--days", type=int, default=250)
    p_fxs.add_argument("--paths", type=int, default=1)
    p_fxs.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    p_fxs.add_argument("--out", default="matsde-out")
    p_fxs.set_defaults(run=_fx_simulate)

    p_comb = fx_sub.add_parser("combine", help="merge triangles of two dates")
    p_comb.add_argument("--input", required=True)
    p_comb.add_argument("--date1", required=True)
    p_comb.add_argument("--date2", required=True)
    p_comb.add_argument(
        "--mode", choices=("buy-then-sell", "sell-then-buy"), required=True
    )
    p_comb.add_argument("--out", default="matsde-out")
    p_comb.set_defaults(run=_fx_combine)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.run(args)
    except (ValueError, OSError, RuntimeError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
