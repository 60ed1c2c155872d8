"""Acceptance gate: one test per quantitative criterion, one line printed each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines live.
Every tolerance is pinned here; the statistical checks use fixed seeds so
the whole gate is deterministic.
"""

import time

import numpy as np
import pytest

from matsde import calculus, fxmarket, integrator, sde
from matsde.brownian import (
    SeedSpec,
    TimeGrid,
    coarsen,
    empirical_covariance,
    sample_path,
    sample_paths,
)
from matsde.matspace import basis_matrix

SEED = SeedSpec(20_260_810)


def report(index, label, ok, extra=""):
    status = "PASS" if ok else "FAIL"
    tail = f" ({extra})" if extra else ""
    print(f"ACCEPTANCE {index:>2}: {status} - {label}{tail}", flush=True)
    assert ok, f"criterion {index}: {label}{tail}"


@pytest.fixture(scope="module")
def linear_ensemble():
    """Shared M=1000 solve of the linear benchmark for the bound criteria."""
    c = sde.linear_test_coefficients()
    ens = sde.solve_ensemble(c, np.eye(2), 2, TimeGrid.uniform(1.0, 64), 1000, SEED)
    assert not ens.aborted
    return c, ens


def test_01_covariance_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    hits = 0
    for k in range(10):
        u = rng.normal(size=(2, 2))
        v = rng.normal(size=(2, 2))
        est = empirical_covariance(
            2, 1.0, u, v, 20_000, SEED.with_path(20_000 * k)
        )
        hits += abs(est.estimate - est.target) <= 3.0 * est.stderr
    elapsed = time.perf_counter() - t0
    report(
        1,
        "driver covariance t<u,v> over 10 random pairs",
        hits >= 9 and elapsed < 10.0,
        f"{hits}/10 within 3se, {elapsed:.1f}s",
    )


def test_02_isometry_factor_n():
    t0 = time.perf_counter()
    rep = integrator.verify_isometry(
        integrator.AdaptedProcess.constant(np.eye(2)),
        2,
        TimeGrid.uniform(1.0, 16),
        10_000,
        SEED,
    )
    elapsed = time.perf_counter() - t0
    within = abs(rep.lhs - 4.0) <= 3.0 * rep.stderr
    factor_exact = rep.rhs == rep.n * rep.time_integral
    rhs_exact = rep.rhs == pytest.approx(4.0, rel=1e-12)
    report(
        2,
        "isometry E||int V dB||^2 = n int E||V||^2 with V = I",
        within and factor_exact and rhs_exact and elapsed < 10.0,
        f"lhs={rep.lhs:.4f}, rhs={rep.rhs:.4f}, se={rep.stderr:.4f}, {elapsed:.1f}s",
    )


def test_03_quadratic_variation_and_martingale():
    v = np.array([[1.0, 0.0], [1.0, 1.0]])
    grid = TimeGrid.uniform(1.0, 32)
    # compensator formula: left quadrature of V V^T
    path = sample_path(2, grid, SEED)
    qv = integrator.quadratic_variation_exact(
        integrator.AdaptedProcess.constant(v), path, 1.0
    )
    qv_ok = np.allclose(qv, np.array([[1.0, 1.0], [1.0, 2.0]]), atol=1e-13)
    e11 = basis_matrix(1, 1, 2)
    rows = integrator.verify_qv_martingale(
        integrator.AdaptedProcess.constant(v),
        e11,
        e11,
        grid,
        10_000,
        SEED,
        checkpoints=[0.25, 0.5, 1.0],
    )
    mart_ok = all(abs(r.residual) <= 3.0 * r.stderr for r in rows)
    worst = max(abs(r.residual) / r.stderr for r in rows)
    report(
        3,
        "quadratic variation compensator keeps Gamma(t) centred",
        qv_ok and mart_ok,
        f"worst |residual|/se = {worst:.2f}",
    )


def test_04_moment_bound(linear_ensemble):
    c, ens = linear_ensemble
    kappa = lambda t: c.kappa1(t) + c.kappa2(t)
    rep = sde.moment_bound_check(ens, np.eye(2), kappa, 1.0, 2)
    report(
        4,
        "second-moment sup bound (1 + 3||x||^2) exp(6 (T + 4n) int kappa)",
        rep.passed and rep.margin > 10.0,
        f"lhs={rep.lhs:.3f}, bound={rep.bound:.3e}, margin={rep.margin:.1e}x",
    )


def test_05_monotone_moment_bound(linear_ensemble):
    c, ens = linear_ensemble
    rep = sde.monotone_moment_bound_check(ens, np.eye(2), c.kappa, c.kappa0, 1.0)
    report(
        5,
        "monotone-case bound (1 + 2||x||^2) exp(2 int (kappa + 64 kappa0))",
        rep.passed,
        f"lhs={rep.lhs:.3f}, bound={rep.bound:.3e}",
    )


def test_06_picard_contraction():
    c = sde.linear_test_coefficients()
    lam, alpha = sde.find_contraction_lambda(c, 1.0, 2)
    fine = sample_paths(2, TimeGrid.uniform(1.0, 128), SEED, 500)
    drivers = [coarsen(d, 2) for d in fine]
    x0 = np.eye(2)
    res = sde.picard_iterate(c, x0, drivers, 8, sde.WeightedNormSpec(lam))
    norms = res.successive_norms
    ratios = [b / a for a, b in zip(norms, norms[1:]) if a > 1e-14]
    ratio_ok = all(r <= alpha for r in ratios)

    em = np.stack([sde.euler_maruyama(c, x0, d).states for d in drivers])
    em_fine = np.stack([sde.euler_maruyama(c, x0, d).states[::2] for d in fine])

    def sup_l2(diff):
        return float(np.sqrt(np.mean(np.sum(diff * diff, axis=(2, 3)), axis=0)).max())

    gap = sup_l2(res.final - em)
    refinement = sup_l2(em - em_fine)
    report(
        6,
        "fixed-point iteration contracts and lands on the explicit scheme",
        alpha < 1.0 and ratio_ok and gap <= 10.0 * refinement,
        f"lambda={lam:g}, alpha={alpha:.3f}, max ratio={max(ratios):.3f}, "
        f"gap={gap:.2e} <= 10x{refinement:.2e}",
    )


def test_07_truncation_consistency():
    c = sde.Coefficients(b=lambda t, x: 2.0 * x, sigma=lambda t, x: 0.5 * x)
    agreements = 0
    for i in range(100):
        driver = sample_path(2, TimeGrid.uniform(1.0, 32), SEED.with_path(i))
        agreements += sde.consistency_under_truncation(c, np.eye(2), 2.0, driver)
    report(
        7,
        "solutions truncated at R and R+1 agree bitwise up to the exit node",
        agreements == 100,
        f"{agreements}/100 seeds",
    )


def test_08_ito_formula():
    n = 2
    horizon = 1.0
    c = sde.constant_coefficients(np.zeros((n, n)), np.eye(n))
    f = calculus.hs_norm_sq_field()
    x0 = np.eye(n)
    grid = TimeGrid.uniform(horizon, 32)
    m = 10_000
    finals = np.empty(m)
    gaps = np.empty(m)
    for i in range(m):
        sol = sde.euler_maruyama(c, x0, sample_path(n, grid, SEED.with_path(i)))
        finals[i] = calculus.ito_residual(f, c, sol).final
        gaps[i] = f.value(horizon, sol.final) - f.value(0.0, x0)
    res_se = finals.std(ddof=1) / np.sqrt(m)
    gap_se = gaps.std(ddof=1) / np.sqrt(m)
    residual_ok = abs(finals.mean()) <= 3.0 * res_se
    gap_ok = abs(gaps.mean() - 4.0) <= 3.0 * gap_se  # n^2 T = 4

    lin = sde.linear_test_coefficients()
    rms = []
    for steps in (16, 32, 64):
        acc = 0.0
        for i in range(300):
            sol = sde.euler_maruyama(
                lin, x0, sample_path(n, TimeGrid.uniform(horizon, steps), SEED.with_path(i))
            )
            acc += calculus.ito_residual(f, lin, sol).final ** 2
        rms.append(np.sqrt(acc / 300))
    slope = np.polyfit(np.log([1 / 16, 1 / 32, 1 / 64]), np.log(rms), 1)[0]
    report(
        8,
        "change-of-variable residual centred, E V gap = n^2 T, refines at >= 0.4",
        residual_ok and gap_ok and slope >= 0.4,
        f"mean residual={finals.mean():+.4f} (se {res_se:.4f}), "
        f"gap={gaps.mean():.3f}, order={slope:.2f}",
    )


def test_09_taylor_expansion():
    rng = np.random.default_rng(3)
    y = rng.normal(size=(2, 2))
    d = rng.normal(size=(2, 2))
    cubic = calculus.trace_cube_field()
    hs = np.array([1e-1, 1e-2, 1e-3])
    rems = np.array([calculus.taylor_remainder(cubic, y, y + h * d) for h in hs])
    slope = np.polyfit(np.log(hs), np.log(rems), 1)[0]
    quad_rem = calculus.taylor_remainder(
        calculus.hs_norm_sq_field(), y, y + rng.normal(size=(2, 2))
    )
    report(
        9,
        "second-order expansion: cubic remainder slope >= 2.8, quadratic exact",
        slope >= 2.8 and quad_rem <= 1e-10,
        f"slope={slope:.2f}, quadratic remainder={quad_rem:.1e}",
    )


def test_10_strong_order():
    t0 = time.perf_counter()
    fit = sde.strong_error_order(
        sde.linear_test_coefficients(), np.eye(2), 16, 4, 200, SEED
    )
    det = sde.strong_error_order(
        sde.Coefficients(b=lambda t, x: 0.5 * x, sigma=lambda t, x: np.zeros_like(x)),
        np.eye(2),
        16,
        4,
        1,
        SEED,
    )
    elapsed = time.perf_counter() - t0
    report(
        10,
        "self-refinement order: 1/2 with multiplicative noise, 1 without",
        0.35 <= fit.order <= 0.65 and 0.9 <= det.order <= 1.1 and elapsed < 60.0,
        f"stochastic={fit.order:.2f}, deterministic={det.order:.2f}, {elapsed:.1f}s",
    )


def test_11_derivative_agreement():
    rng = np.random.default_rng(5)
    worst = 0.0
    for name, factory in calculus.FIELD_SUITE.items():
        f = factory()
        for _ in range(100):
            t = float(rng.uniform(0.0, 1.0))
            x = rng.normal(size=(2, 2))
            fd_g = calculus._fd_gradient(f.value, t, x, f.fd_step)
            an_g = calculus.gradient(f, t, x)
            scale = max(1.0, float(np.max(np.abs(an_g))))
            worst = max(worst, float(np.max(np.abs(an_g - fd_g))) / scale)
            fd_h = calculus._fd_hessian_of_value(f.value, t, x, f.fd_step)
            an_h = calculus.hessian(f, t, x)
            scale = max(1.0, float(np.max(np.abs(an_h))))
            worst = max(worst, float(np.max(np.abs(an_h - fd_h))) / scale)
    report(
        11,
        "analytic and finite-difference derivatives agree on the field suite",
        worst <= 1e-4,
        f"worst relative gap={worst:.2e} over 100 probes x 5 fields",
    )


def test_12_fx_loop_closure(tmp_path):
    import datetime as dt

    drift = np.array([[0.0, 0.5], [-0.4, 0.0]])
    vol = np.array([[0.0, 0.05], [0.08, 0.0]])
    spec = fxmarket.FxModelSpec("entrywise-geometric", drift, vol)
    s0 = fxmarket.validate_rate_matrix(
        [[1.0, 1.2], [0.8, 1.0]], dt.date(2024, 1, 1)
    )
    steps = 10_000
    grid = TimeGrid.uniform(steps / 365.0, steps)
    series = fxmarket.simulate_market(spec, s0, grid, 1, SEED)[0]

    validated = all(
        fxmarket.validate_rate_matrix(m.entries, m.date) is not None
        for m in series.matrices
    )
    fit = fxmarket.estimate_coefficients(series, "entrywise-geometric")
    off = ~np.eye(2, dtype=bool)
    drift_err = float(np.max(np.abs(fit.drift[off] - drift[off]) / np.abs(drift[off])))
    vol_err = float(np.max(np.abs(fit.vol[off] - vol[off]) / vol[off]))

    out = tmp_path / "series.csv"
    fxmarket.export_csv(series, out)
    again = fxmarket.ingest_csv(out)
    round_trip = (
        again.currencies == series.currencies
        and again.dates == series.dates
        and np.array_equal(again.values, series.values)
    )
    report(
        12,
        "simulate-estimate closes the loop; outputs validate; CSV round-trips",
        validated and drift_err <= 0.10 and vol_err <= 0.10 and round_trip,
        f"drift err={drift_err:.1%}, vol err={vol_err:.1%}",
    )
