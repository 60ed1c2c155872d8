"""Solvers and condition checks for matrix-valued SDEs.

The equation is dX = b(t, X) dt + sigma(t, X) dB with both coefficients
mapping (time, matrix) to a matrix and the diffusion acting on the driver by
left matrix multiplication.  The explicit scheme, the fixed-point iteration
and the weighted norms all discretize time with left-endpoint sums, so the
iteration's fixed point on a grid coincides with the explicit scheme on that
grid and the two are directly comparable.

Rate functions (Lipschitz, growth, monotone, local) are plain callables of
time; integrals of rates use a composite trapezoid rule with 1024 cells by
default.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from matsde.brownian import (
    MatrixBrownianPath,
    SeedSpec,
    TimeGrid,
    coarsen,
    sample_path,
)
from matsde.matspace import as_square_matrix, hs_norm

__all__ = [
    "RateFn",
    "Coefficients",
    "constant_rate",
    "linear_test_coefficients",
    "constant_coefficients",
    "BlowUpError",
    "SolutionPath",
    "SolutionEnsemble",
    "ProcessEnsemble",
    "WeightedNormSpec",
    "euler_maruyama",
    "solve_ensemble",
    "StrongOrderFit",
    "strong_error_order",
    "weighted_sup_norm",
    "PicardResult",
    "picard_iterate",
    "integrate_rate",
    "contraction_constant",
    "find_contraction_lambda",
    "truncate_coeffs",
    "consistency_under_truncation",
    "MomentBoundReport",
    "moment_bound_check",
    "monotone_moment_bound_check",
    "ConditionReport",
    "check_conditions",
]

RateFn = Callable[[float], float]
CoefficientFn = Callable[[float, np.ndarray], np.ndarray]


def constant_rate(value: float) -> RateFn:
    if value < 0:
        raise ValueError("rates must be nonnegative")
    return lambda t: value


@dataclass(frozen=True)
class Coefficients:
    """Drift and diffusion mappings with declared regularity rates.

    Every rate is optional; checks that need an undeclared rate raise.

    * ``kappa1``: squared-Lipschitz rate of (b, sigma) jointly.
    * ``kappa2``: squared growth of (b, sigma) at the zero matrix.
    * ``kappa``: one-sided monotone rate for 2<x, b> + ||sigma||^2.
    * ``kappaR``: map from a radius to a local squared-Lipschitz rate.
    * ``kappa0``: growth rate of ||sigma||^2 alone.
    """

    b: CoefficientFn
    sigma: CoefficientFn
    kappa1: Optional[RateFn] = None
    kappa2: Optional[RateFn] = None
    kappa: Optional[RateFn] = None
    kappaR: Optional[Callable[[float], RateFn]] = None
    kappa0: Optional[RateFn] = None

    def drift(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self.b(t, x), dtype=float)
        if out.shape != x.shape:
            raise ValueError(f"drift returned shape {out.shape} for {x.shape}")
        return out

    def vol(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self.sigma(t, x), dtype=float)
        if out.shape != x.shape:
            raise ValueError(f"diffusion returned shape {out.shape} for {x.shape}")
        return out


def linear_test_coefficients(drift: float = 0.5, vol: float = 0.3) -> Coefficients:
    """The linear benchmark family b = drift * X, sigma = vol * X.

    Declared rates: squared-Lipschitz 2 (drift^2 + vol^2) (a factor-2 slack
    keeps sampled margins clear of roundoff), zero growth at the origin,
    monotone rate max(2 drift + vol^2, 0), diffusion growth vol^2.
    """
    lip = 2.0 * (drift * drift + vol * vol)
    mono = max(2.0 * drift + vol * vol, 0.0)
    return Coefficients(
        b=lambda t, x: drift * x,
        sigma=lambda t, x: vol * x,
        kappa1=constant_rate(lip),
        kappa2=constant_rate(0.0),
        kappa=constant_rate(mono),
        kappaR=lambda radius: constant_rate(lip),
        kappa0=constant_rate(vol * vol),
    )


def constant_coefficients(b0, sigma0) -> Coefficients:
    """State-independent coefficients; all rates are explicit constants."""
    b0 = as_square_matrix(b0, "b0")
    sigma0 = as_square_matrix(sigma0, "sigma0")
    growth = float(np.sum(b0 * b0) + np.sum(sigma0 * sigma0))
    sq_vol = float(np.sum(sigma0 * sigma0))
    return Coefficients(
        b=lambda t, x: b0,
        sigma=lambda t, x: sigma0,
        kappa1=constant_rate(0.0),
        kappa2=constant_rate(growth),
        kappa=constant_rate(growth + 1.0),
        kappaR=lambda radius: constant_rate(0.0),
        kappa0=constant_rate(sq_vol),
    )


class BlowUpError(RuntimeError):
    """A solve produced a non-finite state."""

    def __init__(self, node_index: int, path_index: Optional[int] = None):
        self.node_index = node_index
        self.path_index = path_index
        where = f"node {node_index}"
        if path_index is not None:
            where += f" of path {path_index}"
        super().__init__(f"solution blew up at {where}")


@dataclass(frozen=True, eq=False)
class SolutionPath:
    grid: TimeGrid
    states: np.ndarray  # shape (nodes, n, n)
    driver: MatrixBrownianPath
    scheme: str

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass(eq=False)
class SolutionEnsemble:
    grid: TimeGrid
    scheme: str
    solutions: tuple[SolutionPath, ...]
    aborted: tuple[tuple[int, int], ...] = ()  # (path index, blow-up node)

    @cached_property
    def states(self) -> np.ndarray:
        return np.stack([s.states for s in self.solutions])

    @property
    def paths(self) -> int:
        return len(self.solutions)


@dataclass(eq=False)
class ProcessEnsemble:
    """Bare grid-indexed ensemble, for norms of differences of iterates."""

    grid: TimeGrid
    states: np.ndarray  # shape (paths, nodes, n, n)


@dataclass(frozen=True)
class WeightedNormSpec:
    """Exponential weight for the sup-in-time L2 norm."""

    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")


def euler_maruyama(c: Coefficients, x0, driver: MatrixBrownianPath) -> SolutionPath:
    """Explicit scheme X_{k+1} = X_k + b dt_k + sigma @ dB_k on the driver grid."""
    x0 = as_square_matrix(x0, "x0")
    if x0.shape[0] != driver.n:
        raise ValueError("initial matrix and driver dimensions differ")
    nodes = driver.grid.nodes
    states = np.empty((nodes.size,) + x0.shape)
    states[0] = x0
    x = x0
    # overflow surfaces as a structured blow-up error, not a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(nodes.size - 1):
            t = float(nodes[k])
            dt = float(nodes[k + 1] - nodes[k])
            db = driver.values[k + 1] - driver.values[k]
            x = x + c.drift(t, x) * dt + c.vol(t, x) @ db
            if not np.all(np.isfinite(x)):
                raise BlowUpError(k + 1)
            states[k + 1] = x
    return SolutionPath(driver.grid, states, driver, "euler-maruyama")


def solve_ensemble(
    c: Coefficients,
    x0,
    n: int,
    grid: TimeGrid,
    paths: int,
    seed: SeedSpec,
    workers: int = 1,
) -> SolutionEnsemble:
    """Solve independent paths at seed indices seed.path_index + i.

    Blown-up paths are recorded in ``aborted`` instead of being silently
    dropped; completed solutions keep their original index order.
    """

    def solve_one(i: int):
        driver = sample_path(n, grid, seed.with_path(seed.path_index + i))
        try:
            return i, euler_maruyama(c, x0, driver), None
        except BlowUpError as err:
            return i, None, err.node_index

    if workers <= 1:
        results = [solve_one(i) for i in range(paths)]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve_one, range(paths)))
    solutions = tuple(sol for _, sol, _ in results if sol is not None)
    aborted = tuple((i, node) for i, _, node in results if node is not None)
    return SolutionEnsemble(grid, "euler-maruyama", solutions, aborted)


@dataclass(frozen=True)
class StrongOrderFit:
    """Self-refinement convergence fit; ``order`` is None for exact schemes."""

    order: Optional[float]
    step_counts: tuple[int, ...]
    errors: tuple[float, ...]


def strong_error_order(
    c: Coefficients,
    x0,
    base_steps: int,
    levels: int,
    paths: int,
    seed: SeedSpec,
    horizon: float = 1.0,
) -> StrongOrderFit:
    """Fit the strong convergence order by self-refinement on shared drivers.

    Each path is driven by one fine Brownian path; every level solves on a
    restriction of that path to 2^j-fold coarser nodes, and each level's
    endpoint error is measured against the next finer level.  Consecutive
    refinement keeps the coarse-to-reference gap constant across levels,
    which is what makes the log2 regression slope of mean error against step
    size an unbiased order estimate.
    """
    if levels < 3:
        raise ValueError("need at least 3 levels to fit a slope")
    x0 = as_square_matrix(x0, "x0")
    n = x0.shape[0]
    fine_steps = base_steps * 2 ** (levels - 1)
    fine_grid = TimeGrid.uniform(horizon, fine_steps)
    counts = [base_steps * 2**j for j in range(levels - 1)]
    errors = np.zeros(levels - 1)
    for i in range(paths):
        fine = sample_path(n, fine_grid, seed.with_path(seed.path_index + i))
        finals = [
            euler_maruyama(c, x0, coarsen(fine, fine_steps // steps)).final
            for steps in counts
        ]
        finals.append(euler_maruyama(c, x0, fine).final)
        for j in range(levels - 1):
            errors[j] += hs_norm(finals[j] - finals[j + 1])
    errors /= paths
    scale = max(1.0, hs_norm(x0))
    if errors.max() <= 1e-13 * scale:
        return StrongOrderFit(None, tuple(counts), tuple(errors))
    h = horizon / np.asarray(counts, dtype=float)
    slope = np.polyfit(np.log2(h), np.log2(errors), 1)[0]
    return StrongOrderFit(float(slope), tuple(counts), tuple(errors))


def weighted_sup_norm(ens, spec: WeightedNormSpec) -> float:
    """max over nodes of exp(-lam t) * sqrt(mean ||u(t)||^2)."""
    states = ens.states
    grid = ens.grid
    if states.ndim == 3:  # single path
        states = states[None]
    mean_sq = np.mean(np.sum(states * states, axis=(2, 3)), axis=0)
    weighted = np.exp(-spec.lam * grid.nodes) * np.sqrt(mean_sq)
    return float(weighted.max())


@dataclass(eq=False)
class PicardResult:
    grid: TimeGrid
    iterates: list[np.ndarray]  # each of shape (paths, nodes, n, n)
    successive_norms: list[float]

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]


def picard_iterate(
    c: Coefficients,
    x0,
    drivers: list[MatrixBrownianPath],
    iterations: int,
    spec: WeightedNormSpec,
) -> PicardResult:
    """Iterate u -> x0 + int b(s, u) ds + int sigma(s, u) dB per driver path.

    Starts from the constant initial guess, uses left-endpoint sums for both
    integrals, and records the weighted norm of each successive difference.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not drivers:
        raise ValueError("need at least one driver path")
    x0 = as_square_matrix(x0, "x0")
    grid = drivers[0].grid
    for d in drivers:
        if d.grid is not grid and not np.array_equal(d.grid.nodes, grid.nodes):
            raise ValueError("all drivers must share one grid")
    n = x0.shape[0]
    p = len(drivers)
    k = len(grid) - 1
    dt = grid.steps
    deltas = np.stack([np.diff(d.values, axis=0) for d in drivers])
    current = np.broadcast_to(x0, (p, k + 1, n, n)).copy()
    iterates = [current]
    norms: list[float] = []
    for _ in range(iterations):
        new = np.empty_like(current)
        new[:, 0] = x0
        for pi in range(p):
            bvals = np.empty((k, n, n))
            svals = np.empty((k, n, n))
            for ki in range(k):
                t = float(grid.nodes[ki])
                u = current[pi, ki]
                bvals[ki] = c.drift(t, u)
                svals[ki] = c.vol(t, u)
            incr = bvals * dt[:, None, None] + np.einsum(
                "kab,kbc->kac", svals, deltas[pi]
            )
            new[pi, 1:] = x0 + np.cumsum(incr, axis=0)
        if not np.all(np.isfinite(new)):
            raise BlowUpError(int(np.argwhere(~np.isfinite(new))[0][1]))
        norms.append(weighted_sup_norm(ProcessEnsemble(grid, new - current), spec))
        iterates.append(new)
        current = new
    return PicardResult(grid, iterates, norms)


def integrate_rate(rate: RateFn, horizon: float, cells: int = 1024) -> float:
    """Composite trapezoid integral of a rate function over [0, horizon]."""
    ts = np.linspace(0.0, horizon, cells + 1)
    vals = np.array([rate(float(t)) for t in ts])
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ValueError("rate must be nonnegative and finite on [0, T]")
    return float(np.trapezoid(vals, ts))


def contraction_constant(
    c: Coefficients,
    horizon: float,
    n: int,
    spec: WeightedNormSpec,
    cells: int = 1024,
) -> float:
    """Contraction bound of the fixed-point map in the weighted norm:

        alpha = (1/lam) int_0^T kappa1
              + 2 n sup_t int_0^t kappa(s) exp(-2 lam (t - s)) ds.

    The inner convolution is evaluated by the stable recursion
    I(t_{k+1}) = exp(-2 lam dt) I(t_k) + local trapezoid, which avoids
    overflowing exp(2 lam s) rescalings at large weights.
    """
    if c.kappa1 is None or c.kappa is None:
        raise ValueError("kappa1 and kappa must be declared")
    lam = spec.lam
    term1 = integrate_rate(c.kappa1, horizon, cells) / lam
    ts = np.linspace(0.0, horizon, cells + 1)
    kap = np.array([c.kappa(float(t)) for t in ts])
    dt = horizon / cells
    decay = math.exp(-2.0 * lam * dt)
    conv = 0.0
    sup = 0.0
    for k in range(cells):
        conv = decay * conv + 0.5 * dt * (kap[k] * decay + kap[k + 1])
        sup = max(sup, conv)
    return term1 + 2.0 * n * sup


def find_contraction_lambda(
    c: Coefficients,
    horizon: float,
    n: int,
    start: float = 1.0,
    max_doublings: int = 60,
) -> tuple[float, float]:
    """Smallest tested weight (doubling from ``start``) with alpha < 1."""
    lam = start
    for _ in range(max_doublings):
        alpha = contraction_constant(c, horizon, n, WeightedNormSpec(lam))
        if alpha < 1.0:
            return lam, alpha
        lam *= 2.0
    raise ValueError("no contraction weight found; rates may not be integrable")


def truncate_coeffs(c: Coefficients, radius: float) -> Coefficients:
    """Radially clamp the coefficient arguments at ``radius``.

    Inside the ball the argument is passed through untouched, so truncated
    and original coefficients agree bitwise there; outside, the argument is
    rescaled onto the sphere.  The zero matrix maps to itself.  The truncated
    pair is globally Lipschitz with squared rate 4 * kappaR(radius) whenever
    the local rate is declared.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")

    def clamp(x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        nrm = hs_norm(x)
        if nrm <= radius:
            return x
        return (radius / nrm) * x

    local = c.kappaR(radius) if c.kappaR is not None else None
    return Coefficients(
        b=lambda t, x: c.b(t, clamp(x)),
        sigma=lambda t, x: c.sigma(t, clamp(x)),
        kappa1=(lambda t: 4.0 * local(t)) if local is not None else None,
        kappa2=c.kappa2,
        kappa0=c.kappa0,
    )


def consistency_under_truncation(
    c: Coefficients, x0, radius: float, driver: MatrixBrownianPath
) -> bool:
    """Whether solves truncated at ``radius`` and ``radius + 1`` agree.

    Agreement is bitwise up to (and including) the first node where the
    radius-truncated solution reaches norm ``radius``; beyond that node the
    solutions may differ.
    """
    x0 = as_square_matrix(x0, "x0")
    if hs_norm(x0) >= radius:
        raise ValueError("initial norm must be below the truncation radius")
    a = euler_maruyama(truncate_coeffs(c, radius), x0, driver)
    b = euler_maruyama(truncate_coeffs(c, radius + 1.0), x0, driver)
    norms = np.sqrt(np.sum(a.states * a.states, axis=(1, 2)))
    exited = np.nonzero(norms >= radius)[0]
    last = int(exited[0]) if exited.size else len(a.grid) - 1
    return bool(np.array_equal(a.states[: last + 1], b.states[: last + 1]))


@dataclass(frozen=True)
class MomentBoundReport:
    lhs: float  # sample mean of the pathwise sup of ||X||^2
    bound: float
    passed: bool
    lhs_plus_one: float  # the comparison in its 1 + E(sup ...) form
    bound_plus_one: float

    @property
    def margin(self) -> float:
        return self.bound / self.lhs if self.lhs > 0 else math.inf


def _sup_sq_mean(ens: SolutionEnsemble) -> float:
    if ens.paths == 0:
        raise ValueError("ensemble has no completed paths")
    sup_sq = np.max(np.sum(ens.states * ens.states, axis=(2, 3)), axis=1)
    return float(sup_sq.mean())


def moment_bound_check(
    ens: SolutionEnsemble, x0, kappa: RateFn, horizon: float, n: int
) -> MomentBoundReport:
    """Check E[sup ||X||^2] <= (1 + 3 ||x0||^2) exp(6 (T + 4n) int kappa)."""
    x0 = as_square_matrix(x0, "x0")
    lhs = _sup_sq_mean(ens)
    integral = integrate_rate(kappa, horizon)
    bound = (1.0 + 3.0 * float(np.sum(x0 * x0))) * math.exp(
        6.0 * (horizon + 4.0 * n) * integral
    )
    return MomentBoundReport(lhs, bound, lhs <= bound, 1.0 + lhs, 1.0 + bound)


def monotone_moment_bound_check(
    ens: SolutionEnsemble, x0, kappa: RateFn, kappa0: RateFn, horizon: float
) -> MomentBoundReport:
    """Check E[sup ||X||^2] <= (1 + 2 ||x0||^2) exp(2 int (kappa + 64 kappa0))."""
    x0 = as_square_matrix(x0, "x0")
    lhs = _sup_sq_mean(ens)
    integral = integrate_rate(lambda t: kappa(t) + 64.0 * kappa0(t), horizon)
    bound = (1.0 + 2.0 * float(np.sum(x0 * x0))) * math.exp(2.0 * integral)
    return MomentBoundReport(lhs, bound, lhs <= bound, 1.0 + lhs, 1.0 + bound)


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    samples: int
    worst_margin: float
    passed: bool


def _random_in_ball(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    direction = rng.normal(size=(n, n))
    nrm = np.sqrt(np.sum(direction * direction))
    if nrm == 0.0:
        return np.zeros((n, n))
    return direction * (radius * rng.uniform() / nrm)


def check_conditions(
    c: Coefficients,
    n: int,
    samples: int,
    radius: float,
    horizon: float,
    master_seed: int = 0,
) -> list[ConditionReport]:
    """Evaluate every declared rate inequality on random (t, x, y) samples.

    A negative worst margin marks the declaration as violated; violations
    are reported, never raised.
    """
    rng = np.random.default_rng(master_seed)
    zero = np.zeros((n, n))
    local = c.kappaR(radius) if c.kappaR is not None else None

    def sq(m: np.ndarray) -> float:
        return float(np.sum(m * m))

    margins: dict[str, list[float]] = {}
    if c.kappa1 is not None:
        margins["lipschitz"] = []
    if c.kappa2 is not None:
        margins["growth-at-zero"] = []
    if local is not None:
        margins["local-lipschitz"] = []
    if c.kappa is not None:
        margins["monotone"] = []
    if c.kappa1 is not None and c.kappa2 is not None:
        margins["linear-growth"] = []
    if c.kappa0 is not None:
        margins["diffusion-growth"] = []
    for _ in range(samples):
        t = float(rng.uniform(0.0, horizon))
        x = _random_in_ball(rng, n, radius)
        y = _random_in_ball(rng, n, radius)
        bx, sx = c.drift(t, x), c.vol(t, x)
        if "lipschitz" in margins or "local-lipschitz" in margins:
            by, sy = c.drift(t, y), c.vol(t, y)
            gap = sq(bx - by) + sq(sx - sy)
            dist = sq(x - y)
            if "lipschitz" in margins:
                margins["lipschitz"].append(c.kappa1(t) * dist - gap)
            if "local-lipschitz" in margins:
                margins["local-lipschitz"].append(local(t) * dist - gap)
        if "growth-at-zero" in margins:
            margins["growth-at-zero"].append(
                c.kappa2(t) - sq(c.drift(t, zero)) - sq(c.vol(t, zero))
            )
        if "monotone" in margins:
            margins["monotone"].append(
                c.kappa(t) * (1.0 + sq(x)) - 2.0 * float(np.sum(x * bx)) - sq(sx)
            )
        if "linear-growth" in margins:
            margins["linear-growth"].append(
                2.0 * (c.kappa1(t) + c.kappa2(t)) * (1.0 + sq(x)) - sq(bx) - sq(sx)
            )
        if "diffusion-growth" in margins:
            margins["diffusion-growth"].append(c.kappa0(t) * (1.0 + sq(x)) - sq(sx))
    return [
        ConditionReport(name, samples, float(min(vals)), min(vals) >= 0.0)
        for name, vals in margins.items()
    ]
