"""Ito integration of matrix-valued processes against matrix Brownian motion.

The integral of a simple (piecewise-constant, non-anticipating) process is
the left-endpoint sum of matrix products

    integral = sum_i  phi_i @ (B(t_{i+1}) - B(t_i)),

and general adapted integrands are handled by projecting them onto a
piecewise-constant process at the left endpoints of their partition.  Time
integrals throughout use the left-endpoint rectangle rule so that discrete
identities (isometry, quadratic variation) close exactly for
piecewise-constant integrands.

Non-anticipation is structural: an :class:`AdaptedProcess` evaluator is
handed only the path restricted to nodes up to the evaluation point, so it
cannot read the future.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from matsde.brownian import MatrixBrownianPath, SeedSpec, TimeGrid, sample_path
from matsde.matspace import as_square_matrix

__all__ = [
    "SimpleProcess",
    "AdaptedProcess",
    "ito_integral_simple",
    "project_simple",
    "ito_integral",
    "values_along",
    "IsometryReport",
    "verify_isometry",
    "quadratic_variation_exact",
    "MartingaleResidual",
    "verify_qv_martingale",
    "clamp_process",
]


@dataclass(frozen=True, eq=False)
class SimpleProcess:
    """Piecewise-constant integrand: one matrix per partition cell."""

    partition: TimeGrid
    values: np.ndarray  # shape (cells, n, n)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise ValueError("values must have shape (cells, n, n)")
        if v.shape[0] != len(self.partition) - 1:
            raise ValueError("need exactly one matrix per partition cell")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[1]


class AdaptedProcess:
    """Grid-indexed process evaluable from information up to the current node.

    ``evaluator(k, times, values)`` receives the node index ``k`` together
    with the driving path restricted to nodes ``0..k`` and returns an n-by-n
    matrix.  Because only the prefix is passed, evaluators are structurally
    unable to anticipate the driver.
    """

    def __init__(self, evaluator: Callable[[int, np.ndarray, np.ndarray], np.ndarray]):
        self.evaluator = evaluator

    @classmethod
    def constant(cls, m) -> "AdaptedProcess":
        m = as_square_matrix(m, "constant integrand")
        return cls(lambda k, ts, vs: m)

    @classmethod
    def from_time_function(cls, f: Callable[[float], np.ndarray]) -> "AdaptedProcess":
        """Deterministic integrand t -> f(t)."""
        return cls(lambda k, ts, vs: f(float(ts[k])))

    @classmethod
    def from_path_function(cls, f: Callable[[float, np.ndarray], np.ndarray]) -> "AdaptedProcess":
        """Integrand depending on the current driver value: (t, B_t) -> matrix."""
        return cls(lambda k, ts, vs: f(float(ts[k]), vs[k]))

    def at(self, k: int, path: MatrixBrownianPath) -> np.ndarray:
        out = np.asarray(
            self.evaluator(k, path.grid.nodes[: k + 1], path.values[: k + 1]),
            dtype=float,
        )
        if out.shape != (path.n, path.n):
            raise ValueError(
                f"evaluator returned shape {out.shape}, expected {(path.n, path.n)}"
            )
        return out


def values_along(v: AdaptedProcess, path: MatrixBrownianPath) -> np.ndarray:
    """Evaluate an adapted process at every node of the path's grid."""
    return np.stack([v.at(k, path) for k in range(len(path.grid))])


def ito_integral_simple(v: SimpleProcess, path: MatrixBrownianPath) -> np.ndarray:
    """Sum of phi_i @ (B(t_{i+1}) - B(t_i)) over the partition cells."""
    idx = path.grid.indices_of(v.partition)
    if v.n != path.n:
        raise ValueError(f"dimension mismatch: {v.n} vs {path.n}")
    deltas = path.values[idx[1:]] - path.values[idx[:-1]]
    return np.einsum("kab,kbc->ac", v.values, deltas)


def project_simple(
    v: AdaptedProcess, partition: TimeGrid, path: MatrixBrownianPath
) -> SimpleProcess:
    """Left-endpoint piecewise-constant projection of an adapted process.

    Cell i takes the value of ``v`` at the left node t_i, evaluated from the
    path prefix up to t_i, which preserves non-anticipation.
    """
    idx = path.grid.indices_of(partition)
    phis = np.stack([v.at(int(k), path) for k in idx[:-1]])
    return SimpleProcess(partition, phis)


def ito_integral(v: AdaptedProcess, path: MatrixBrownianPath) -> np.ndarray:
    """Left-endpoint Riemann-Ito sum of an adapted process on the path grid."""
    return ito_integral_simple(project_simple(v, path.grid, path), path)


@dataclass(frozen=True)
class IsometryReport:
    lhs: float  # sample mean of ||integral||^2
    rhs: float  # n * time quadrature of the mean squared integrand norm
    stderr: float  # standard error of lhs
    time_integral: float  # the quadrature without the dimension factor
    n: int
    paths: int

    @property
    def passed(self) -> bool:
        return abs(self.lhs - self.rhs) <= 3.0 * self.stderr


def verify_isometry(
    v: AdaptedProcess,
    n: int,
    grid: TimeGrid,
    paths: int,
    seed: SeedSpec,
) -> IsometryReport:
    """Monte Carlo check of E||int V dB||^2 = n * int E||V||^2 dt.

    The dimension factor multiplies the time integral exactly once, so
    ``rhs == n * time_integral`` holds bitwise and guards the factor.
    """
    if paths < 2:
        raise ValueError("need at least 2 paths for a standard error")
    dt = grid.steps
    sq = np.empty(paths)
    mean_sq_norm = np.zeros(dt.size)
    for i in range(paths):
        path = sample_path(n, grid, seed.with_path(seed.path_index + i))
        simple = project_simple(v, grid, path)
        integral = ito_integral_simple(simple, path)
        sq[i] = np.sum(integral * integral)
        mean_sq_norm += np.sum(simple.values * simple.values, axis=(1, 2))
    mean_sq_norm /= paths
    time_integral = float(mean_sq_norm @ dt)
    return IsometryReport(
        lhs=float(sq.mean()),
        rhs=n * time_integral,
        stderr=float(sq.std(ddof=1) / np.sqrt(paths)),
        time_integral=time_integral,
        n=n,
        paths=paths,
    )


def quadratic_variation_exact(
    v: AdaptedProcess, path: MatrixBrownianPath, t: float
) -> np.ndarray:
    """Left-endpoint quadrature of V(s) V(s)^T over [0, t]."""
    nodes = path.grid.nodes
    if t < 0 or t > path.grid.horizon:
        raise ValueError(f"time {t} outside the path horizon")
    out = np.zeros((path.n, path.n))
    for k in range(nodes.size - 1):
        left = nodes[k]
        if left >= t:
            break
        width = min(nodes[k + 1], t) - left
        phi = v.at(k, path)
        out += (phi @ phi.T) * width
    return out


@dataclass(frozen=True)
class MartingaleResidual:
    t: float
    residual: float  # mean Gamma(t) - mean Gamma(0)
    stderr: float

    @property
    def passed(self) -> bool:
        if self.stderr == 0.0:
            return self.residual == 0.0
        return abs(self.residual) <= 3.0 * self.stderr


def verify_qv_martingale(
    v: AdaptedProcess,
    a,
    b,
    grid: TimeGrid,
    paths: int,
    seed: SeedSpec,
    checkpoints,
) -> list[MartingaleResidual]:
    """Check that the compensated projection product has constant mean.

    With M(t) the running integral and Q(t) the running quadrature of V V^T,

        Gamma(t) = <M(t), a> <M(t), b> - <Q(t) a, b>

    has mean Gamma(0) = 0 at every checkpoint if the compensator is correct.
    """
    a = as_square_matrix(a, "a")
    b = as_square_matrix(b, "b")
    idx = [grid.index_of(float(t)) for t in checkpoints]
    if paths < 2:
        raise ValueError("need at least 2 paths for a standard error")
    dt = grid.steps
    gammas = np.empty((paths, len(idx)))
    for i in range(paths):
        path = sample_path(a.shape[0], grid, seed.with_path(seed.path_index + i))
        phis = np.stack([v.at(k, path) for k in range(dt.size)])
        deltas = np.diff(path.values, axis=0)
        m_run = np.concatenate(
            [
                np.zeros((1, path.n, path.n)),
                np.cumsum(np.einsum("kab,kbc->kac", phis, deltas), axis=0),
            ]
        )
        q_run = np.concatenate(
            [
                np.zeros((1, path.n, path.n)),
                np.cumsum(np.einsum("kab,kcb,k->kac", phis, phis, dt), axis=0),
            ]
        )
        for j, k in enumerate(idx):
            m = m_run[k]
            gammas[i, j] = (
                np.sum(m * a) * np.sum(m * b) - np.sum((q_run[k] @ a) * b)
            )
    out = []
    for j, k in enumerate(idx):
        col = gammas[:, j]
        out.append(
            MartingaleResidual(
                t=float(grid.nodes[k]),
                residual=float(col.mean()),
                stderr=float(col.std(ddof=1) / np.sqrt(paths)),
            )
        )
    return out


def clamp_process(v: AdaptedProcess, level: float) -> AdaptedProcess:
    """Replace the value by level * I whenever its norm reaches ``level``.

    This is the truncation step used to reduce unbounded square-integrable
    integrands to bounded ones.
    """
    if level <= 0:
        raise ValueError("level must be positive")

    def evaluator(k, ts, vs):
        m = np.asarray(v.evaluator(k, ts, vs), dtype=float)
        if np.sqrt(np.sum(m * m)) >= level:
            return level * np.eye(m.shape[0])
        return m

    return AdaptedProcess(evaluator)
