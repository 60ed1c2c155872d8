"""Matrix-valued Brownian motion on discrete time grids.

A path assigns to every grid node an n-by-n matrix whose entries are n^2
mutually independent scalar Brownian motions; there is no cross-entry
correlation, and the covariance operator of the time-t value is t times the
identity on the n^2-dimensional matrix space.

Randomness contract: path ``i`` under master seed ``s`` is drawn from a
Philox4x64 counter-based generator keyed by ``SeedSequence(s, spawn_key=(i,))``
with normals from numpy's ziggurat sampler.  This is fixed per release;
identical (n, grid, seed) always reproduce the identical path, and distinct
path indices are independent streams, so ensembles may be generated in any
order or in parallel.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from matsde.matspace import as_square_matrix, hs_inner

__all__ = [
    "TimeGrid",
    "SeedSpec",
    "MatrixBrownianPath",
    "sample_path",
    "sample_paths",
    "increments",
    "coarsen",
    "empirical_covariance",
    "CovarianceEstimate",
    "path_csv_header",
    "write_path_csv",
    "write_ensemble_csv",
]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing finite times starting at 0."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("grid needs at least the nodes 0 and T")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("grid nodes must be finite")
        if nodes[0] != 0.0:
            raise ValueError("grid must start at 0")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        nodes = nodes.copy()
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, horizon: float, steps: int) -> "TimeGrid":
        if steps < 1:
            raise ValueError("steps must be >= 1")
        return cls(np.linspace(0.0, float(horizon), steps + 1))

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> np.ndarray:
        """Cell widths t_{k+1} - t_k."""
        return np.diff(self.nodes)

    def __len__(self) -> int:
        return self.nodes.size

    def index_of(self, t: float) -> int:
        """Index of the node equal to t; raises if t is not a node."""
        k = int(np.searchsorted(self.nodes, t))
        if k >= self.nodes.size or self.nodes[k] != t:
            raise ValueError(f"time {t} is not a grid node")
        return k

    def indices_of(self, sub: "TimeGrid") -> np.ndarray:
        """Positions of every node of ``sub`` inside this grid."""
        idx = np.searchsorted(self.nodes, sub.nodes)
        if np.any(idx >= self.nodes.size) or np.any(
            self.nodes[np.minimum(idx, self.nodes.size - 1)] != sub.nodes
        ):
            raise ValueError("grid is not a subgrid of the path grid")
        return idx


@dataclass(frozen=True)
class SeedSpec:
    """Reproducible per-path random stream: (master seed, path index)."""

    master_seed: int
    path_index: int = 0

    def __post_init__(self):
        if self.path_index < 0:
            raise ValueError("path_index must be nonnegative")

    def with_path(self, path_index: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, path_index)

    def rng(self) -> np.random.Generator:
        key = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(self.path_index,)
        )
        return np.random.Generator(np.random.Philox(key))


@dataclass(frozen=True, eq=False)
class MatrixBrownianPath:
    """One sampled realization: a matrix value at every grid node."""

    grid: TimeGrid
    values: np.ndarray  # shape (len(grid), n, n), values[0] == 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise ValueError("path values must have shape (nodes, n, n)")
        if v.shape[0] != len(self.grid):
            raise ValueError("one value per grid node required")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        if np.any(v[0] != 0.0):
            raise ValueError("path must start at the zero matrix")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def value_at(self, t: float) -> np.ndarray:
        return self.values[self.grid.index_of(t)]


def sample_path(n: int, grid: TimeGrid, seed: SeedSpec) -> MatrixBrownianPath:
    """Draw one matrix Brownian path on ``grid``.

    Each of the n^2 entries receives independent Gaussian increments of
    variance t_{k+1} - t_k per step.
    """
    if n < 1:
        raise ValueError("dimension must be >= 1")
    rng = seed.rng()
    dt = grid.steps
    dB = rng.standard_normal((dt.size, n, n)) * np.sqrt(dt)[:, None, None]
    values = np.empty((dt.size + 1, n, n))
    values[0] = 0.0
    np.cumsum(dB, axis=0, out=values[1:])
    return MatrixBrownianPath(grid, values)


def sample_paths(
    n: int,
    grid: TimeGrid,
    seed: SeedSpec,
    count: int,
    workers: int = 1,
) -> list[MatrixBrownianPath]:
    """Draw ``count`` independent paths at indices seed.path_index + i.

    The result is index-ordered regardless of ``workers``, so downstream
    reductions stay bit-reproducible.
    """
    indices = [seed.path_index + i for i in range(count)]
    if workers <= 1:
        return [sample_path(n, grid, seed.with_path(i)) for i in indices]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(sample_path, n, grid, seed.with_path(i))
            for i in indices
        ]
        return [f.result() for f in futures]


def increments(path: MatrixBrownianPath) -> np.ndarray:
    """Per-step differences, shape (len(grid) - 1, n, n)."""
    return np.diff(path.values, axis=0)


def coarsen(path: MatrixBrownianPath, factor: int) -> MatrixBrownianPath:
    """Restrict a path to every ``factor``-th node of its grid."""
    steps = len(path.grid) - 1
    if factor < 1 or steps % factor != 0:
        raise ValueError(f"cannot coarsen {steps} steps by factor {factor}")
    return MatrixBrownianPath(
        TimeGrid(path.grid.nodes[::factor]), path.values[::factor]
    )


@dataclass(frozen=True)
class CovarianceEstimate:
    estimate: float
    target: float
    stderr: float

    @property
    def within(self) -> float:
        """Absolute deviation in units of the standard error."""
        if self.stderr == 0.0:
            return 0.0 if self.estimate == self.target else np.inf
        return abs(self.estimate - self.target) / self.stderr


def empirical_covariance(
    n: int,
    t: float,
    u,
    v,
    paths: int,
    seed: SeedSpec,
) -> CovarianceEstimate:
    """Monte Carlo check of E[<B_t, u><B_t, v>] = t * <u, v>.

    Returns the sample mean of the product of projections, the exact target,
    and the standard error of the mean.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if paths < 2:
        raise ValueError("need at least 2 paths for a standard error")
    u = as_square_matrix(u, "u")
    v = as_square_matrix(v, "v")
    grid = TimeGrid(np.array([0.0, float(t)]))
    samples = np.empty(paths)
    for i in range(paths):
        b_t = sample_path(n, grid, seed.with_path(seed.path_index + i)).values[-1]
        samples[i] = np.sum(b_t * u) * np.sum(b_t * v)
    estimate = float(samples.mean())
    stderr = float(samples.std(ddof=1) / np.sqrt(paths))
    return CovarianceEstimate(estimate, t * hs_inner(u, v), stderr)


def path_csv_header(n: int) -> str:
    entries = ",".join(f"e{i}{j}" for i in range(1, n + 1) for j in range(1, n + 1))
    return f"t,{entries}"


def _write_rows(f, path: MatrixBrownianPath, prefix: str = "") -> None:
    for t, value in zip(path.grid.nodes, path.values):
        cells = ",".join(repr(float(x)) for x in value.ravel())
        f.write(f"{prefix}{float(t)!r},{cells}\n")


def write_path_csv(path: MatrixBrownianPath, f) -> None:
    """Dump one path: header ``t,e11,...,enn``, one row per node."""
    f.write(path_csv_header(path.n) + "\n")
    _write_rows(f, path)


def write_ensemble_csv(paths: list[MatrixBrownianPath], f) -> None:
    """Dump several paths with a leading ``path_id`` column."""
    if not paths:
        raise ValueError("empty ensemble")
    f.write("path_id," + path_csv_header(paths[0].n) + "\n")
    for i, path in enumerate(paths):
        _write_rows(f, path, prefix=f"{i},")
