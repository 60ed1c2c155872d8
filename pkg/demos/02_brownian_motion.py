#!/usr/bin/env python3
"""Matrix Brownian motion: sampling, reproducibility, covariance identity.

A matrix Brownian path stacks n^2 independent scalar Brownian motions into
an n-by-n matrix per time node.  Its time-t covariance operator is t times
the identity on matrix space: E[<B_t, u> <B_t, v>] = t <u, v>.
"""

import io

import numpy as np

from matsde import matspace as ms
from matsde.brownian import (
    SeedSpec,
    TimeGrid,
    empirical_covariance,
    increments,
    sample_path,
    write_path_csv,
)

seed = SeedSpec(master_seed=7)
grid = TimeGrid.uniform(1.0, 8)

print("=" * 72)
print("1. Sampling is a pure function of (master seed, path index)")
print("=" * 72)

p0 = sample_path(2, grid, seed.with_path(0))
p0_again = sample_path(2, grid, seed.with_path(0))
p1 = sample_path(2, grid, seed.with_path(1))
print(f"path 0 == path 0 resampled: {np.array_equal(p0.values, p0_again.values)}")
print(f"path 0 == path 1:           {np.array_equal(p0.values, p1.values)}")
print(f"B_1 of path 0:\n{p0.values[-1]}")

print()
print("=" * 72)
print("2. Increments telescope back to the endpoint")
print("=" * 72)

deltas = increments(p0)
print(f"number of increments: {len(deltas)}")
print(f"sum of increments - B_T: {ms.hs_norm(deltas.sum(axis=0) - p0.values[-1]):.1e}")

print()
print("=" * 72)
print("3. The covariance identity E<B_t,u><B_t,v> = t <u,v>")
print("=" * 72)

cases = [
    ("u = v = e11, t = 2", 2.0, ms.basis_matrix(1, 1, 2), ms.basis_matrix(1, 1, 2)),
    ("u = e12 _|_ v = e21", 1.0, ms.basis_matrix(1, 2, 2), ms.basis_matrix(2, 1, 2)),
    ("u = v = I (so <u,v> = n)", 1.0, np.eye(2), np.eye(2)),
]
for label, t, u, v in cases:
    est = empirical_covariance(2, t, u, v, paths=20_000, seed=seed)
    print(
        f"{label:28s} estimate={est.estimate:+.4f}  target={est.target:+.4f}  "
        f"stderr={est.stderr:.4f}  ({est.within:.1f} se off)"
    )

print()
print("=" * 72)
print("4. Paths dump to CSV for plotting elsewhere")
print("=" * 72)

buf = io.StringIO()
write_path_csv(sample_path(2, TimeGrid.uniform(1.0, 4), seed), buf)
print(buf.getvalue())
