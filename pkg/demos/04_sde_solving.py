#!/usr/bin/env python3
"""Matrix SDEs end to end: explicit scheme, fixed point, truncation, bounds.

The benchmark throughout is the linear equation dX = 0.5 X dt + 0.3 X dB
from the identity matrix.  The fixed point of the integral map on a grid is
exactly the explicit scheme on that grid, so the iteration's contraction is
observable, and the closed-form moment bounds must hold with huge slack.
"""

import numpy as np

from matsde import sde
from matsde.brownian import SeedSpec, TimeGrid, coarsen, sample_path, sample_paths

seed = SeedSpec(23)
c = sde.linear_test_coefficients()
x0 = np.eye(2)

print("=" * 72)
print("1. The explicit scheme and blow-up accounting")
print("=" * 72)

ens = sde.solve_ensemble(c, x0, 2, TimeGrid.uniform(1.0, 64), 200, seed)
final_norms = np.sqrt(np.sum(ens.states[:, -1] ** 2, axis=(1, 2)))
print(f"200 paths solved, {len(ens.aborted)} blow-ups")
print(f"mean ||X_T|| = {final_norms.mean():.4f} (start ||I|| = {np.sqrt(2):.4f})")

print()
print("=" * 72)
print("2. Strong self-refinement order")
print("=" * 72)

fit = sde.strong_error_order(c, x0, 16, 4, 100, seed)
print(f"steps {fit.step_counts} -> mean endpoint errors {[f'{e:.4f}' for e in fit.errors]}")
print(f"fitted order: {fit.order:.2f}  (multiplicative noise: 1/2 expected)")

print()
print("=" * 72)
print("3. Picard iteration under the exponentially weighted norm")
print("=" * 72)

lam, alpha = sde.find_contraction_lambda(c, 1.0, 2)
print(f"doubling search: lambda = {lam:g} gives contraction bound alpha = {alpha:.3f}")
drivers = sample_paths(2, TimeGrid.uniform(1.0, 64), seed, 200)
res = sde.picard_iterate(c, x0, drivers, 8, sde.WeightedNormSpec(lam))
print("successive-difference norms (each ratio must stay below alpha):")
for m, nrm in enumerate(res.successive_norms):
    ratio = "" if m == 0 else f"  ratio {nrm / res.successive_norms[m - 1]:.3f}"
    print(f"  iterate {m + 1}: {nrm:.3e}{ratio}")

em = np.stack([sde.euler_maruyama(c, x0, d).states for d in drivers])
gap = np.sqrt(np.mean(np.sum((res.final - em) ** 2, axis=(2, 3)), axis=0)).max()
print(f"sup-t L2 gap between iterate 8 and the explicit scheme: {gap:.2e}")

print()
print("=" * 72)
print("4. Radial truncation is consistent across radii")
print("=" * 72)

outward = sde.Coefficients(b=lambda t, x: 2.0 * x, sigma=lambda t, x: 0.5 * x)
driver = sample_path(2, TimeGrid.uniform(1.0, 32), seed)
print(
    "truncations at R=2 and R=3 agree until the first exit:",
    sde.consistency_under_truncation(outward, x0, 2.0, driver),
)

print()
print("=" * 72)
print("5. Closed-form moment bounds (loose by design)")
print("=" * 72)

ens64 = sde.solve_ensemble(c, x0, 2, TimeGrid.uniform(1.0, 64), 500, seed)
kappa = lambda t: c.kappa1(t) + c.kappa2(t)
rep = sde.moment_bound_check(ens64, x0, kappa, 1.0, 2)
print(f"Lipschitz-growth bound: E[sup||X||^2] = {rep.lhs:.3f} <= {rep.bound:.3e}")
rep2 = sde.monotone_moment_bound_check(ens64, x0, c.kappa, c.kappa0, 1.0)
print(f"monotone-case bound:    E[sup||X||^2] = {rep2.lhs:.3f} <= {rep2.bound:.3e}")

print()
print("=" * 72)
print("6. Declared regularity rates, checked by sampling")
print("=" * 72)

for row in sde.check_conditions(c, 2, 2000, 3.0, 1.0):
    print(
        f"  {row.condition:17s} worst margin {row.worst_margin:+9.4f}  "
        f"{'ok' if row.passed else 'VIOLATED'}"
    )
