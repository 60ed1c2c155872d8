#!/usr/bin/env python3
"""Matrix calculus and the change-of-variable formula along SDE paths.

Scalar fields of a matrix argument carry a matrix gradient and a block
Hessian.  Their second-order expansion drives the formula

    dV = dV/dt dt + <grad V, b> dt + <grad V, sigma dB>
       + 1/2 sum_{i,k,j} Hess[i,j,k,j] (sigma sigma^T)_ik dt,

whose residual along a solved path must vanish as the grid refines.
"""

import numpy as np

from matsde import calculus as mc
from matsde import sde
from matsde.brownian import SeedSpec, TimeGrid, sample_path

seed = SeedSpec(29)
rng = np.random.default_rng(0)

print("=" * 72)
print("1. Gradients and Hessians, analytic against finite differences")
print("=" * 72)

x = rng.normal(size=(2, 2))
f4 = mc.hs_norm_4_field()
print(f"V = ||X||^4 at a random X: V = {f4.value(0.0, x):.4f}")
print("gradient (4 ||X||^2 X):")
print(mc.gradient(f4, 0.0, x))
fd_only = mc.ScalarField(value=f4.value)  # no analytic derivatives supplied
gap = np.max(np.abs(mc.gradient(fd_only, 0.0, x) - mc.gradient(f4, 0.0, x)))
print(f"finite-difference gradient agrees to {gap:.1e}")

print()
print("=" * 72)
print("2. Second-order expansion and its remainder")
print("=" * 72)

cubic = mc.trace_cube_field()
y = rng.normal(size=(2, 2))
d = rng.normal(size=(2, 2))
print("V = (trace X)^3, remainder after the quadratic expansion:")
for h in (1e-1, 1e-2, 1e-3):
    print(f"  h = {h:g}: remainder = {mc.taylor_remainder(cubic, y, y + h * d):.3e}")
quad = mc.hs_norm_sq_field()
print(f"quadratic field remainder (exact expansion): "
      f"{mc.taylor_remainder(quad, y, y + d):.1e}")

print()
print("=" * 72)
print("3. The generator: drift of V along the dynamics")
print("=" * 72)

sig = np.array([[0.6, 0.2], [0.0, 0.9]])
c_add = sde.constant_coefficients(np.zeros((2, 2)), sig)
rate = mc.generator(quad, c_add, 0.0, np.eye(2))
print(f"V = ||X||^2, additive noise sigma: generator = {rate:.4f}")
print(f"closed form n ||sigma||^2      = {2 * np.sum(sig * sig):.4f}")

print()
print("=" * 72)
print("4. Residual of the formula along solved paths")
print("=" * 72)

c = sde.linear_test_coefficients()
for steps in (16, 64):
    acc = 0.0
    for i in range(200):
        driver = sample_path(2, TimeGrid.uniform(1.0, steps), seed.with_path(i))
        sol = sde.euler_maruyama(c, np.eye(2), driver)
        acc += mc.ito_residual(quad, c, sol).final ** 2
    print(f"  {steps:3d} steps: RMS final residual = {np.sqrt(acc / 200):.4f}")
print("halving the step roughly halves the squared residual: the formula's")
print("drift and noise terms account for everything but O(h) discreteness.")
