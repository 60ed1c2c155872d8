#!/usr/bin/env python3
"""Tour of the matrix Hilbert space: inner product, basis, block products.

Square matrices form an n^2-dimensional Hilbert space under the trace
pairing <A, B> = trace(A^T B).  This script walks through the primitives the
rest of the library is built on.
"""

import numpy as np

from matsde import matspace as ms

print("=" * 72)
print("1. The trace inner product")
print("=" * 72)

a = np.array([[1.0, 2.0], [3.0, 4.0]])
b = np.array([[5.0, 6.0], [7.0, 8.0]])
print(f"<A, B> = trace(A^T B) = {ms.hs_inner(a, b)}  (= 5 + 12 + 21 + 32)")
print(f"||A||  = {ms.hs_norm(a):.6f}  (sqrt of {ms.hs_inner(a, a)})")

print()
print("=" * 72)
print("2. The orthonormal basis e_ij")
print("=" * 72)

# each e_ij has a single unit entry; projections recover coordinates
for i, j in [(1, 1), (1, 2)]:
    e = ms.basis_matrix(i, j, 2)
    print(f"<A, e_{i}{j}> = {ms.hs_inner(a, e)}   (entry A[{i},{j}])")

rebuilt = sum(
    ms.hs_inner(a, ms.basis_matrix(i, j, 2)) * ms.basis_matrix(i, j, 2)
    for i in (1, 2)
    for j in (1, 2)
)
print(f"basis reconstruction error: {ms.hs_norm(a - rebuilt):.1e}")

print()
print("=" * 72)
print("3. Rank-one (tensor) operators")
print("=" * 72)

# (x tensor y) z = <x, z> y: project on x, point along y
x, y, z = ms.basis_matrix(1, 1, 2), ms.basis_matrix(2, 2, 2), np.eye(2)
print("(e11 (x) e22)(I) =")
print(ms.tensor_apply(x, y, z))

print()
print("=" * 72)
print("4. Block matrices, their Hadamard product and contraction")
print("=" * 72)

# block matrix whose block (i, j) is e_ij: contraction against any B
# rebuilds B, the cleanest sanity check of the index conventions
blocks = np.zeros((2, 2, 2, 2))
for i in range(2):
    for j in range(2):
        blocks[i, j, i, j] = 1.0
weights = np.array([[1.0, 2.0], [3.0, 4.0]])
print("contraction of the coordinate block matrix against B:")
print(ms.block_contract(blocks, weights))
print("block (0,1) after scaling blocks entrywise by B:")
print(ms.hadamard_block(blocks, weights)[0, 1])

print()
print("=" * 72)
print("5. Nonnegativity of the induced quadratic form")
print("=" * 72)

# <A x, x> sums per-column quadratic forms, so only the symmetric part of
# A matters; a skew matrix is 'nonnegative' in this sense
skew = np.array([[0.0, 1.0], [-1.0, 0.0]])
print(f"identity nonnegative:  {ms.is_nonnegative(np.eye(2))}")
print(f"-identity nonnegative: {ms.is_nonnegative(-np.eye(2))}")
print(f"skew nonnegative:      {ms.is_nonnegative(skew)}")
print(f"skew strictly positive: {ms.is_strictly_positive(skew)}")
