"""The Hilbert space of dense n-by-n real matrices.

Matrices are plain ``numpy`` arrays of shape ``(n, n)``; block matrices
(matrices whose entries are themselves n-by-n matrices) are arrays of shape
``(n, n, n, n)`` indexed as ``h[i, j, k, l]`` = entry ``(k, l)`` of block
``(i, j)``.  The inner product is the trace pairing

    hs_inner(a, b) = trace(a.T @ b) = sum_ij a_ij * b_ij,

which makes the space an n^2-dimensional real Hilbert space with orthonormal
basis ``basis_matrix(i, j, n)``.  All functions validate dimensions and
finiteness and raise ``ValueError`` on violation; everything here is pure.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_square_matrix",
    "as_block_matrix",
    "hs_inner",
    "hs_norm",
    "basis_matrix",
    "tensor_apply",
    "hadamard_block",
    "block_contract",
    "is_nonnegative",
    "is_strictly_positive",
    "matmul",
    "transpose",
    "trace",
    "add",
    "scale",
    "save_matrix_csv",
    "load_matrix_csv",
]


def as_square_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a float64 square matrix.

    Rejects non-square shapes, empty matrices and non-finite entries.
    """
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if m.shape[0] < 1:
        raise ValueError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_block_matrix(h, name: str = "block matrix") -> np.ndarray:
    """Validate and return ``h`` as a float64 array of shape (n, n, n, n)."""
    b = np.asarray(h, dtype=float)
    if b.ndim != 4 or len(set(b.shape)) != 1:
        raise ValueError(
            f"{name} must have shape (n, n, n, n), got {b.shape}"
        )
    if not np.all(np.isfinite(b)):
        raise ValueError(f"{name} contains non-finite entries")
    return b


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] != b.shape[0]:
        raise ValueError(
            f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}"
        )


def hs_inner(a, b) -> float:
    """Trace inner product trace(a.T @ b), the entrywise dot product."""
    a = as_square_matrix(a, "a")
    b = as_square_matrix(b, "b")
    _check_same_dim(a, b)
    return float(np.sum(a * b))


def hs_norm(a) -> float:
    """Norm induced by the trace inner product (the Frobenius norm)."""
    a = as_square_matrix(a, "a")
    return float(np.sqrt(np.sum(a * a)))


def basis_matrix(i: int, j: int, n: int) -> np.ndarray:
    """Basis element with a single 1 at row i, column j (1-based indices)."""
    if not (1 <= i <= n and 1 <= j <= n):
        raise ValueError(f"indices ({i}, {j}) out of range for dimension {n}")
    e = np.zeros((n, n))
    e[i - 1, j - 1] = 1.0
    return e


def tensor_apply(x, y, z) -> np.ndarray:
    """Apply the rank-one operator (x tensor y) to z: hs_inner(x, z) * y."""
    x = as_square_matrix(x, "x")
    y = as_square_matrix(y, "y")
    z = as_square_matrix(z, "z")
    _check_same_dim(x, y)
    _check_same_dim(x, z)
    return float(np.sum(x * z)) * y


def hadamard_block(a, b) -> np.ndarray:
    """Scale block (i, j) of the block matrix ``a`` by the scalar ``b[i, j]``."""
    a = as_block_matrix(a, "a")
    b = as_square_matrix(b, "b")
    _check_same_dim(a, b)
    return a * b[:, :, None, None]


def block_contract(a, b) -> np.ndarray:
    """Contract a block matrix against a scalar matrix.

    Returns the single n-by-n matrix ``sum_ij a.blocks[i][j] * b[i, j]``,
    i.e. the trace of the blockwise Hadamard product.
    """
    a = as_block_matrix(a, "a")
    b = as_square_matrix(b, "b")
    _check_same_dim(a, b)
    return np.einsum("ijkl,ij->kl", a, b)


def _symmetric_part_eigs(a: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(0.5 * (a + a.T))


def is_nonnegative(a, tol: float = 1e-12) -> bool:
    """Whether hs_inner(a @ x, x) >= 0 for every matrix x, up to ``tol``.

    The quadratic form splits over columns of x, so the condition is
    equivalent to positive semidefiniteness of the symmetric part of ``a``;
    we test the minimum eigenvalue of (a + a.T) / 2 against ``-tol``.
    """
    a = as_square_matrix(a, "a")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return bool(_symmetric_part_eigs(a).min() >= -tol)


def is_strictly_positive(a, tol: float = 1e-12) -> bool:
    """Strict variant: minimum eigenvalue of the symmetric part exceeds +tol."""
    a = as_square_matrix(a, "a")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return bool(_symmetric_part_eigs(a).min() > tol)


def matmul(a, b) -> np.ndarray:
    """Matrix product a @ b."""
    a = as_square_matrix(a, "a")
    b = as_square_matrix(b, "b")
    _check_same_dim(a, b)
    return a @ b


def transpose(a) -> np.ndarray:
    """Matrix transpose."""
    return as_square_matrix(a, "a").T.copy()


def trace(a) -> float:
    """Sum of the diagonal entries."""
    return float(np.trace(as_square_matrix(a, "a")))


def add(a, b) -> np.ndarray:
    """Matrix sum a + b."""
    a = as_square_matrix(a, "a")
    b = as_square_matrix(b, "b")
    _check_same_dim(a, b)
    return a + b


def scale(c: float, a) -> np.ndarray:
    """Scalar multiple c * a."""
    if not np.isfinite(c):
        raise ValueError("scale factor must be finite")
    return float(c) * as_square_matrix(a, "a")


def save_matrix_csv(path, a) -> None:
    """Write a matrix as n CSV rows of n shortest round-trip decimals."""
    a = as_square_matrix(a, "a")
    with open(path, "w", encoding="utf-8") as f:
        for row in a:
            f.write(",".join(repr(float(x)) for x in row) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    """Read a matrix written by :func:`save_matrix_csv`."""
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append([float(x) for x in line.split(",")])
    return as_square_matrix(rows, f"matrix from {path}")
