"""Dense symmetric kernels: Gramians, partial Gramians, and SPD solves."""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

__all__ = [
    "SingularMatrixError",
    "gramian",
    "partial_gramian",
    "accumulate_outer",
    "spd_solve",
    "spd_solve_batch",
]


class SingularMatrixError(np.linalg.LinAlgError):
    """A symmetric factorization hit a non-positive pivot.

    ``pivot`` is the zero-based index of the failing pivot; ``row`` is set by
    solver passes to the row whose normal equations failed.
    """

    def __init__(self, message, pivot=None, row=None):
        super().__init__(message)
        self.pivot = pivot
        self.row = row


def gramian(mat) -> np.ndarray:
    """Sum of the outer products of the rows of ``mat`` (n x d), as d x d."""
    mat = np.ascontiguousarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError("expected a 2-d array")
    return mat.T @ mat


def partial_gramian(mat, block) -> np.ndarray:
    """The d x |block| slab of the Gramian restricted to the given columns."""
    mat = np.ascontiguousarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError("expected a 2-d array")
    block = check_block(block, mat.shape[1])
    return mat.T @ mat[:, block]


def check_block(block, dim) -> np.ndarray:
    """Validate a column index set: nonempty, strictly increasing, in range."""
    block = np.asarray(block, dtype=np.intp)
    if block.ndim != 1 or block.size == 0:
        raise ValueError("block must be a nonempty 1-d index set")
    if block.min() < 0 or block.max() >= dim:
        raise ValueError(f"block indices out of range for dimension {dim}")
    if block.size > 1 and (np.diff(block) <= 0).any():
        raise ValueError("block indices must be strictly increasing")
    return block


def accumulate_outer(acc, vec, scale=1.0) -> np.ndarray:
    """In place ``acc += scale * (vec outer vec)``; returns ``acc``."""
    vec = np.asarray(vec, dtype=np.float64)
    acc += scale * np.outer(vec, vec)
    return acc


def spd_solve(mat, rhs) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A`` via Cholesky.

    No explicit inverse is formed. Raises :class:`SingularMatrixError` naming
    the failing pivot index when ``A`` is not positive definite.
    """
    a = np.array(mat, dtype=np.float64, order="F")
    b = np.ascontiguousarray(rhs, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if b.shape[:1] != a.shape[:1]:
        raise ValueError("right-hand side length must match the matrix")
    factor, info = lapack.dpotrf(a, lower=1, overwrite_a=1)
    if info > 0:
        raise SingularMatrixError(
            f"matrix is not positive definite: non-positive pivot at index {info - 1}",
            pivot=int(info) - 1)
    if info < 0:
        raise ValueError(f"invalid argument {-info} to dpotrf")
    x, info = lapack.dpotrs(factor, b, lower=1)
    if info != 0:
        raise ValueError(f"invalid argument {-info} to dpotrs")
    return x


def spd_solve_batch(mats, rhs) -> np.ndarray:
    """Solve a stack of SPD systems ``mats[i] x_i = rhs[i]``.

    The hot path hands the whole stack to the platform's batched dense
    solver; if that reports a singular system, the failing index is pinned
    down with per-system Cholesky factorizations.
    """
    try:
        return np.linalg.solve(mats, rhs)
    except np.linalg.LinAlgError:
        for i in range(len(mats)):
            try:
                spd_solve(mats[i], rhs[i])
            except SingularMatrixError as err:
                err.row = i
                raise
        raise
