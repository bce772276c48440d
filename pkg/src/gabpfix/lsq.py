"""Least squares ``min ||A x - b||`` through the SPD machinery.

The regularized solution ``(A^T A + gamma I)^{-1} A^T b`` is computed by
forming the normal equations and handing them to the double-loop solver.
The augmented symmetric system ``[[I, A^T], [A, -gamma I]]`` is built as well;
it is only solved directly, as a cross-check on the normal-equation route.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .correction import (OuterSettings, compute_dd_loading, compute_uniform_loading,
                         double_loop_solve)
from .matrix import SparseSymMatrix


def as_rect(a):
    """Dense ``(n, k)`` float array with ``n >= k``."""
    a = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    n, k = a.shape
    if n < k:
        raise ValueError(f"need at least as many rows as columns, got {n}x{k}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def normal_equations(A, b):
    """Return ``(A^T A, A^T b)`` as a sparse symmetric matrix and a vector."""
    A = as_rect(A)
    b = np.asarray(b, dtype=float)
    if b.shape != (A.shape[0],):
        raise ValueError(f"rhs has shape {b.shape}, expected ({A.shape[0]},)")
    G = A.T @ A
    G = 0.5 * (G + G.T)
    return SparseSymMatrix.from_dense(G), A.T @ b


@dataclass(frozen=True)
class AugmentedSystem:
    matrix: SparseSymMatrix
    rhs: np.ndarray
    k: int
    n: int

    def solve_dense(self):
        """Dense least-squares solve of the full system.

        With ``gamma = 0`` and ``n > k`` the matrix is singular (rank ``2k``), so a
        plain solve is not possible. Any least-squares solution still has a unique
        ``x`` block, equal to the pseudo-inverse solution; ``z`` is then the
        minimum-norm choice.
        """
        return np.linalg.lstsq(self.matrix.to_dense(), self.rhs, rcond=None)[0]

    def split(self, xz):
        """Split a full solution into ``(x, z)``."""
        return xz[:self.k], xz[self.k:]


def build_augmented(A, b, gamma=0.0):
    """``[[I_k, A^T], [A, -gamma I_n]]`` with right-hand side ``(0_k, b)``.

    With ``gamma = 0`` the leading ``k`` entries of its solution are the
    least-squares solution of ``A x = b``.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    A = as_rect(A)
    n, k = A.shape
    b = np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise ValueError(f"rhs has shape {b.shape}, expected ({n},)")
    r, c = np.nonzero(A)
    diag = np.concatenate([np.ones(k), np.full(n, -float(gamma))])
    # A[r, c] sits at block position (k + r, c), mirrored into the upper-right block
    M = SparseSymMatrix(k + n, diag, c, k + r, A[r, c])
    return AugmentedSystem(M, np.concatenate([np.zeros(k), b]), k, n)


def regularized_lsq_solve(A, b, gamma=0.0, loading="uniform", settings=None):
    """``(A^T A + gamma I)^{-1} A^T b`` via the double-loop GaBP solver.

    ``loading`` is ``"uniform"``, ``"dd"``, or a ready :class:`LoadingSpec`
    for the regularized normal matrix.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    G, hb = normal_equations(A, b)
    if gamma:
        G = G.add_diagonal(gamma)
    if loading == "uniform":
        loading = compute_uniform_loading(G)
    elif loading == "dd":
        loading = compute_dd_loading(G)
    return double_loop_solve(G, hb, loading, settings or OuterSettings())
