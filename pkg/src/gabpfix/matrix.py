"""Sparse symmetric matrices, unit-diagonal normalization and walk-summability tests.

A model ``J x = h`` is rescaled to ``J = D^{1/2} (I - R) D^{1/2}`` with ``D = diag(J)``.
``R`` carries the partial correlations, and the model is walk-summable when the
spectral radius of the elementwise absolute value ``|R|`` is below one.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import NoConvergence, NonPositiveDiagonal

__all__ = [
    "SparseSymMatrix",
    "NormalizedModel",
    "normalize_unit_diagonal",
    "recover_solution",
    "spectral_radius_abs",
    "is_walk_summable",
    "is_diag_dominant",
]


class SparseSymMatrix:
    """Symmetric matrix stored as an explicit diagonal plus its strict upper triangle.

    Off-diagonal entries are kept as parallel arrays ``rows < cols`` sorted
    lexicographically, so entry ``(i, j, v)`` stands for both ``J[i, j]`` and
    ``J[j, i]``. Explicit off-diagonal zeros are dropped on construction.
    Instances are treated as immutable.
    """

    def __init__(self, n, diag, rows=(), cols=(), vals=()):
        n = int(n)
        diag = np.array(diag, dtype=float).reshape(-1)
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(cols, dtype=np.int64).reshape(-1)
        vals = np.asarray(vals, dtype=float).reshape(-1)
        if diag.shape != (n,):
            raise ValueError(f"diagonal has length {diag.size}, expected {n}")
        if not (rows.size == cols.size == vals.size):
            raise ValueError("rows, cols and vals must have equal length")
        if not np.all(np.isfinite(diag)) or not np.all(np.isfinite(vals)):
            raise ValueError("matrix entries must be finite")
        if rows.size and (rows.min() < 0 or cols.min() < 0 or max(rows.max(), cols.max()) >= n):
            raise ValueError("entry index out of range")
        if np.any(rows == cols):
            raise ValueError("diagonal entries belong in `diag`, not in the off-diagonal list")

        lo = np.minimum(rows, cols)
        hi = np.maximum(rows, cols)
        keep = vals != 0.0
        lo, hi, vals = lo[keep], hi[keep], vals[keep]
        order = np.lexsort((hi, lo))
        lo, hi, vals = lo[order], hi[order], vals[order]
        if lo.size > 1:
            dup = (lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])
            if np.any(dup):
                k = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate entry ({lo[k]}, {hi[k]})")

        self.n = n
        self.diag = diag
        self.rows = lo
        self.cols = hi
        self.vals = vals
        for arr in (self.diag, self.rows, self.cols, self.vals):
            arr.flags.writeable = False

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_entries(cls, n, entries):
        """Build from ``(row, col, value)`` triples; diagonal triples fill ``diag``."""
        diag = np.zeros(n)
        seen_diag = set()
        rows, cols, vals = [], [], []
        for r, c, v in entries:
            r, c = int(r), int(c)
            if r == c:
                if r in seen_diag:
                    raise ValueError(f"duplicate entry ({r}, {r})")
                seen_diag.add(r)
                diag[r] = v
            else:
                rows.append(r)
                cols.append(c)
                vals.append(v)
        return cls(n, diag, rows, cols, vals)

    @classmethod
    def from_dense(cls, a, atol=0.0):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not np.allclose(a, a.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
            raise ValueError("matrix is not symmetric")
        n = a.shape[0]
        r, c = np.triu_indices(n, k=1)
        v = a[r, c]
        keep = np.abs(v) > atol
        return cls(n, np.diag(a).copy(), r[keep], c[keep], v[keep])

    @classmethod
    def from_scipy(cls, m):
        """Build from a scipy sparse matrix holding both triangles (upper one is used)."""
        m = sp.coo_matrix(m)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        m.sum_duplicates()
        n = m.shape[0]
        diag = np.zeros(n)
        on = m.row == m.col
        diag[m.row[on]] = m.data[on]
        up = m.row < m.col
        return cls(n, diag, m.row[up], m.col[up], m.data[up])

    # -- views --------------------------------------------------------------

    @property
    def nnz_offdiag(self):
        return int(self.vals.size)

    @cached_property
    def directed_edges(self):
        """``(src, dst, weight, rev)`` over both directions, sorted by ``(dst, src)``.

        ``rev[e]`` is the index of the edge running the opposite way.
        """
        src = np.concatenate([self.rows, self.cols])
        dst = np.concatenate([self.cols, self.rows])
        w = np.concatenate([self.vals, self.vals])
        order = np.lexsort((src, dst))
        src, dst, w = src[order], dst[order], w[order]
        m = self.vals.size
        # position of each original slot after sorting
        pos = np.empty(2 * m, dtype=np.int64)
        pos[order] = np.arange(2 * m)
        rev = np.empty(2 * m, dtype=np.int64)
        rev[pos[:m]] = pos[m:]
        rev[pos[m:]] = pos[:m]
        for arr in (src, dst, w, rev):
            arr.flags.writeable = False
        return src, dst, w, rev

    def neighbors(self, i):
        src, dst, _, _ = self.directed_edges
        lo, hi = np.searchsorted(dst, [i, i + 1])
        return src[lo:hi]

    @cached_property
    def _csr(self):
        n = self.n
        up = sp.coo_matrix((self.vals, (self.rows, self.cols)), shape=(n, n))
        full = up + up.T + sp.diags(self.diag)
        return sp.csr_matrix(full)

    def to_scipy(self):
        return self._csr.copy()

    def to_dense(self):
        return self._csr.toarray()

    def matvec(self, x):
        return self._csr @ np.asarray(x, dtype=float)

    def row_abs_offdiag_sums(self):
        s = np.zeros(self.n)
        np.add.at(s, self.rows, np.abs(self.vals))
        np.add.at(s, self.cols, np.abs(self.vals))
        return s

    def add_diagonal(self, gamma):
        """Return ``J + diag(gamma)``; ``gamma`` may be a scalar or a length-n vector."""
        return SparseSymMatrix(self.n, self.diag + gamma, self.rows, self.cols, self.vals)

    def scaled(self, c):
        return SparseSymMatrix(self.n, c * self.diag, self.rows, self.cols, c * self.vals)

    def __repr__(self):
        return f"SparseSymMatrix(n={self.n}, nnz_offdiag={self.nnz_offdiag})"


@dataclass(frozen=True)
class NormalizedModel:
    """Unit-diagonal form ``I - R`` of a model together with the scale ``d = sqrt(diag(J))``."""

    R: SparseSymMatrix
    h_norm: np.ndarray
    scale: np.ndarray

    @property
    def J_norm(self):
        return SparseSymMatrix(self.R.n, np.ones(self.R.n), self.R.rows, self.R.cols, -self.R.vals)

    def reconstruct(self):
        """Rebuild the original information matrix ``J_ij = d_i d_j (delta_ij - R_ij)``."""
        d = self.scale
        R = self.R
        return SparseSymMatrix(R.n, d * d * (1.0 - R.diag), R.rows, R.cols,
                               -d[R.rows] * d[R.cols] * R.vals)


def _check_positive_diagonal(J):
    bad = np.flatnonzero(~(J.diag > 0))
    if bad.size:
        i = int(bad[0])
        raise NonPositiveDiagonal(i, float(J.diag[i]))


def normalize_unit_diagonal(J, h=None):
    """Rescale ``J x = h`` to unit diagonal.

    Returns a :class:`NormalizedModel` with ``R = I - D^{-1/2} J D^{-1/2}``
    and ``h_norm = D^{-1/2} h``. Solving ``(I - R) u = h_norm`` and calling
    :func:`recover_solution` gives ``J^{-1} h``.
    """
    _check_positive_diagonal(J)
    d = np.sqrt(J.diag)
    r_vals = -J.vals / (d[J.rows] * d[J.cols])
    R = SparseSymMatrix(J.n, np.zeros(J.n), J.rows, J.cols, r_vals)
    if h is None:
        h = np.zeros(J.n)
    h = np.asarray(h, dtype=float)
    if h.shape != (J.n,):
        raise ValueError(f"rhs has shape {h.shape}, expected ({J.n},)")
    return NormalizedModel(R=R, h_norm=h / d, scale=d)


def recover_solution(x_norm, scale):
    x_norm = np.asarray(x_norm, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if x_norm.shape != scale.shape:
        raise ValueError(f"length mismatch: {x_norm.shape} vs {scale.shape}")
    return x_norm / scale


_RESTART_SEED = 20090628


def _power_iteration(op, v, tol, max_iter):
    v = v / np.linalg.norm(v)
    for _ in range(max_iter):
        w = op(v)
        lam = float(v @ w)
        # symmetric op: some eigenvalue lies within ||w - lam v|| of lam
        if np.linalg.norm(w - lam * v) <= tol * max(abs(lam), 1e-300):
            return lam
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return None


def spectral_radius_abs(R, tol=1e-10, max_iter=100_000):
    """Spectral radius of the elementwise absolute value ``|R|``.

    Power iteration runs on ``|R| + I``. The shift makes the Perron root
    strictly dominant even for bipartite graphs, where ``-rho`` is also an
    eigenvalue of ``|R|``. The estimate is the Rayleigh quotient, accepted
    once the eigen-residual ``||A v - lam v||`` drops below ``tol * lam``,
    which bounds the error of the estimate by the same amount.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = R.n
    if n == 0:
        return 0.0
    if R.nnz_offdiag == 0:
        return float(np.abs(R.diag).max())
    A = abs(R.to_scipy()) + sp.identity(n, format="csr")

    def op(x):
        return A @ x

    lam = _power_iteration(op, np.ones(n), tol, max_iter)
    if lam is None:
        rng = np.random.default_rng(_RESTART_SEED)
        lam = _power_iteration(op, rng.uniform(0.5, 1.5, n), tol, max_iter)
    if lam is None:
        raise NoConvergence(f"rho(|R|) not settled after {max_iter} iterations (two starts)")
    return max(lam - 1.0, 0.0)


def is_walk_summable(J, tol=1e-10):
    """Return ``(rho(|R|) < 1, rho(|R|))`` for the unit-diagonal form of ``J``.

    The estimate carries a relative error of up to ``tol``, so only
    ``rho < 1 - 2 tol`` is certified; the boundary ``rho == 1`` counts as
    not walk-summable.
    """
    model = normalize_unit_diagonal(J)
    rho = spectral_radius_abs(model.R, tol=tol)
    return rho < 1.0 - 2 * tol, rho


def is_diag_dominant(J):
    """Strict row diagonal dominance ``|J_ii| > sum_{j != i} |J_ij|`` for every row."""
    return bool(np.all(np.abs(J.diag) > J.row_abs_offdiag_sums()))
