"""Matrix Market and plain-text vector IO."""
from __future__ import annotations

import csv
import os

import numpy as np
import scipy.io
import scipy.sparse as sp

from .matrix import SparseSymMatrix


def _mminfo(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{path}: no such file")
    try:
        return scipy.io.mminfo(path)
    except Exception as exc:  # scipy raises bare ValueError/OSError on bad headers
        raise ValueError(f"{path}: not a Matrix Market file ({exc})") from exc


def read_sym_matrix(path):
    """Read a ``coordinate real symmetric`` file; either triangle may be stored."""
    path = os.fspath(path)
    rows, cols, _, fmt, field, symmetry = _mminfo(path)
    if fmt != "coordinate" or field not in ("real", "integer") or symmetry != "symmetric":
        raise ValueError(f"{path}: expected 'coordinate real symmetric', got '{fmt} {field} {symmetry}'")
    if rows != cols:
        raise ValueError(f"{path}: symmetric matrix must be square, got {rows}x{cols}")
    # mmread mirrors every off-diagonal entry, so the upper part is the stored data
    m = scipy.io.mmread(path, spmatrix=True)
    return SparseSymMatrix.from_scipy(m)


def read_general_matrix(path):
    """Read a ``coordinate real general`` file as a dense ``(n, k)`` array."""
    path = os.fspath(path)
    _, _, _, fmt, field, symmetry = _mminfo(path)
    if field not in ("real", "integer") or symmetry not in ("general", "symmetric"):
        raise ValueError(f"{path}: expected a real general matrix, got '{fmt} {field} {symmetry}'")
    m = scipy.io.mmread(path, spmatrix=True)
    return m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float)


def write_sym_matrix(path, J, comment=""):
    up = sp.coo_matrix((J.vals, (J.cols, J.rows)), shape=(J.n, J.n))
    lower = (up + sp.diags(J.diag)).tocoo()
    scipy.io.mmwrite(os.fspath(path), lower, comment=comment, field="real",
                     precision=17, symmetry="symmetric")


def write_general_matrix(path, a, comment=""):
    scipy.io.mmwrite(os.fspath(path), sp.coo_matrix(np.asarray(a, dtype=float)),
                     comment=comment, field="real", precision=17, symmetry="general")


def read_vector(path):
    """One real per line; lines starting with ``#`` and blank lines are skipped."""
    path = os.fspath(path)
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                values.append(float(s))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: cannot parse {s!r} as a real number") from None
    v = np.array(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{path}: vector contains non-finite values")
    return v


def write_vector(path, v, header=None):
    with open(os.fspath(path), "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for x in np.asarray(v, dtype=float):
            fh.write(f"{x:.17g}\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header, rows):
    """CSV with a header row; floats are written round-trip exact so reruns are byte-identical."""
    with open(os.fspath(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
