"""Synchronous Gaussian belief propagation for ``J x = h``.

Messages live on directed edges ``i -> j`` of the model graph: a precision
part ``alpha`` and a mean part ``beta``. A sweep recomputes every message
from the previous sweep's values, so runs are deterministic and the
per-edge updates are independent within a sweep.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NonPositiveDiagonal, NumericalBreakdown

__all__ = [
    "Status",
    "GabpSettings",
    "MessageState",
    "GabpResult",
    "init_messages",
    "sweep",
    "infer",
    "run_gabp",
]


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    DIVERGED = "Diverged"
    NUMERICAL_BREAKDOWN = "NumericalBreakdown"


@dataclass(frozen=True)
class GabpSettings:
    """Stopping rules for :func:`run_gabp`.

    ``message_tol`` bounds the max absolute message change of the final sweep.
    A run is declared diverged when any message exceeds ``divergence_bound``
    in magnitude or, with ``require_positive_cavity``, when some cavity
    precision ``alpha_{i\\j}`` becomes non-positive: the outgoing message then
    no longer describes a normalizable Gaussian and the precision recursion
    has left the regime where it can settle.
    """

    max_iterations: int = 1000
    message_tol: float = 1e-10
    divergence_bound: float = 1e12
    pivot_floor: float = 1e-12
    require_positive_cavity: bool = True

    def __post_init__(self):
        if self.message_tol <= 0:
            raise ValueError("message_tol must be positive")
        if self.divergence_bound <= 0:
            raise ValueError("divergence_bound must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class MessageState:
    """Messages indexed like ``J.directed_edges`` (sorted by destination, then source)."""

    alpha: np.ndarray
    beta: np.ndarray
    min_cavity: float = np.inf

    @property
    def n_edges(self):
        return self.alpha.size

    def as_dict(self, J):
        """``{(i, j): (alpha_ij, beta_ij)}`` for inspection and tests."""
        src, dst, _, _ = J.directed_edges
        return {(int(i), int(j)): (float(a), float(b))
                for i, j, a, b in zip(src, dst, self.alpha, self.beta)}


@dataclass
class GabpResult:
    means: np.ndarray
    variances: np.ndarray
    status: Status
    iterations: int
    residual_history: np.ndarray
    state: MessageState = field(repr=False)
    means_history: np.ndarray | None = field(default=None, repr=False)

    @property
    def converged(self):
        return self.status is Status.CONVERGED


def init_messages(J):
    m = 2 * J.nnz_offdiag
    return MessageState(alpha=np.zeros(m), beta=np.zeros(m))


def _incoming(J, values):
    _, dst, _, _ = J.directed_edges
    # bincount accumulates in array order, i.e. ascending source per node
    return np.bincount(dst, weights=values, minlength=J.n)


def sweep(J, h, state, pivot_floor=1e-12):
    """One synchronous update of every message. Returns ``(new_state, max_change)``.

    Cavity aggregates are formed as the full incoming sum minus the reverse
    message, which keeps the cost linear in the number of edges.
    """
    src, dst, w, rev = J.directed_edges
    if state.alpha.shape != w.shape:
        raise ValueError("message state does not match the matrix edge set")
    if w.size == 0:
        return MessageState(state.alpha.copy(), state.beta.copy()), 0.0
    a_full = J.diag + _incoming(J, state.alpha)
    b_full = h + _incoming(J, state.beta)
    a_cav = a_full[src] - state.alpha[rev]
    b_cav = b_full[src] - state.beta[rev]

    small = np.abs(a_cav) < pivot_floor
    if np.any(small):
        e = int(np.flatnonzero(small)[0])
        raise NumericalBreakdown(int(src[e]), int(dst[e]), float(a_cav[e]))

    alpha = -w * w / a_cav
    beta = -w * b_cav / a_cav
    change = max(np.abs(alpha - state.alpha).max(), np.abs(beta - state.beta).max())
    return MessageState(alpha, beta, float(a_cav.min())), float(change)


def infer(J, h, state, pivot_floor=1e-12):
    """Marginal means and (approximate on loopy graphs) variances from the messages."""
    prec = J.diag + _incoming(J, state.alpha)
    small = np.abs(prec) < pivot_floor
    if np.any(small):
        i = int(np.flatnonzero(small)[0])
        raise NumericalBreakdown(i, None, float(prec[i]))
    var = 1.0 / prec
    mean = var * (h + _incoming(J, state.beta))
    return mean, var


def run_gabp(J, h, settings=None, state=None, record_means=False):
    """Iterate :func:`sweep` until convergence, divergence, breakdown or the cap.

    ``state`` warm-starts the messages (default: all zero). With
    ``record_means`` the marginal means after every sweep are kept in
    ``means_history`` (shape ``(iterations, n)``).
    """
    settings = settings or GabpSettings()
    h = np.asarray(h, dtype=float)
    if h.shape != (J.n,):
        raise ValueError(f"rhs has shape {h.shape}, expected ({J.n},)")
    if np.any(J.diag <= 0):
        i = int(np.flatnonzero(J.diag <= 0)[0])
        raise NonPositiveDiagonal(i, float(J.diag[i]))

    if state is None:
        state = init_messages(J)
    else:
        state = replace(state, alpha=state.alpha.copy(), beta=state.beta.copy())

    history = []
    trace = [] if record_means else None
    status = Status.MAX_ITERATIONS
    it = 0
    for it in range(1, settings.max_iterations + 1):
        try:
            new, change = sweep(J, h, state, settings.pivot_floor)
        except NumericalBreakdown:
            status = Status.NUMERICAL_BREAKDOWN
            it -= 1
            break
        state = new
        history.append(change)
        if trace is not None:
            trace.append(_safe_means(J, h, state, settings.pivot_floor))
        peak = max(np.abs(state.alpha).max(initial=0.0), np.abs(state.beta).max(initial=0.0))
        if not np.isfinite(peak) or peak > settings.divergence_bound:
            status = Status.DIVERGED
            break
        if settings.require_positive_cavity and state.min_cavity <= 0.0:
            status = Status.DIVERGED
            break
        if change <= settings.message_tol:
            status = Status.CONVERGED
            break

    try:
        means, variances = infer(J, h, state, settings.pivot_floor)
    except NumericalBreakdown:
        means = np.full(J.n, np.nan)
        variances = np.full(J.n, np.nan)
        if status is Status.CONVERGED:
            status = Status.NUMERICAL_BREAKDOWN
    return GabpResult(
        means=means,
        variances=variances,
        status=status,
        iterations=it,
        residual_history=np.array(history),
        state=state,
        means_history=np.array(trace) if trace is not None else None,
    )


def _safe_means(J, h, state, pivot_floor):
    try:
        return infer(J, h, state, pivot_floor)[0]
    except NumericalBreakdown:
        return np.full(J.n, np.nan)
