"""Diagonal loading and the outer correction loop around GaBP.

Plain GaBP is only guaranteed to converge on walk-summable models. For any
SPD ``J`` we pick a diagonal ``Gamma >= 0`` that makes ``J + Gamma``
walk-summable and iterate

    x_{t+1} = (J + Gamma)^{-1} (h + Gamma x_t),

solving each step with GaBP on the loaded matrix. The fixed point is
``J^{-1} h`` and the error contracts by ``rho((J + Gamma)^{-1} Gamma) < 1``
per step. Larger loading speeds up the inner GaBP runs but slows this outer
contraction.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionTooLarge, NotWalkSummableAfterLoading, NumericalBreakdown
from .gabp import GabpSettings, Status, infer, init_messages, run_gabp, sweep
from .matrix import normalize_unit_diagonal, spectral_radius_abs

__all__ = [
    "LoadingSpec",
    "OuterSettings",
    "FixStatus",
    "FixedSolveReport",
    "compute_uniform_loading",
    "compute_dd_loading",
    "uniform_loading",
    "custom_loading",
    "contraction_factor",
    "contraction_spectrum",
    "double_loop_solve",
    "single_loop_solve",
]

UNIFORM_MARGIN = 0.05
DD_MARGIN = 0.01
DENSE_CAP = 500


@dataclass(frozen=True)
class LoadingSpec:
    """A diagonal perturbation ``Gamma`` in the scale of the original matrix.

    ``mode`` is ``"uniform"``, ``"dd"`` or ``"custom"``. For uniform loading
    ``level`` is the ``gamma`` applied to the unit-diagonal form, so
    ``Gamma = level * diag(J)``.
    """

    mode: str
    gamma: np.ndarray
    margin: float = 0.0
    level: float | None = None

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("loading must be finite and non-negative")
        object.__setattr__(self, "gamma", g)

    def apply(self, J):
        if self.gamma.shape != (J.n,):
            raise ValueError(f"loading has length {self.gamma.size}, matrix has n={J.n}")
        return J.add_diagonal(self.gamma)


def compute_uniform_loading(J, margin=UNIFORM_MARGIN, rho=None):
    """Smallest uniform loading (plus ``margin``) that makes ``J`` walk-summable.

    On the unit-diagonal form ``I - R`` the loaded model ``(1 + gamma) I - R``
    renormalizes to ``I - R / (1 + gamma)``, so ``gamma = max(0, rho(|R|) - 1 + margin)``
    gives ``rho(|R'|) = rho(|R|) / (1 + gamma) < 1``.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    if rho is None:
        rho = spectral_radius_abs(normalize_unit_diagonal(J).R)
    level = max(0.0, rho - 1.0 + margin)
    return LoadingSpec("uniform", level * J.diag, margin=margin, level=level)


def uniform_loading(J, level):
    """Uniform loading of a chosen size on the unit-diagonal scale."""
    if level < 0:
        raise ValueError("loading level must be non-negative")
    return LoadingSpec("uniform", level * J.diag, level=float(level))


def compute_dd_loading(J, margin=DD_MARGIN):
    """Per-node loading ``max(0, sum_j |J_ij| - J_ii + margin)``; ``J + Gamma`` is then
    strictly diagonally dominant."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    g = np.maximum(0.0, J.row_abs_offdiag_sums() - J.diag + margin)
    return LoadingSpec("dd", g, margin=margin)


def custom_loading(gamma):
    return LoadingSpec("custom", np.array(gamma, dtype=float, ndmin=1))


def _gamma_vector(J, gamma):
    if isinstance(gamma, LoadingSpec):
        return gamma.gamma
    g = np.asarray(gamma, dtype=float)
    return np.full(J.n, float(g)) if g.ndim == 0 else g


def contraction_spectrum(J, gamma, cap=DENSE_CAP):
    """Eigenvalues of ``(J + Gamma)^{-1} Gamma`` (ascending), from ``Gamma v = lam (J + Gamma) v``."""
    if J.n > cap:
        raise DimensionTooLarge(J.n, cap)
    g = _gamma_vector(J, gamma)
    Jd = J.to_dense()
    return scipy.linalg.eigh(np.diag(g), Jd + np.diag(g), eigvals_only=True)


def contraction_factor(J, gamma, cap=DENSE_CAP):
    """``rho((J + Gamma)^{-1} Gamma)``, the asymptotic error reduction per outer step.

    Dense; refuses ``n > cap``.
    """
    if J.n > cap:
        raise DimensionTooLarge(J.n, cap)
    if not np.any(_gamma_vector(J, gamma)):
        return 0.0
    return float(np.abs(contraction_spectrum(J, gamma, cap)).max())


@dataclass(frozen=True)
class OuterSettings:
    """Outer-loop controls.

    ``outer_tol`` applies to ``||J x - h||_inf``. When ``inner`` is omitted the
    inner GaBP runs to a message tolerance of ``min(1e-6, outer_tol / 10)``.
    ``step_size`` is only used by :func:`single_loop_solve`.
    """

    outer_tol: float = 1e-8
    max_outer: int = 10_000
    inner: GabpSettings | None = None
    step_size: float = 0.5
    warm_start: bool = True
    check_walk_summable: bool = True

    def __post_init__(self):
        if self.outer_tol <= 0:
            raise ValueError("outer_tol must be positive")
        if not 0.0 < self.step_size < 1.0:
            raise ValueError("step_size must lie in (0, 1)")
        if self.inner is None:
            object.__setattr__(self, "inner",
                               GabpSettings(message_tol=min(1e-6, self.outer_tol / 10)))


class FixStatus(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_OUTER = "MaxOuter"
    INNER_FAILURE = "InnerFailure"


@dataclass
class FixedSolveReport:
    solution: np.ndarray
    status: FixStatus
    outer_iterations: int
    inner_iterations_per_step: np.ndarray
    outer_residual_history: np.ndarray
    gamma_used: np.ndarray
    rho_loaded: float
    inner_status: Status | None = None
    variances: np.ndarray | None = field(default=None, repr=False)

    @property
    def converged(self):
        return self.status is FixStatus.CONVERGED

    @property
    def total_inner_iterations(self):
        return int(self.inner_iterations_per_step.sum())

    def records(self):
        """Per-outer-step rows ``(step, residual, inner_iterations)``."""
        return [(t + 1, float(r), int(k)) for t, (r, k) in
                enumerate(zip(self.outer_residual_history, self.inner_iterations_per_step))]


def _loaded(J, loading, settings):
    Jl = loading.apply(J)
    rho = spectral_radius_abs(normalize_unit_diagonal(Jl).R)
    if settings.check_walk_summable and rho >= 1.0:
        raise NotWalkSummableAfterLoading(rho)
    return Jl, rho


def _residual(J, x, h):
    return float(np.abs(J.matvec(x) - h).max(initial=0.0))


def double_loop_solve(J, h, loading, settings=None):
    """Solve ``J x = h`` by repeated GaBP solves of the loaded system.

    Starts from ``x = 0``. Each outer step runs GaBP on ``J + Gamma`` with
    right-hand side ``h + Gamma x``, warm-started from the previous messages.
    Raises :class:`NotWalkSummableAfterLoading` when the loading is too small
    (unless ``settings.check_walk_summable`` is off).
    """
    settings = settings or OuterSettings()
    h = np.asarray(h, dtype=float)
    Jl, rho = _loaded(J, loading, settings)
    g = loading.gamma

    x = np.zeros(J.n)
    var = None
    state = None
    inner_counts = []
    residuals = []
    status = FixStatus.MAX_OUTER
    inner_status = None
    for _ in range(settings.max_outer):
        res = run_gabp(Jl, h + g * x, settings.inner, state=state)
        inner_counts.append(res.iterations)
        inner_status = res.status
        if not res.converged:
            status = FixStatus.INNER_FAILURE
            break
        x, var = res.means, res.variances
        if settings.warm_start:
            state = res.state
        r = _residual(J, x, h)
        residuals.append(r)
        if r <= settings.outer_tol:
            status = FixStatus.CONVERGED
            break

    return FixedSolveReport(
        solution=x,
        status=status,
        outer_iterations=len(inner_counts),
        inner_iterations_per_step=np.array(inner_counts, dtype=int),
        outer_residual_history=np.array(residuals),
        gamma_used=g.copy(),
        rho_loaded=rho,
        inner_status=inner_status,
        variances=var,
    )


def single_loop_solve(J, h, loading, settings=None):
    """One GaBP sweep per outer step with a damped right-hand side.

    The loaded system is driven by ``h_{t+1} = h + Gamma ((1 - s) x_{t-1} + s x_t)``
    with ``s = settings.step_size`` and ``x_{-1} = x_0 = 0``, i.e. the feedback
    uses a blend of the two latest estimates. A failed sweep (breakdown,
    blow-up, non-positive cavity precision) ends the run with status
    ``InnerFailure``.
    """
    settings = settings or OuterSettings()
    h = np.asarray(h, dtype=float)
    Jl, rho = _loaded(J, loading, settings)
    g = loading.gamma
    inner = settings.inner
    s = settings.step_size

    state = init_messages(Jl)
    h_t = h.copy()
    x = np.zeros(J.n)
    x_prev = x
    var = None
    residuals = []
    status = FixStatus.MAX_OUTER
    inner_status = None
    steps = 0
    for _ in range(settings.max_outer):
        steps += 1
        try:
            state, _ = sweep(Jl, h_t, state, inner.pivot_floor)
            x_new, var = infer(Jl, h_t, state, inner.pivot_floor)
        except NumericalBreakdown:
            status, inner_status = FixStatus.INNER_FAILURE, Status.NUMERICAL_BREAKDOWN
            break
        peak = max(np.abs(state.alpha).max(initial=0.0), np.abs(state.beta).max(initial=0.0))
        if not np.isfinite(peak) or peak > inner.divergence_bound or (
                inner.require_positive_cavity and state.min_cavity <= 0.0):
            status, inner_status = FixStatus.INNER_FAILURE, Status.DIVERGED
            break
        x_prev, x = x, x_new
        r = _residual(J, x, h)
        residuals.append(r)
        if r <= settings.outer_tol:
            status = FixStatus.CONVERGED
            break
        h_t = h + g * ((1.0 - s) * x_prev + s * x)

    return FixedSolveReport(
        solution=x,
        status=status,
        outer_iterations=steps,
        inner_iterations_per_step=np.ones(steps, dtype=int),
        outer_residual_history=np.array(residuals),
        gamma_used=g.copy(),
        rho_loaded=rho,
        inner_status=inner_status,
        variances=var,
    )
