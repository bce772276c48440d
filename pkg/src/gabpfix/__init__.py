"""Gaussian belief propagation with diagonal loading.

Solves ``J x = h`` for any symmetric positive-definite ``J``, including
models where plain GaBP fails to converge.
"""
from .correction import (FixStatus, FixedSolveReport, LoadingSpec, OuterSettings,
                         compute_dd_loading, compute_uniform_loading, contraction_factor,
                         custom_loading, double_loop_solve, single_loop_solve, uniform_loading)
from .errors import (DimensionTooLarge, GabpError, NoConvergence, NonPositiveDiagonal,
                     NotWalkSummableAfterLoading, NumericalBreakdown)
from .gabp import GabpResult, GabpSettings, MessageState, Status, infer, init_messages, run_gabp, sweep
from .lsq import build_augmented, normal_equations, regularized_lsq_solve
from .matrix import (NormalizedModel, SparseSymMatrix, is_diag_dominant, is_walk_summable,
                     normalize_unit_diagonal, recover_solution, spectral_radius_abs)

__version__ = "0.1.0"
