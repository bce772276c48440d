"""Random-spreading CDMA multiuser detection experiments.

The MMSE detector solves ``(S^T S + sigma2 I) x = y``, where ``S`` is the
``n x k`` spreading matrix (chips x users) and ``y`` is the matched-filter
output ``S^T (S x_true + noise)``. At realistic loads the normalized system
is far from walk-summable, so plain GaBP diverges.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .correction import (FixStatus, OuterSettings, compute_dd_loading, compute_uniform_loading,
                         double_loop_solve, uniform_loading)
from .gabp import GabpSettings, run_gabp
from .matrix import SparseSymMatrix, normalize_unit_diagonal, spectral_radius_abs

SPREADINGS = ("binary", "binary-unit", "gaussian")


@dataclass(frozen=True)
class CdmaConfig:
    """``spreading``: ``binary`` draws +-1 chips, ``binary-unit`` draws +-1/sqrt(n)
    (unit-norm columns), ``gaussian`` draws N(0, 1) chips."""

    n: int = 256
    k: int = 64
    sigma2: float = 1.0
    seed: int = 7
    spreading: str = "binary"

    def __post_init__(self):
        if not (self.n >= self.k >= 1):
            raise ValueError(f"need n >= k >= 1, got n={self.n}, k={self.k}")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.spreading not in SPREADINGS:
            raise ValueError(f"unknown spreading {self.spreading!r}; choose from {SPREADINGS}")


@dataclass
class CdmaProblem:
    S: np.ndarray
    A: SparseSymMatrix
    y: np.ndarray
    x_true: np.ndarray

    def dense_solution(self):
        return np.linalg.solve(self.A.to_dense(), self.y)


def gen_cdma(config):
    rng = np.random.default_rng(config.seed)
    n, k = config.n, config.k
    if config.spreading == "gaussian":
        S = rng.standard_normal((n, k))
    else:
        S = rng.choice([-1.0, 1.0], size=(n, k))
        if config.spreading == "binary-unit":
            S /= np.sqrt(n)
    x_true = rng.choice([-1.0, 1.0], size=k)
    noise = rng.normal(0.0, np.sqrt(config.sigma2), size=n)
    C = S.T @ S
    A = 0.5 * (C + C.T) + config.sigma2 * np.eye(k)
    y = S.T @ (S @ x_true + noise)
    return CdmaProblem(S=S, A=SparseSymMatrix.from_dense(A), y=y, x_true=x_true)


def normalized_rho(A):
    """``rho(|I - C^N|)`` for the diagonally normalized matrix."""
    return spectral_radius_abs(normalize_unit_diagonal(A).R)


def dd_level(A):
    """Uniform loading (unit-diagonal scale) at which ``A`` becomes diagonally dominant."""
    return float(normalize_unit_diagonal(A).R.row_abs_offdiag_sums().max() - 1.0)


@dataclass
class RunReport:
    mode: str
    config: dict
    status: str
    iterations: dict
    summary: dict = field(default_factory=dict)
    trace: str | None = None
    elapsed_s: float = 0.0

    def to_dict(self):
        return {
            "mode": self.mode,
            "config": self.config,
            "status": self.status,
            "iterations": self.iterations,
            "summary": self.summary,
            "trace": self.trace,
            "elapsed_s": self.elapsed_s,
        }


def experiment_divergence(config, settings=None):
    """Plain GaBP on the MMSE system. Returns ``(report, means_trace)``; the trace
    holds the estimate of every user after each sweep."""
    settings = settings or GabpSettings(max_iterations=200)
    t0 = time.perf_counter()
    prob = gen_cdma(config)
    rho = normalized_rho(prob.A)
    res = run_gabp(prob.A, prob.y, settings, record_means=True)
    report = RunReport(
        mode="cdma-diverge",
        config=asdict(config),
        status=res.status.value,
        iterations={"gabp": res.iterations},
        summary={"rho_abs_R": rho, "walk_summable": rho < 1.0,
                 "final_max_change": float(res.residual_history[-1]) if res.iterations else 0.0},
        elapsed_s=time.perf_counter() - t0,
    )
    return report, res.means_history


def _resolve_loading(A, loading):
    if loading is None or loading == "dd":
        return compute_dd_loading(A)
    if loading == "uniform":
        return compute_uniform_loading(A)
    if isinstance(loading, (int, float)):
        return uniform_loading(A, float(loading))
    return loading


def experiment_fixed(config, loading="dd", settings=None, check_tol=1e-4):
    """Double-loop solve of the MMSE system, checked against a dense solve.

    Returns ``(report, solve_report)``.
    """
    settings = settings or OuterSettings(outer_tol=1e-3, inner=GabpSettings(message_tol=1e-6))
    t0 = time.perf_counter()
    prob = gen_cdma(config)
    L = _resolve_loading(prob.A, loading)
    rep = double_loop_solve(prob.A, prob.y, L, settings)
    err = float(np.abs(rep.solution - prob.dense_solution()).max())
    report = RunReport(
        mode="cdma-fixed",
        config=asdict(config),
        status=rep.status.value,
        iterations={"outer": rep.outer_iterations,
                    "inner_total": rep.total_inner_iterations,
                    "inner_median": float(np.median(rep.inner_iterations_per_step))},
        summary={"loading_mode": L.mode,
                 "rho_abs_R": normalized_rho(prob.A),
                 "rho_loaded": rep.rho_loaded,
                 "final_residual": float(rep.outer_residual_history[-1])
                 if rep.outer_residual_history.size else None,
                 "max_abs_error_vs_dense": err,
                 "verified": bool(rep.converged and err <= check_tol),
                 "symbol_errors": int(np.sum(np.sign(rep.solution) != prob.x_true))},
        elapsed_s=time.perf_counter() - t0,
    )
    return report, rep


DEFAULT_GRID = tuple(np.geomspace(0.2, 3.0, 12))


@dataclass(frozen=True)
class SweepConfig:
    """``gamma_grid`` is in units of the diagonal-dominance loading level (1.0 = DD)."""

    gamma_grid: tuple = DEFAULT_GRID
    inner_tol: float = 1e-6
    outer_tol: float = 1e-3
    max_inner: int = 1000
    max_outer: int = 20_000

    def __post_init__(self):
        g = np.asarray(self.gamma_grid, dtype=float)
        if g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
            raise ValueError("gamma_grid must be positive and strictly increasing")
        object.__setattr__(self, "gamma_grid", tuple(float(v) for v in g))


@dataclass
class SweepRow:
    level: float
    gamma: float
    status: str
    outer_iterations: int
    avg_inner_iterations: float
    total_iterations: int
    rho_loaded: float

    HEADER = ("gamma_normalized", "gamma", "status", "outer_iterations",
              "avg_inner_iterations", "total_iterations", "rho_loaded")

    def as_row(self):
        return (self.level, self.gamma, self.status, self.outer_iterations,
                self.avg_inner_iterations, self.total_iterations, self.rho_loaded)


def _threads():
    try:
        return max(0, int(os.environ.get("GABPFIX_THREADS", "0")))
    except ValueError:
        return 0


def experiment_sweep(config, sweep=None):
    """Outer/inner iteration counts across uniform loadings.

    Each grid value ``g`` loads the unit-diagonal model by ``g * dd_level(A)``.
    Points where the inner solver fails are kept in the table with their status.
    Returns ``(report, rows)`` with rows in grid order.
    """
    sweep = sweep or SweepConfig()
    t0 = time.perf_counter()
    prob = gen_cdma(config)
    unit = dd_level(prob.A)
    if unit <= 0:
        raise ValueError("matrix is already diagonally dominant; the DD-normalized grid is undefined")
    settings = OuterSettings(
        outer_tol=sweep.outer_tol,
        max_outer=sweep.max_outer,
        inner=GabpSettings(message_tol=sweep.inner_tol, max_iterations=sweep.max_inner),
        check_walk_summable=False,
    )

    def point(level):
        gamma = level * unit
        rep = double_loop_solve(prob.A, prob.y, uniform_loading(prob.A, gamma), settings)
        counts = rep.inner_iterations_per_step
        return SweepRow(level, gamma, rep.status.value, rep.outer_iterations,
                        float(counts.mean()) if counts.size else 0.0,
                        int(counts.sum()), rep.rho_loaded)

    workers = _threads()
    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(point, sweep.gamma_grid))
    else:
        rows = [point(g) for g in sweep.gamma_grid]

    ok = [r for r in rows if r.status == FixStatus.CONVERGED.value]
    best = min(ok, key=lambda r: r.total_iterations) if ok else None
    report = RunReport(
        mode="cdma-sweep",
        config={**asdict(config), **asdict(sweep)},
        status="Converged" if len(ok) == len(rows) else "Partial",
        iterations={"points": len(rows), "converged_points": len(ok)},
        summary={"dd_level": unit,
                 "walk_summable_threshold": (normalized_rho(prob.A) - 1.0) / unit,
                 "best_gamma_normalized": best.level if best else None,
                 "best_total_iterations": best.total_iterations if best else None},
        elapsed_s=time.perf_counter() - t0,
    )
    return report, rows
