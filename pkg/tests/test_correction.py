import numpy as np
import pytest

from gabpfix.correction import (FixStatus, OuterSettings, compute_dd_loading,
                                compute_uniform_loading, contraction_factor, contraction_spectrum,
                                custom_loading, double_loop_solve, single_loop_solve,
                                uniform_loading)
from gabpfix.errors import DimensionTooLarge, NotWalkSummableAfterLoading
from gabpfix.gabp import GabpSettings
from gabpfix.matrix import (SparseSymMatrix, is_diag_dominant, is_walk_summable,
                            normalize_unit_diagonal, spectral_radius_abs)

from _models import frustrated_cycle, random_sparse_pd, random_walk_summable


def loaded_rho(J, loading):
    return spectral_radius_abs(normalize_unit_diagonal(loading.apply(J)).R)


def random_spd(rng, n):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return (Q * rng.uniform(0.1, 5.0, n)) @ Q.T


class TestUniformLoading:
    def test_walk_summable_needs_none(self):
        rng = np.random.default_rng(0)
        J = SparseSymMatrix.from_dense(random_walk_summable(rng, 10, 0.5))
        L = compute_uniform_loading(J, margin=0.01)
        assert L.level == 0.0 and not L.gamma.any()

    def test_frustrated_cycle(self):
        J = frustrated_cycle()
        L = compute_uniform_loading(J, margin=0.05)
        assert L.level == pytest.approx(0.25, rel=1e-9)
        np.testing.assert_allclose(L.gamma, 0.25, rtol=1e-9)
        # oracle: dense eigensolve of |R'| against rho(|R|) / (1 + gamma)
        Jl = L.apply(J).to_dense()
        d = np.sqrt(np.diag(Jl))
        R_loaded = np.eye(3) - Jl / np.outer(d, d)
        dense = np.abs(np.linalg.eigvalsh(np.abs(R_loaded))).max()
        assert dense == pytest.approx(1.2 / 1.25)
        assert loaded_rho(J, L) == pytest.approx(0.96, rel=1e-9)

    def test_scaled_diagonal_maps_back(self):
        rng = np.random.default_rng(1)
        J = SparseSymMatrix.from_dense(random_sparse_pd(rng, 15, density=0.5))
        L = compute_uniform_loading(J)
        np.testing.assert_allclose(L.gamma, L.level * J.diag)
        assert is_walk_summable(L.apply(J))[0]

    def test_reported_cdma_radius(self):
        # rho(|R|) = 4.24 -> gamma = 3.24 + margin
        J = frustrated_cycle()
        L = compute_uniform_loading(J, margin=0.02, rho=4.24)
        assert L.level == pytest.approx(3.26)

    def test_margin_positive(self):
        with pytest.raises(ValueError):
            compute_uniform_loading(frustrated_cycle(), margin=0.0)


class TestDDLoading:
    def test_already_dominant(self):
        J = SparseSymMatrix.from_dense([[2, 0.5], [0.5, 2]])
        assert not compute_dd_loading(J, margin=0.01).gamma.any()

    def test_frustrated_cycle(self):
        J = frustrated_cycle()
        L = compute_dd_loading(J, margin=0.01)
        np.testing.assert_allclose(L.gamma, 0.21)
        Jl = L.apply(J)
        assert np.all(Jl.diag == pytest.approx(1.21)) and is_diag_dominant(Jl)
        assert is_walk_summable(Jl)[0]

    def test_diagonal_matrix(self):
        J = SparseSymMatrix.from_dense(np.diag([1.0, 2.0, 3.0]))
        assert not compute_dd_loading(J).gamma.any()

    @pytest.mark.parametrize("seed", range(10))
    def test_random_result_is_dominant(self, seed):
        rng = np.random.default_rng(seed)
        J = SparseSymMatrix.from_dense(random_sparse_pd(rng, 20, density=0.4))
        assert is_diag_dominant(compute_dd_loading(J).apply(J))


def test_negative_loading_rejected():
    with pytest.raises(ValueError):
        custom_loading([0.1, -0.1])


class TestContraction:
    def test_zero_loading(self):
        assert contraction_factor(frustrated_cycle(), 0.0) == 0.0

    def test_identity(self):
        J = SparseSymMatrix.from_dense(np.eye(2))
        assert contraction_factor(J, 1.0) == pytest.approx(0.5)
        assert contraction_factor(J, 3.0) == pytest.approx(0.75)

    def test_frustrated_cycle_mapping(self):
        J = frustrated_cycle()
        g = np.full(3, 0.25)
        lam = contraction_spectrum(J, g)
        c = contraction_factor(J, g)
        assert 0 < c < 1
        # mu = 0.4 is the smallest eigenvalue of J: 0.25 / 0.65
        assert c == pytest.approx(0.25 / 0.65)
        sg = np.sqrt(g)
        other = np.linalg.eigvalsh(sg[:, None] * np.linalg.inv(J.to_dense()) * sg[None, :])
        np.testing.assert_allclose(np.sort(lam / (1 - lam)), np.sort(other), atol=1e-12)

    def test_agrees_with_plain_eigvals(self):
        rng = np.random.default_rng(4)
        A = random_spd(rng, 12)
        g = rng.uniform(0, 2, 12)
        M = np.linalg.solve(A + np.diag(g), np.diag(g))
        expected = np.abs(np.linalg.eigvals(M)).max()
        assert contraction_factor(SparseSymMatrix.from_dense(A), g) == pytest.approx(expected, rel=1e-10)

    def test_dimension_cap(self):
        J = SparseSymMatrix.from_dense(np.eye(5))
        with pytest.raises(DimensionTooLarge):
            contraction_factor(J, 1.0, cap=4)

    def test_monotone_in_uniform_loading(self):
        rng = np.random.default_rng(5)
        J = SparseSymMatrix.from_dense(random_spd(rng, 10))
        values = [contraction_factor(J, uniform_loading(J, g)) for g in np.geomspace(0.01, 100, 15)]
        assert np.all(np.diff(values) > 0)


class TestDoubleLoop:
    def test_zero_loading_one_step(self):
        rng = np.random.default_rng(2)
        A = random_walk_summable(rng, 15, 0.7)
        h = rng.normal(size=15)
        J = SparseSymMatrix.from_dense(A)
        rep = double_loop_solve(J, h, custom_loading(np.zeros(15)),
                                OuterSettings(outer_tol=1e-6, inner=GabpSettings(message_tol=1e-12)))
        assert rep.status is FixStatus.CONVERGED
        assert rep.outer_iterations == 1
        np.testing.assert_allclose(rep.solution, np.linalg.solve(A, h), atol=1e-8)

    def test_frustrated_cycle(self):
        J = frustrated_cycle()
        h = np.array([1.0, -2.0, 0.5])
        L = uniform_loading(J, 0.25)
        rep = double_loop_solve(J, h, L)
        assert rep.converged
        assert rep.outer_residual_history[-1] <= 1e-8
        np.testing.assert_allclose(rep.solution, np.linalg.solve(J.to_dense(), h), atol=1e-8)
        assert rep.rho_loaded == pytest.approx(0.96, rel=1e-9)
        # generic rhs: geometric decay at the contraction factor
        res = rep.outer_residual_history
        ratios = res[3:8] / res[2:7]
        np.testing.assert_allclose(ratios, contraction_factor(J, L), rtol=0.05)

    def test_insufficient_custom_loading(self):
        J = frustrated_cycle()
        with pytest.raises(NotWalkSummableAfterLoading) as exc:
            double_loop_solve(J, np.ones(3), custom_loading(np.full(3, 0.1)))
        assert exc.value.rho == pytest.approx(1.2 / 1.1)

    def test_check_can_be_disabled(self):
        J = frustrated_cycle()
        rep = double_loop_solve(J, np.ones(3), custom_loading(np.full(3, 0.1)),
                                OuterSettings(check_walk_summable=False))
        assert rep.rho_loaded > 1
        assert rep.status in (FixStatus.CONVERGED, FixStatus.INNER_FAILURE)

    def test_inner_failure_reported(self):
        J = frustrated_cycle()
        rep = double_loop_solve(J, np.ones(3), uniform_loading(J, 0.25),
                                OuterSettings(inner=GabpSettings(max_iterations=3)))
        assert rep.status is FixStatus.INNER_FAILURE
        assert rep.outer_iterations == 1

    def test_max_outer(self):
        J = frustrated_cycle()
        rep = double_loop_solve(J, np.ones(3), uniform_loading(J, 5.0), OuterSettings(max_outer=3))
        assert rep.status is FixStatus.MAX_OUTER and rep.outer_iterations == 3

    @pytest.mark.parametrize("seed", range(12))
    def test_random_pd_any_start(self, seed):
        rng = np.random.default_rng(300 + seed)
        n = int(rng.integers(2, 30))
        A = random_sparse_pd(rng, n, density=0.4)
        h = rng.normal(size=n)
        J = SparseSymMatrix.from_dense(A)
        rep = double_loop_solve(J, h, compute_uniform_loading(J))
        assert rep.converged
        assert np.abs(A @ rep.solution - h).max() <= 1e-8
        assert rep.rho_loaded < 1


class TestSingleLoop:
    def test_zero_loading_is_plain_gabp(self):
        rng = np.random.default_rng(7)
        A = random_walk_summable(rng, 12, 0.6)
        h = rng.normal(size=12)
        rep = single_loop_solve(SparseSymMatrix.from_dense(A), h, custom_loading(np.zeros(12)))
        assert rep.converged
        np.testing.assert_allclose(rep.solution, np.linalg.solve(A, h), atol=1e-7)
        assert np.all(rep.inner_iterations_per_step == 1)

    def test_frustrated_cycle_symmetric_rhs(self):
        # h = ones stays in the symmetric eigenspace of the cycle, where s = 0.5 is stable
        J = frustrated_cycle()
        h = np.ones(3)
        rep = single_loop_solve(J, h, uniform_loading(J, 0.25), OuterSettings(step_size=0.5))
        assert rep.converged
        np.testing.assert_allclose(rep.solution, np.linalg.solve(J.to_dense(), h), atol=1e-6)

    def test_frustrated_cycle_generic_rhs_needs_small_step(self):
        # linearized map: spectral radius ~1.03 at s = 0.5 and ~0.98 at s = 0.3
        J = frustrated_cycle()
        h = np.array([1.0, -0.5, 2.0])
        L = uniform_loading(J, 0.25)
        half = single_loop_solve(J, h, L, OuterSettings(step_size=0.5, max_outer=5000))
        assert half.status is FixStatus.INNER_FAILURE
        small = single_loop_solve(J, h, L, OuterSettings(step_size=0.3, max_outer=5000))
        assert small.converged
        np.testing.assert_allclose(small.solution, np.linalg.solve(J.to_dense(), h), atol=1e-6)

    def test_frustrated_cycle_heavier_loading(self):
        J = frustrated_cycle()
        h = np.array([1.0, -0.5, 2.0])
        rep = single_loop_solve(J, h, uniform_loading(J, 0.5), OuterSettings(step_size=0.5))
        assert rep.converged
        np.testing.assert_allclose(rep.solution, np.linalg.solve(J.to_dense(), h), atol=1e-6)

    def test_aggressive_step_reports(self):
        J = frustrated_cycle()
        rep = single_loop_solve(J, np.ones(3), uniform_loading(J, 0.25),
                                OuterSettings(step_size=0.95, max_outer=500))
        assert rep.status in (FixStatus.MAX_OUTER, FixStatus.INNER_FAILURE, FixStatus.CONVERGED)
        assert rep.outer_iterations <= 500

    def test_step_size_range(self):
        with pytest.raises(ValueError):
            OuterSettings(step_size=1.0)


@pytest.mark.parametrize("seed", range(12))
def test_solvers_agree_with_dense(seed):
    rng = np.random.default_rng(500 + seed)
    n = int(rng.integers(2, 25))
    A = random_sparse_pd(rng, n, density=0.4)
    h = rng.normal(size=n)
    J = SparseSymMatrix.from_dense(A)
    L = compute_dd_loading(J)
    exact = np.linalg.solve(A, h)
    dbl = double_loop_solve(J, h, L)
    sgl = single_loop_solve(J, h, L, OuterSettings(step_size=0.5, max_outer=50_000))
    assert dbl.converged and sgl.converged
    np.testing.assert_allclose(dbl.solution, exact, atol=1e-6)
    np.testing.assert_allclose(sgl.solution, exact, atol=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_loaded_radius_identity(seed):
    rng = np.random.default_rng(seed)
    J = SparseSymMatrix.from_dense(random_sparse_pd(rng, int(rng.integers(2, 40)), density=0.3))
    rho = spectral_radius_abs(normalize_unit_diagonal(J).R)
    gamma = rng.uniform(0.01, 5.0)
    assert loaded_rho(J, uniform_loading(J, gamma)) == pytest.approx(rho / (1 + gamma), abs=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_contraction_below_one(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 31))
    A = random_spd(rng, n)
    g = rng.uniform(0, 3, n) * (rng.random(n) < 0.8)
    assert contraction_factor(SparseSymMatrix.from_dense(A), g) < 1
