import numpy as np
import pytest

from gabpfix.cdma import (CdmaConfig, SweepConfig, dd_level, experiment_divergence,
                          experiment_fixed, experiment_sweep, gen_cdma, normalized_rho)
from gabpfix.correction import OuterSettings, compute_dd_loading
from gabpfix.gabp import GabpSettings


class TestGenerator:
    def test_single_user_unit_chips(self):
        prob = gen_cdma(CdmaConfig(n=8, k=1, sigma2=0.5, spreading="binary-unit"))
        np.testing.assert_allclose(prob.A.to_dense(), [[1.5]])

    def test_binary_diagonal(self):
        prob = gen_cdma(CdmaConfig(n=16, k=4, sigma2=1.0))
        np.testing.assert_allclose(prob.A.diag, 17.0)
        assert set(np.unique(prob.S)) <= {-1.0, 1.0}
        assert set(np.unique(prob.x_true)) <= {-1.0, 1.0}

    def test_matches_definition(self):
        cfg = CdmaConfig(n=20, k=5, sigma2=0.3, seed=11, spreading="gaussian")
        prob = gen_cdma(cfg)
        np.testing.assert_allclose(prob.A.to_dense(), prob.S.T @ prob.S + 0.3 * np.eye(5), rtol=1e-12)
        # same draw order: S, symbols, noise
        rng = np.random.default_rng(11)
        S = rng.standard_normal((20, 5))
        x = rng.choice([-1.0, 1.0], size=5)
        noise = rng.normal(0.0, np.sqrt(0.3), size=20)
        np.testing.assert_allclose(prob.y, S.T @ (S @ x + noise), rtol=1e-12)

    def test_deterministic(self):
        a = gen_cdma(CdmaConfig(seed=3))
        b = gen_cdma(CdmaConfig(seed=3))
        assert a.y.tobytes() == b.y.tobytes()
        assert a.A.to_dense().tobytes() == b.A.to_dense().tobytes()

    @pytest.mark.parametrize("kw", [dict(n=4, k=5), dict(k=0), dict(sigma2=0.0), dict(spreading="x")])
    def test_bad_config(self, kw):
        with pytest.raises(ValueError):
            CdmaConfig(**kw)


def test_most_draws_not_walk_summable():
    hits = sum(normalized_rho(gen_cdma(CdmaConfig(seed=s)).A) > 1 for s in range(20))
    assert hits >= 15


def test_light_load_converges_plainly():
    report, trace = experiment_divergence(CdmaConfig(n=64, k=2, sigma2=10.0, seed=1),
                                          GabpSettings(max_iterations=500))
    assert report.status == "Converged"
    assert trace.shape == (report.iterations["gabp"], 2)


def test_default_draw_diverges():
    report, trace = experiment_divergence(CdmaConfig(seed=7))
    assert report.status == "Diverged"
    assert report.summary["rho_abs_R"] > 1 and not report.summary["walk_summable"]
    assert trace.shape[1] == 64


def test_fixed_verified():
    report, rep = experiment_fixed(CdmaConfig(seed=7))
    assert report.status == "Converged"
    assert report.summary["verified"]
    assert report.summary["rho_loaded"] < 1
    assert report.summary["max_abs_error_vs_dense"] <= 1e-4
    assert list(report.to_dict()) == ["mode", "config", "status", "iterations", "summary",
                                      "trace", "elapsed_s"]


def test_loading_tradeoff():
    cfg = CdmaConfig(seed=2)
    prob = gen_cdma(cfg)
    dd = compute_dd_loading(prob.A)
    base, _ = experiment_fixed(cfg, dd)
    heavy, _ = experiment_fixed(cfg, type(dd)("custom", 10 * dd.gamma, dd.margin, None))
    # half the DD level leaves the model short of walk-summability; the solve still converges
    unchecked = OuterSettings(outer_tol=1e-3, inner=GabpSettings(message_tol=1e-6),
                              check_walk_summable=False)
    light, _ = experiment_fixed(cfg, 0.5 * dd_level(prob.A), unchecked)
    assert light.summary["rho_loaded"] > 1
    assert heavy.iterations["outer"] > base.iterations["outer"] > light.iterations["outer"]
    assert light.status == base.status == heavy.status == "Converged"


def test_small_sweep():
    cfg = CdmaConfig(n=64, k=24, seed=5)
    report, rows = experiment_sweep(cfg, SweepConfig(gamma_grid=(0.5, 1.0, 2.0)))
    assert [r.level for r in rows] == [0.5, 1.0, 2.0]
    assert report.iterations == {"points": 3, "converged_points": 3}
    outer = [r.outer_iterations for r in rows]
    assert outer == sorted(outer)
    for r in rows:
        assert r.total_iterations >= r.outer_iterations


def test_sweep_grid_validated():
    with pytest.raises(ValueError):
        SweepConfig(gamma_grid=(1.0, 0.5))
    with pytest.raises(ValueError):
        SweepConfig(gamma_grid=())
