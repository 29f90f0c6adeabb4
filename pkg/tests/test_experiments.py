"""Tests for the experiment drivers (selftest, surfaces, depth, deviation)."""

import numpy as np
import pytest

from lorentzgen import experiments as ex


class TestSelftest:
    def test_all_properties_pass(self):
        results = ex.run_selftest(seed=0, cases=1500)
        assert results and all(r.passed for r in results)

    def test_fault_injection_is_caught(self):
        results = ex.run_selftest(seed=0, cases=500, time_bias=1e-6)
        failed = [r.name for r in results if not r.passed]
        assert "hyperboloid closure (lift)" in failed

    def test_deterministic(self):
        a = ex.run_selftest(seed=3, cases=500)
        b = ex.run_selftest(seed=3, cases=500)
        assert [(r.name, r.max_error) for r in a] == [(r.name, r.max_error) for r in b]


class TestGradSurface:
    def test_direct_bounded_tangent_not(self):
        surf = ex.concat_grad_surface(points=81)
        for comp in ("time", "s0", "s1"):
            assert np.abs(surf.panels[("direct", comp)]).max() <= 1.0 + 1e-9
        tangent_max = max(np.abs(surf.panels[("tangent", c)]).max() for c in ("time", "s0", "s1"))
        assert tangent_max >= 10.0

    def test_direct_matches_closed_form(self):
        # time-row entries are x_s / z_t; spatial rows are 0/1 copies
        surf = ex.concat_grad_surface(extent=5.0, points=21)
        xs = surf.xs
        xg, yg = np.meshgrid(xs, xs, indexing="ij")
        zt = np.sqrt(xg**2 + yg**2 + 1.0)
        np.testing.assert_allclose(surf.panels[("direct", "time")], xg / zt, atol=1e-12)
        np.testing.assert_allclose(surf.panels[("direct", "s0")], np.ones_like(xg), atol=1e-12)
        np.testing.assert_allclose(surf.panels[("direct", "s1")], np.zeros_like(xg), atol=1e-12)

    def test_near_origin_local_identity(self):
        surf = ex.concat_grad_surface(extent=100.0, points=401)
        mid = 200  # x_s = y_s = 0
        for method in ("direct", "tangent"):
            assert abs(surf.panels[(method, "s0")][mid, mid] - 1.0) <= 1e-6

    def test_jacobian_bound_on_random_dims(self):
        rng = np.random.default_rng(0)
        worst = ex.direct_concat_jacobian_bound(rng, samples=2000)
        assert worst <= 1.0 + 1e-9


class TestDepthStudy:
    def test_tangent_grads_dominate_early_blocks(self):
        td = ex.depth_study("direct", width=8, depth=12, steps=5, batch=8, seed=0)
        tt = ex.depth_study("tangent", width=8, depth=12, steps=5, batch=8, seed=0)
        assert td.nan_events == 0
        early_d = np.nanmean(td.grad_norms[:, :5])
        early_t = np.nanmean(tt.grad_norms[:, :5])
        assert early_t > early_d

    def test_trace_shapes(self):
        trace = ex.depth_study("direct", width=4, depth=3, steps=4, batch=4, seed=1)
        assert trace.grad_norms.shape == (4, 3)
        assert trace.losses.shape == (4,)
        assert np.all(np.isfinite(trace.losses))

    def test_unknown_concat_rejected(self):
        with pytest.raises(ValueError):
            ex.DepthNet(4, 2, "euclidean")


class TestDistanceDeviation:
    def test_nonnegative_and_deterministic(self):
        a = ex.concat_distance_deviation("wrapped-normal", 8, 500, np.random.default_rng(5))
        b = ex.concat_distance_deviation("wrapped-normal", 8, 500, np.random.default_rng(5))
        assert np.array_equal(a.direct, b.direct) and np.array_equal(a.tangent, b.tangent)
        assert np.all(a.direct >= 0) and np.all(a.tangent >= 0)

    @pytest.mark.parametrize("dim", [16, 64])
    def test_direct_median_below_tangent_for_wrapped(self, dim):
        sample = ex.concat_distance_deviation("wrapped-normal", dim, 3000, np.random.default_rng(6))
        assert np.median(sample.direct) <= np.median(sample.tangent)

    def test_unknown_scenario(self):
        with pytest.raises(ValueError):
            ex.concat_distance_deviation("cauchy", 4, 10, np.random.default_rng(0))


class TestToyRun:
    def test_smoke_and_schema(self):
        res = ex.toy2d_run("8gaussians", seed=1, epochs=1, train_count=512, eval_count=128)
        assert len(res.energy_by_epoch) == 1
        assert np.isfinite(res.energy_by_epoch[0])
        assert res.final_samples_tangent.shape == (128, 3)
        assert len(res.history.rows) == 512 // 128
