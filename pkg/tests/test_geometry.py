"""Property and example tests for the hyperboloid geometry core."""

import numpy as np
import pytest

from lorentzgen import geometry as geo
from lorentzgen.geometry import Curvature, LorentzPoint, TangentVector

K1 = Curvature(-1.0)


def random_point(rng, n, curvature=K1, spread=1.0):
    return LorentzPoint.from_spatial(rng.standard_normal(n) * spread, curvature)


def random_tangent(rng, base, spread=1.0):
    return TangentVector.project(base, rng.standard_normal(base.n + 1) * spread)


class TestCurvature:
    def test_rejects_nonnegative(self):
        with pytest.raises(ValueError):
            Curvature(0.0)
        with pytest.raises(ValueError):
            Curvature(0.5)

    def test_radius(self):
        assert Curvature(-4.0).radius == 0.5


class TestInnerProduct:
    def test_origin_self_inner_is_inverse_curvature(self):
        o = LorentzPoint.origin(4, K1)
        assert geo.lorentz_inner(o.coords, o.coords) == pytest.approx(-1.0)

    def test_hand_evaluated_bilinear_form(self):
        x = np.array([np.sqrt(2.0), 1.0])
        o = np.array([1.0, 0.0])
        assert geo.lorentz_inner(x, x) == pytest.approx(-1.0)
        assert geo.lorentz_inner(x, o) == pytest.approx(-np.sqrt(2.0))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            geo.lorentz_inner(np.ones(3), np.ones(4))


class TestLift:
    def test_zero_spatial_is_origin(self):
        p = geo.lift_spatial(np.zeros(3), K1)
        np.testing.assert_allclose(p.coords, [1.0, 0.0, 0.0, 0.0])

    def test_hand_values(self):
        p = geo.lift_spatial(np.array([1.0]), K1)
        np.testing.assert_allclose(p.coords, [np.sqrt(2.0), 1.0])
        q = geo.lift_spatial(np.array([3.0, 4.0]), K1)
        np.testing.assert_allclose(q.coords, [np.sqrt(26.0), 3.0, 4.0])

    def test_closure_for_random_inputs(self):
        rng = np.random.default_rng(0)
        pts = geo.lift(rng.uniform(-10, 10, size=(10_000, 6)), -1.0)
        assert geo.manifold_error(pts, -1.0).max() <= 1e-9 * (np.abs(pts) ** 2).sum(-1).max()


class TestDistance:
    def test_self_distance_zero(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            p = random_point(rng, 4)
            assert geo.distance(p, p) == 0.0

    def test_unit_geodesic(self):
        o = LorentzPoint.origin(1, K1)
        y = LorentzPoint.from_coords([np.cosh(1.0), np.sinh(1.0)], K1)
        assert geo.distance(o, y) == pytest.approx(1.0, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        x = geo.random_points(rng, 1000, 5, -1.0)
        y = geo.random_points(rng, 1000, 5, -1.0)
        np.testing.assert_allclose(
            geo.lorentz_distance(x, y, -1.0), geo.lorentz_distance(y, x, -1.0), rtol=0, atol=1e-12
        )

    def test_triangle_inequality(self):
        rng = np.random.default_rng(3)
        x, y, z = (geo.random_points(rng, 2000, 4, -1.0, spread=2.0) for _ in range(3))
        dxz = geo.lorentz_distance(x, z, -1.0)
        dxy = geo.lorentz_distance(x, y, -1.0)
        dyz = geo.lorentz_distance(y, z, -1.0)
        assert np.all(dxz <= dxy + dyz + 1e-9)

    def test_curvature_mismatch(self):
        p = LorentzPoint.origin(2, K1)
        q = LorentzPoint.origin(2, Curvature(-2.0))
        with pytest.raises(ValueError):
            geo.distance(p, q)


class TestExpLog:
    def test_exp_of_zero_is_identity(self):
        rng = np.random.default_rng(4)
        p = random_point(rng, 3)
        v = TangentVector(p, np.zeros(4))
        np.testing.assert_allclose(geo.exp_map(p, v).coords, p.coords, atol=1e-15)

    def test_exp_along_axis(self):
        o = LorentzPoint.origin(1, K1)
        v = TangentVector(o, np.array([0.0, 1.0]))
        np.testing.assert_allclose(geo.exp_map(o, v).coords, [np.cosh(1.0), np.sinh(1.0)], atol=1e-12)

    def test_log_along_axis(self):
        o = LorentzPoint.origin(1, K1)
        y = LorentzPoint.from_coords([np.cosh(1.0), np.sinh(1.0)], K1)
        np.testing.assert_allclose(geo.log_map(o, y).components, [0.0, 1.0], atol=1e-12)

    def test_log_of_base_is_zero(self):
        rng = np.random.default_rng(5)
        p = random_point(rng, 6)
        np.testing.assert_allclose(geo.log_map(p, p).components, np.zeros(7), atol=1e-15)

    def test_roundtrip(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            p = random_point(rng, 5, spread=1.5)
            v = random_tangent(rng, p)
            nv = v.norm
            if nv > 5.0:
                v = TangentVector(p, v.components * (5.0 / nv))
            w = geo.log_map(p, geo.exp_map(p, v))
            err = np.linalg.norm(w.components - v.components)
            assert err <= 1e-6 * max(1.0, v.norm)

    def test_log_norm_equals_distance(self):
        rng = np.random.default_rng(7)
        x = geo.random_points(rng, 1000, 4, -1.0, spread=1.5)
        y = geo.random_points(rng, 1000, 4, -1.0, spread=1.5)
        d = geo.lorentz_distance(x, y, -1.0)
        v = geo.log_map_arr(x, y, -1.0)
        nrm = np.sqrt(np.maximum(geo.minkowski_inner(v, v), 0.0))
        np.testing.assert_allclose(nrm, d, rtol=1e-7, atol=1e-12)

    def test_non_tangent_rejected(self):
        p = LorentzPoint.origin(2, K1)
        with pytest.raises(ValueError):
            TangentVector(p, np.array([1.0, 0.0, 0.0]))


class TestParallelTransport:
    def test_identity_transport(self):
        rng = np.random.default_rng(8)
        p = random_point(rng, 4)
        v = random_tangent(rng, p)
        np.testing.assert_allclose(
            geo.parallel_transport(p, p, v).components, v.components, atol=1e-12
        )

    def test_isometry(self):
        rng = np.random.default_rng(9)
        for _ in range(1000):
            x = random_point(rng, 3)
            y = random_point(rng, 3)
            u = random_tangent(rng, x)
            v = random_tangent(rng, x)
            pu = geo.parallel_transport(x, y, u)
            pv = geo.parallel_transport(x, y, v)
            before = geo.lorentz_inner(u.components, v.components)
            after = geo.lorentz_inner(pu.components, pv.components)
            assert abs(before - after) <= 1e-8 * max(1.0, abs(before))

    def test_axis_example(self):
        o = LorentzPoint.origin(1, K1)
        y = LorentzPoint.from_coords([np.cosh(1.0), np.sinh(1.0)], K1)
        v = TangentVector(o, np.array([0.0, 1.0]))
        out = geo.parallel_transport(o, y, v)
        assert abs(geo.lorentz_inner(y.coords, out.components)) <= 1e-12
        assert out.norm == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(out.components, [np.sinh(1.0), np.cosh(1.0)], atol=1e-12)


class TestGeodesic:
    def test_endpoints(self):
        rng = np.random.default_rng(10)
        x, y = random_point(rng, 4), random_point(rng, 4)
        np.testing.assert_allclose(geo.geodesic_point(x, y, 0.0).coords, x.coords, atol=1e-7)
        np.testing.assert_allclose(geo.geodesic_point(x, y, 1.0).coords, y.coords, atol=1e-7)

    def test_midpoint_equidistant(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            x, y = random_point(rng, 3), random_point(rng, 3)
            m = geo.geodesic_point(x, y, 0.5)
            assert geo.distance(x, m) == pytest.approx(geo.distance(m, y), abs=1e-6)

    def test_known_quarter_point(self):
        o = LorentzPoint.origin(1, K1)
        y = LorentzPoint.from_coords([np.cosh(2.0), np.sinh(2.0)], K1)
        g = geo.geodesic_point(o, y, 0.25)
        np.testing.assert_allclose(g.coords, [np.cosh(0.5), np.sinh(0.5)], atol=1e-10)

    def test_speed_identity(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            x, y = random_point(rng, 5), random_point(rng, 5)
            t = rng.uniform()
            d = geo.distance(x, geo.geodesic_point(x, y, t))
            assert abs(d - t * geo.distance(x, y)) <= 1e-6

    def test_parameter_range(self):
        rng = np.random.default_rng(13)
        x, y = random_point(rng, 2), random_point(rng, 2)
        with pytest.raises(ValueError):
            geo.geodesic_point(x, y, 1.5)


class TestEuclideanLift:
    def test_zero_maps_to_origin(self):
        p = geo.e2h(np.zeros(4), K1)
        np.testing.assert_allclose(p.coords, geo.origin(4, -1.0))

    def test_axis_value(self):
        p = geo.e2h(np.array([1.0]), K1)
        np.testing.assert_allclose(p.coords, [np.cosh(1.0), np.sinh(1.0)], atol=1e-12)

    def test_spatial_norm_growth(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            t = rng.standard_normal(5) * rng.uniform(0.1, 3.0)
            p = geo.e2h(t, K1)
            assert np.linalg.norm(p.spatial) == pytest.approx(np.sinh(np.linalg.norm(t)), rel=1e-10)


class TestConcatenation:
    def test_direct_concat_of_origins(self):
        o2, o3 = LorentzPoint.origin(2, K1), LorentzPoint.origin(3, K1)
        out = geo.direct_concat([o2, o3])
        np.testing.assert_allclose(out.coords, geo.origin(5, -1.0))

    def test_direct_concat_hand_value(self):
        x = LorentzPoint.from_coords([2.0, np.sqrt(3.0)], K1)
        out = geo.direct_concat([x, x])
        np.testing.assert_allclose(out.coords, [np.sqrt(7.0), np.sqrt(3.0), np.sqrt(3.0)], atol=1e-12)
        assert geo.lorentz_inner(out.coords, out.coords) == pytest.approx(-1.0)

    def test_direct_concat_closure(self):
        rng = np.random.default_rng(15)
        xs = geo.random_points(rng, 10_000, 3, -1.0, spread=3.0)
        ys = geo.random_points(rng, 10_000, 4, -1.0, spread=3.0)
        out = geo.direct_concat_arr([xs, ys], -1.0)
        scale = np.maximum(1.0, (out**2).sum(-1))
        assert (geo.manifold_error(out, -1.0) / scale).max() <= 1e-9

    def test_direct_split_inverts_concat_exactly(self):
        rng = np.random.default_rng(16)
        for _ in range(1000):
            x = random_point(rng, 2, spread=2.0)
            y = random_point(rng, 3, spread=2.0)
            a, b = geo.direct_split(geo.direct_concat([x, y]), [2, 3])
            assert np.array_equal(a.coords, x.coords)
            assert np.array_equal(b.coords, y.coords)

    def test_direct_split_hand_value(self):
        z = LorentzPoint.from_coords([np.sqrt(7.0), np.sqrt(3.0), np.sqrt(3.0)], K1)
        a, b = geo.direct_split(z, [1, 1])
        np.testing.assert_allclose(a.coords, [2.0, np.sqrt(3.0)], atol=1e-12)
        np.testing.assert_allclose(b.coords, [2.0, np.sqrt(3.0)], atol=1e-12)

    def test_split_of_origin(self):
        parts = geo.direct_split(LorentzPoint.origin(5, K1), [2, 3])
        for p, n in zip(parts, (2, 3)):
            np.testing.assert_allclose(p.coords, geo.origin(n, -1.0))

    def test_mixed_curvature_rejected(self):
        p = LorentzPoint.origin(2, K1)
        q = LorentzPoint.origin(2, Curvature(-2.0))
        with pytest.raises(ValueError):
            geo.direct_concat([p, q])

    def test_bad_split_dims(self):
        with pytest.raises(ValueError):
            geo.direct_split(LorentzPoint.origin(5, K1), [2, 2])

    def test_tangent_concat_of_origins(self):
        o = LorentzPoint.origin(2, K1)
        out = geo.tangent_concat([o, o])
        np.testing.assert_allclose(out.coords, geo.origin(4, -1.0), atol=1e-15)

    def test_tangent_concat_hand_value(self):
        x = LorentzPoint.from_coords([np.cosh(1.0), np.sinh(1.0)], K1)
        out = geo.tangent_concat([x, x])
        r2 = np.sqrt(2.0)
        np.testing.assert_allclose(
            out.coords, [np.cosh(r2), np.sinh(r2) / r2, np.sinh(r2) / r2], atol=1e-12
        )

    def test_tangent_concat_closure(self):
        rng = np.random.default_rng(17)
        xs = geo.random_points(rng, 5000, 3, -1.0, spread=2.0)
        ys = geo.random_points(rng, 5000, 2, -1.0, spread=2.0)
        out = geo.tangent_concat_arr([xs, ys], -1.0)
        assert geo.manifold_error(out, -1.0).max() <= 1e-7 * np.maximum(1.0, (out**2).sum(-1)).max()

    def test_tangent_split_inverts_concat(self):
        rng = np.random.default_rng(18)
        for _ in range(300):
            x = random_point(rng, 2, spread=1.5)
            y = random_point(rng, 4, spread=1.5)
            a, b = geo.tangent_split(geo.tangent_concat([x, y]), [2, 4])
            np.testing.assert_allclose(a.coords, x.coords, atol=1e-6)
            np.testing.assert_allclose(b.coords, y.coords, atol=1e-6)


class TestCentroid:
    def test_single_point_recovered(self):
        rng = np.random.default_rng(19)
        p = random_point(rng, 4, spread=2.0)
        out = geo.centroid([p], np.array([1.0]))
        np.testing.assert_allclose(out.coords, p.coords, atol=1e-12)

    def test_duplicate_points(self):
        rng = np.random.default_rng(20)
        p = random_point(rng, 3)
        out = geo.centroid([p, p], np.array([0.5, 0.5]))
        np.testing.assert_allclose(out.coords, p.coords, atol=1e-12)

    def test_symmetric_pair_gives_origin(self):
        a = LorentzPoint.from_coords([np.cosh(1.0), np.sinh(1.0)], K1)
        b = LorentzPoint.from_coords([np.cosh(1.0), -np.sinh(1.0)], K1)
        out = geo.centroid([a, b], np.array([1.0, 1.0]))
        np.testing.assert_allclose(out.coords, [1.0, 0.0], atol=1e-12)

    def test_zero_weights_rejected(self):
        p = LorentzPoint.origin(2, K1)
        with pytest.raises(ValueError):
            geo.centroid([p, p], np.array([0.0, 0.0]))


class TestSquaredLorentzDistance:
    def test_zero_iff_equal(self):
        rng = np.random.default_rng(21)
        p = random_point(rng, 5)
        assert geo.squared_lorentz_distance(p, p) == 0.0

    def test_hand_value(self):
        o = LorentzPoint.origin(1, K1)
        y = LorentzPoint.from_coords([np.cosh(1.0), np.sinh(1.0)], K1)
        assert geo.squared_lorentz_distance(o, y) == pytest.approx(2.0 * np.cosh(1.0) - 2.0)

    def test_symmetry(self):
        rng = np.random.default_rng(22)
        x = geo.random_points(rng, 1000, 3, -1.0)
        y = geo.random_points(rng, 1000, 3, -1.0)
        np.testing.assert_allclose(
            geo.squared_lorentz_dist(x, y, -1.0), geo.squared_lorentz_dist(y, x, -1.0), atol=1e-12
        )


class TestWrappedNormalArr:
    def test_on_manifold(self):
        rng = np.random.default_rng(23)
        mean = geo.lift(np.array([0.3, -0.2, 0.5]), -1.0)
        z = geo.wrapped_normal_arr(rng, 2000, mean, np.ones(3), -1.0)
        assert geo.manifold_error(z, -1.0).max() <= 1e-9 * np.maximum(1.0, (z**2).sum(-1)).max()

    def test_small_covariance_concentrates_at_mean(self):
        rng = np.random.default_rng(24)
        mean = geo.lift(np.array([1.0, 2.0]), -1.0)
        z = geo.wrapped_normal_arr(rng, 100, mean, np.full(2, 1e-20), -1.0)
        np.testing.assert_allclose(z, np.broadcast_to(mean, z.shape), atol=1e-8)


class TestOtherCurvatures:
    """The geometry identities must hold for K != -1 as well."""

    @pytest.mark.parametrize("k", [-0.5, -2.0, -9.0])
    def test_exp_log_roundtrip(self, k):
        rng = np.random.default_rng(25)
        c = Curvature(k)
        cap = 5.0 / np.sqrt(-k)  # keep the geodesic radius sqrt(-K)||v|| <= 5
        for _ in range(50):
            p = LorentzPoint.from_spatial(rng.standard_normal(3), c)
            v = TangentVector.project(p, rng.standard_normal(4))
            if v.norm > cap:
                v = TangentVector(p, v.components * (cap / v.norm))
            q = geo.exp_map(p, v)
            w = geo.log_map(p, q)
            np.testing.assert_allclose(w.components, v.components, atol=1e-6 * max(1.0, v.norm))

    @pytest.mark.parametrize("k", [-0.5, -2.0])
    def test_distance_matches_log_norm(self, k):
        rng = np.random.default_rng(26)
        x = geo.random_points(rng, 500, 4, k)
        y = geo.random_points(rng, 500, 4, k)
        v = geo.log_map_arr(x, y, k)
        nrm = np.sqrt(np.maximum(geo.minkowski_inner(v, v), 0.0))
        np.testing.assert_allclose(nrm, geo.lorentz_distance(x, y, k), rtol=1e-7, atol=1e-12)
