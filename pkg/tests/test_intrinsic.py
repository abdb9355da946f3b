import math

import numpy as np
import pytest

from weylcheck.errors import DomainError
from weylcheck.intrinsic import (
    CurvatureState,
    MetricJet,
    adapted_sectional_sums,
    build_geodesic_graph,
    covariant_antisym,
    curvature,
    diameter,
    sectional_extremes,
)
from weylcheck.jets import Jet


def conformal_metric(pts, phi_fn, n=3, order=4):
    """g = phi^2 * identity with phi = phi_fn(coordinate jets)."""
    pts = np.asarray(pts, dtype=float)
    xs = [Jet.variable(pts[..., i], i, n, order) for i in range(n)]
    p2 = phi_fn(xs) ** 2
    zero = Jet.constant(np.zeros(pts.shape[:-1]), n, order)
    return MetricJet([[p2 if i == j else zero for j in range(n)] for i in range(n)])


def sphere_metric(pts, radius=1.0, n=3, order=4):
    # stereographic chart of the round sphere
    def phi(xs):
        s = xs[0] * xs[0]
        for x in xs[1:]:
            s = s + x * x
        return 2.0 * radius * (1.0 + s).reciprocal()

    return conformal_metric(pts, phi, n=n, order=order)


def sphere_metric_values(radius, n):
    def fn(chart, pts):
        w = 1.0 + np.einsum("mi,mi->m", pts, pts)
        f = (2.0 * radius / w) ** 2
        return f[:, None, None] * np.eye(n)

    return fn


SAMPLE_PTS = np.array([
    [0.0, 0.0, 0.0],
    [0.3, -0.2, 0.5],
    [0.9, 0.1, -0.4],
    [-0.7, 0.6, 0.2],
])


class TestRoundSphere:
    def test_unit_sphere_curvature_fields(self):
        cs = curvature(sphere_metric(SAMPLE_PTS))
        np.testing.assert_allclose(cs.scalar, 6.0, rtol=1e-10)
        np.testing.assert_allclose(cs.ricci, 2.0 * cs.metric, rtol=1e-9, atol=1e-10)
        np.testing.assert_allclose(cs.laplacian_scalar, 0.0, atol=1e-8)
        np.testing.assert_allclose(cs.sectional_min, 1.0, rtol=1e-9)
        np.testing.assert_allclose(cs.sectional_max, 1.0, rtol=1e-9)
        np.testing.assert_allclose(cs.ricci_norm, math.sqrt(12.0), rtol=1e-10)

    def test_radius_two_sphere(self):
        cs = curvature(sphere_metric(SAMPLE_PTS, radius=2.0))
        np.testing.assert_allclose(cs.scalar, 6.0 / 4.0, rtol=1e-10)
        np.testing.assert_allclose(cs.sectional_min, 0.25, rtol=1e-9)

    def test_two_sphere(self):
        pts = SAMPLE_PTS[:, :2]
        cs = curvature(sphere_metric(pts, radius=1.0, n=2))
        np.testing.assert_allclose(cs.scalar, 2.0, rtol=1e-10)
        np.testing.assert_allclose(cs.sectional_min, 1.0, rtol=1e-10)
        np.testing.assert_allclose(cs.laplacian_scalar, 0.0, atol=1e-9)

    def test_riemann_matches_constant_curvature_form(self):
        cs = curvature(sphere_metric(SAMPLE_PTS))
        g = cs.metric
        want = np.einsum("...ik,...jl->...ijkl", g, g) - np.einsum(
            "...il,...jk->...ijkl", g, g
        )
        np.testing.assert_allclose(cs.riemann, want, rtol=1e-9, atol=1e-10)


class TestFlat:
    def test_constant_metric(self):
        a = np.array([[2.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 1.0]])
        entries = [
            [Jet.constant(np.full(4, a[i, j]), 3, 4) for j in range(3)]
            for i in range(3)
        ]
        cs = curvature(MetricJet(entries))
        np.testing.assert_allclose(cs.riemann, 0.0, atol=1e-12)
        np.testing.assert_allclose(cs.scalar, 0.0, atol=1e-12)
        np.testing.assert_allclose(cs.laplacian_scalar, 0.0, atol=1e-12)

    def test_flat_metric_in_curvilinear_coordinates(self):
        # pull back the euclidean metric through a nonlinear diffeomorphism;
        # curvature must still vanish identically
        pts = SAMPLE_PTS * 0.5
        xs = [Jet.variable(pts[..., i], i, 3, 5) for i in range(3)]
        ys = [
            xs[0] + 0.1 * xs[1] * xs[1] + 0.05 * xs[2],
            xs[1] + 0.08 * xs[0] * xs[2],
            xs[2] + 0.06 * xs[0] * xs[0] - 0.1 * xs[1],
        ]
        jac = [[y.derivative(i) for i in range(3)] for y in ys]
        entries = [
            [
                jac[0][i] * jac[0][j] + jac[1][i] * jac[1][j] + jac[2][i] * jac[2][j]
                for j in range(3)
            ]
            for i in range(3)
        ]
        cs = curvature(MetricJet(entries))
        np.testing.assert_allclose(cs.riemann, 0.0, atol=1e-9)
        np.testing.assert_allclose(cs.scalar, 0.0, atol=1e-9)
        np.testing.assert_allclose(cs.laplacian_scalar, 0.0, atol=1e-7)
        np.testing.assert_allclose(cs.sectional_min, 0.0, atol=1e-9)
        np.testing.assert_allclose(cs.sectional_max, 0.0, atol=1e-9)


def bumpy_metric(pts, order=4):
    def phi(xs):
        return (1.0 + 0.2 * xs[0] + 0.1 * xs[1] * xs[2] - 0.15 * xs[2] * xs[2]).exp()

    return conformal_metric(pts, phi, order=order)


class TestTensorSymmetries:
    def test_riemann_symmetries_and_first_bianchi(self):
        cs = curvature(bumpy_metric(SAMPLE_PTS))
        r = cs.riemann
        np.testing.assert_allclose(r, -np.swapaxes(r, -4, -3), atol=1e-10)
        np.testing.assert_allclose(r, -np.swapaxes(r, -2, -1), atol=1e-10)
        np.testing.assert_allclose(
            r, np.einsum("...ijkl->...klij", r), atol=1e-10
        )
        bianchi = r + np.einsum("...ijkl->...iklj", r) + np.einsum("...ijkl->...iljk", r)
        np.testing.assert_allclose(bianchi, 0.0, atol=1e-10)

    def test_scalar_is_g_trace_of_ricci(self):
        cs = curvature(bumpy_metric(SAMPLE_PTS))
        tr = np.einsum("...ij,...ij->...", cs.metric_inv, cs.ricci)
        np.testing.assert_allclose(tr, cs.scalar, rtol=1e-12)

    def test_inverse_jets(self):
        mj = bumpy_metric(SAMPLE_PTS)
        inv = mj.inverse_entries()
        for i in range(3):
            for j in range(3):
                acc = None
                for k in range(3):
                    t = mj.entries[i][k] * inv[k][j]
                    acc = t if acc is None else acc + t
                want = 1.0 if i == j else 0.0
                np.testing.assert_allclose(acc.value, want, atol=1e-12)
                # all higher coefficients of the identity vanish
                np.testing.assert_allclose(acc.coeffs[..., 1:], 0.0, atol=1e-10)


class TestScaling:
    def test_constant_rescaling_laws(self):
        c = 1.7
        base = curvature(sphere_metric(SAMPLE_PTS))
        scaled_entries = [
            [e * (c * c) for e in row] for row in sphere_metric(SAMPLE_PTS).entries
        ]
        scaled = curvature(MetricJet(scaled_entries))
        np.testing.assert_allclose(scaled.scalar, base.scalar / c**2, rtol=1e-10)
        np.testing.assert_allclose(scaled.ricci, base.ricci, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(
            scaled.laplacian_scalar, base.laplacian_scalar / c**4, atol=1e-10
        )
        np.testing.assert_allclose(
            scaled.sectional_min, base.sectional_min / c**2, rtol=1e-10
        )


class TestLaplacian:
    def test_laplacian_against_finite_differences(self):
        # independent route: difference scalar curvature values over a stencil
        # and assemble the coordinate laplacian by hand
        base = np.array([[0.25, -0.15, 0.3]])
        h = 1e-3

        def scalar_at(p):
            return curvature(bumpy_metric(p.reshape(1, 3), order=2)).scalar[0]

        r0 = scalar_at(base[0])
        grad = np.zeros(3)
        hess = np.zeros((3, 3))
        for i in range(3):
            up = base[0].copy()
            dn = base[0].copy()
            up[i] += h
            dn[i] -= h
            ru, rd = scalar_at(up), scalar_at(dn)
            grad[i] = (ru - rd) / (2 * h)
            hess[i, i] = (ru - 2 * r0 + rd) / h**2
        for i in range(3):
            for j in range(i + 1, 3):
                pp = base[0].copy(); pp[i] += h; pp[j] += h
                pm = base[0].copy(); pm[i] += h; pm[j] -= h
                mp = base[0].copy(); mp[i] -= h; mp[j] += h
                mm = base[0].copy(); mm[i] -= h; mm[j] -= h
                hess[i, j] = hess[j, i] = (
                    scalar_at(pp) - scalar_at(pm) - scalar_at(mp) + scalar_at(mm)
                ) / (4 * h**2)

        cs = curvature(bumpy_metric(base))
        fd_lap = np.einsum("ij,ij->", cs.metric_inv[0], hess) - np.einsum(
            "ij,kij,k->", cs.metric_inv[0], cs.christoffel[0], grad
        )
        assert cs.laplacian_scalar[0] == pytest.approx(fd_lap, rel=1e-5, abs=1e-5)


class TestSectional:
    def test_samples_stay_inside_exact_range(self):
        cs = curvature(bumpy_metric(SAMPLE_PTS))
        rng_range = sectional_extremes(cs, samples=200, seed=3)
        assert rng_range.exact
        np.testing.assert_allclose(rng_range.kmin, cs.sectional_min, rtol=1e-12)
        np.testing.assert_allclose(rng_range.kmax, cs.sectional_max, rtol=1e-12)

    def test_anisotropic_metric_has_spread(self):
        pts = np.array([[0.4, 0.1, -0.2]])
        cs = curvature(bumpy_metric(pts))
        assert cs.sectional_max[0] > cs.sectional_min[0] + 1e-3

    def test_adapted_frame_plane_sums(self):
        for mj in (sphere_metric(SAMPLE_PTS), bumpy_metric(SAMPLE_PTS)):
            cs = curvature(mj)
            mu, kappa = adapted_sectional_sums(cs)
            np.testing.assert_allclose(kappa, np.swapaxes(kappa, -1, -2), atol=1e-10)
            np.testing.assert_allclose(mu, kappa.sum(axis=-1), rtol=1e-9, atol=1e-10)


class TestCovariantDerivative:
    def test_metric_is_parallel(self):
        mj = bumpy_metric(SAMPLE_PTS)
        g_jet = mj.as_jet().truncate(1)
        out = covariant_antisym(mj, g_jet)
        np.testing.assert_allclose(out, 0.0, atol=1e-11)

    def test_artificial_perturbation_detected(self):
        pts = SAMPLE_PTS
        mj = bumpy_metric(pts)
        x1 = Jet.variable(pts[..., 0], 0, 3, 1)
        bump = x1.coeffs[..., None, None, :] * np.zeros((3, 3, 1))
        pert = mj.as_jet().truncate(1)
        coeffs = pert.coeffs.copy()
        coeffs[..., 0, 0, :] += 0.1 * x1.coeffs
        pert = Jet(3, 1, coeffs)
        assert bump.shape[-3:-1] == (3, 3)
        out = covariant_antisym(mj, pert)
        assert np.abs(out).max() > 1e-3

    def test_symmetry_required(self):
        mj = bumpy_metric(SAMPLE_PTS)
        t = mj.as_jet().truncate(1)
        coeffs = t.coeffs.copy()
        coeffs[..., 0, 1, 0] += 1.0
        with pytest.raises(ValueError):
            covariant_antisym(mj, Jet(3, 1, coeffs))


class TestMetricJetValidation:
    def test_rejects_indefinite_metric(self):
        bad = np.diag([1.0, -1.0, 1.0])
        entries = [
            [Jet.constant(bad[i, j], 3, 2) for j in range(3)] for i in range(3)
        ]
        with pytest.raises(DomainError):
            MetricJet(entries)

    def test_rejects_asymmetric_jets(self):
        x = Jet.variable(0.0, 0, 3, 2)
        one = Jet.constant(1.0, 3, 2)
        zero = Jet.constant(0.0, 3, 2)
        entries = [
            [one, x, zero],
            [zero, one, zero],
            [zero, zero, one],
        ]
        with pytest.raises(ValueError):
            MetricJet(entries)

    def test_coeff_array_round_trip(self):
        mj = bumpy_metric(SAMPLE_PTS)
        arr = mj.as_jet().coeffs
        back = MetricJet.from_coeff_array(arr, nvars=3)
        assert back.order == mj.order
        np.testing.assert_allclose(back.values(), mj.values(), rtol=1e-14)


class TestDiameter:
    def test_unit_three_sphere_window(self):
        gg = build_geodesic_graph(sphere_metric_values(1.0, 3), 3, 17)
        est = diameter(gg)
        assert math.pi <= est.value <= 1.10 * math.pi
        assert est.num_nodes == gg.num_nodes
        assert est.resolution == 17

    def test_radius_two_two_sphere_window(self):
        gg = build_geodesic_graph(sphere_metric_values(2.0, 2), 2, 17)
        est = diameter(gg)
        assert 2 * math.pi <= est.value <= 1.10 * 2 * math.pi

    def test_scaling_exact(self):
        base_fn = sphere_metric_values(1.0, 3)
        c = 1.35

        def scaled_fn(chart, pts):
            return c**2 * base_fn(chart, pts)

        d1 = diameter(build_geodesic_graph(base_fn, 3, 9)).value
        d2 = diameter(build_geodesic_graph(scaled_fn, 3, 9)).value
        assert d2 == pytest.approx(c * d1, rel=1e-12)

    def test_refinement_does_not_increase(self):
        fn = sphere_metric_values(1.0, 2)
        d_coarse = diameter(build_geodesic_graph(fn, 2, 9)).value
        d_fine = diameter(build_geodesic_graph(fn, 2, 17)).value
        assert d_fine <= d_coarse + 1e-12

    def test_resolution_validation(self):
        fn = sphere_metric_values(1.0, 2)
        with pytest.raises(ValueError):
            build_geodesic_graph(fn, 2, 4)
        with pytest.raises(ValueError):
            build_geodesic_graph(fn, 2, 8)

    def test_edge_lengths_positive(self):
        gg = build_geodesic_graph(sphere_metric_values(1.0, 2), 2, 9)
        assert gg.adjacency.data.min() > 0.0
