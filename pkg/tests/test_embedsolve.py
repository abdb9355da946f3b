import numpy as np
import pytest
from scipy.linalg import eigh as generalized_eigh

from weylcheck.embedsolve import (
    ChiField,
    FrameState,
    IntrinsicField,
    align_rigid,
    codazzi_residual_field,
    codazzi_threshold,
    diag_ramp_perturbation,
    embeddability_check,
    metric_jets,
    reconstruct,
    solve_contracted_gauss,
)
from weylcheck.errors import IntegrationError, ObstructionError
from weylcheck.intrinsic import MetricJet
from weylcheck.jets import Jet
from weylcheck.matmap import SymMatrix, cone_report, phi, phi_inverse
from weylcheck.surfaces import Ellipsoid, RoundSphere, ball_grid, evaluate_grid

AXES = (1.0, 1.2, 0.9, 1.05)


@pytest.fixture(scope="module")
def grid7():
    return ball_grid(7, 1.2, 3)


@pytest.fixture(scope="module")
def sphere_field(grid7):
    return IntrinsicField.from_family(RoundSphere(1.0), 0, grid7)


@pytest.fixture(scope="module")
def sphere_chi(sphere_field):
    return solve_contracted_gauss(sphere_field)


@pytest.fixture(scope="module")
def ellipsoid_field(grid7):
    return IntrinsicField.from_family(Ellipsoid(AXES), 0, grid7)


@pytest.fixture(scope="module")
def ellipsoid_chi(ellipsoid_field):
    return solve_contracted_gauss(ellipsoid_field)


class TestSolver:
    def test_round_sphere_chi_equals_g(self, sphere_field, sphere_chi):
        assert np.abs(sphere_chi.values - sphere_field.g()).max() < 1e-12
        assert np.abs(sphere_field.ricci - 2.0 * sphere_field.g()).max() < 1e-10

    def test_residual_limit(self, sphere_chi, ellipsoid_chi):
        assert sphere_chi.residuals.max() < 1e-9
        assert ellipsoid_chi.residuals.max() < 1e-9

    def test_ellipsoid_matches_embedded_truth(self, grid7, ellipsoid_field,
                                              ellipsoid_chi):
        truth = evaluate_grid(Ellipsoid(AXES), 0, grid7).chi
        rel = np.abs(ellipsoid_chi.values - truth).max() / np.abs(truth).max()
        assert rel < 1e-6

    def test_frame_roundtrip(self, ellipsoid_field, ellipsoid_chi):
        # phi of the frame chi must reproduce the frame Ricci
        g = ellipsoid_field.g()
        chol = np.linalg.cholesky(g)
        inv = np.linalg.inv(chol)
        ric_f = inv @ ellipsoid_field.ricci @ np.swapaxes(inv, -1, -2)
        a = ellipsoid_chi.frame_values
        tra = np.trace(a, axis1=-2, axis2=-1)[..., None, None]
        assert np.abs(tra * a - a @ a - ric_f).max() < 1e-9

    def test_cross_check_single_point_inverse(self, ellipsoid_field,
                                              ellipsoid_chi):
        g = ellipsoid_field.g()
        chol = np.linalg.cholesky(g)
        inv = np.linalg.inv(chol)
        ric_f = inv @ ellipsoid_field.ricci @ np.swapaxes(inv, -1, -2)
        for k in range(0, ric_f.shape[0], 9):
            a = phi_inverse(SymMatrix(ric_f[k]))
            assert np.abs(a.mat - ellipsoid_chi.frame_values[k]).max() < 1e-10
            back = phi(a)
            assert np.abs(back.mat - ric_f[k]).max() < 1e-10

    def test_frame_choice_invariance(self, ellipsoid_field, ellipsoid_chi):
        # solving in the generalized-eigenvector frame instead of the
        # Cholesky frame must give the same coordinate tensor
        g = ellipsoid_field.g()
        ric = ellipsoid_field.ricci
        for k in range(0, g.shape[0], 7):
            mu, v = generalized_eigh(ric[k], g[k])
            t = mu.sum() - 2.0 * mu
            lam = np.sqrt(np.prod(t) / 2.0) / t
            w = g[k] @ v
            other = (w * lam) @ w.T
            assert np.abs(other - ellipsoid_chi.values[k]).max() < 1e-10

    def test_cone_membership_matches_matmap(self, ellipsoid_field,
                                            ellipsoid_chi):
        g = ellipsoid_field.g()
        chol = np.linalg.cholesky(g)
        inv = np.linalg.inv(chol)
        ric_f = inv @ ellipsoid_field.ricci @ np.swapaxes(inv, -1, -2)
        for k in range(0, ric_f.shape[0], 11):
            rep = cone_report(ric_f[k])
            assert rep.member
            assert rep.eps_gap == pytest.approx(ellipsoid_chi.gaps[k], rel=1e-9)

    def test_chi_is_spd(self, ellipsoid_chi):
        assert ellipsoid_chi.principal_min().min() > 0

    def test_scaling_laws(self, ellipsoid_field, ellipsoid_chi):
        # c^2 g: frame eigenvalues mu scale by c^-2, lambda by c^-1, and the
        # coordinate tensor by c
        c = 1.7
        scaled = MetricJet.from_coeff_array(
            ellipsoid_field.metric.as_jet().coeffs * c**2, nvars=3)
        f2 = IntrinsicField.from_metric(scaled, 0, ellipsoid_field.coords)
        chi2 = solve_contracted_gauss(f2)
        assert np.abs(chi2.values - c * ellipsoid_chi.values).max() < 1e-9
        lam1 = np.linalg.eigvalsh(ellipsoid_chi.frame_values)
        lam2 = np.linalg.eigvalsh(chi2.frame_values)
        assert np.abs(lam2 - lam1 / c).max() < 1e-10
        assert np.abs(chi2.gaps - ellipsoid_chi.gaps / c**2).max() < 1e-10

    def test_derivatives_match_differencing(self, ellipsoid_field,
                                            ellipsoid_chi):
        # jet-propagated d chi vs central differences of fresh solves
        sample = ellipsoid_field.coords[::13]
        want = ellipsoid_chi.d_values[::13]
        delta = 1e-5
        for k in range(3):
            off = np.zeros(3)
            off[k] = delta
            fd = (ellipsoid_chi.at(sample + off) - ellipsoid_chi.at(sample - off)) \
                / (2.0 * delta)
            assert np.abs(fd - want[..., k]).max() < 1e-6

    def test_flat_metric_is_obstructed(self):
        coords = np.zeros((3, 3))
        coords[1, 0] = 0.1
        coords[2, 1] = -0.2
        entries = [[Jet.constant(np.full(3, float(i == j)), 3, 2)
                    for j in range(3)] for i in range(3)]
        flat = MetricJet(entries)
        field = IntrinsicField.from_metric(flat, 0, coords)
        with pytest.raises(ObstructionError) as exc:
            solve_contracted_gauss(field)
        assert exc.value.margin <= 0
        assert "coords" in str(exc.value)

    def test_cone_exit_names_point_and_gap(self, grid7):
        def pert(pts, order):
            pts = np.asarray(pts, float)
            val = np.zeros(pts.shape[:-1] + (3, 3))
            val[..., 2, 2] = 3.0
            return Jet.linear(val, np.zeros(val.shape + (3,)), 3,
                              order=max(order, 1))

        field = IntrinsicField.from_family(RoundSphere(1.0), 0, grid7,
                                           perturbation=pert)
        with pytest.raises(ObstructionError) as exc:
            solve_contracted_gauss(field)
        assert exc.value.point["chart"] == 0
        assert exc.value.margin < 0


class TestField:
    def test_ricci_consistency(self, ellipsoid_field):
        from weylcheck.intrinsic import curvature
        cs = curvature(ellipsoid_field.metric)
        assert np.abs(cs.ricci - ellipsoid_field.ricci).max() < 1e-10

    def test_array_roundtrip(self, ellipsoid_field):
        coeffs = ellipsoid_field.metric.as_jet().coeffs
        back = IntrinsicField.from_arrays(0, ellipsoid_field.coords, coeffs)
        assert np.abs(back.g() - ellipsoid_field.g()).max() < 1e-14
        assert np.abs(back.ricci - ellipsoid_field.ricci).max() < 1e-12

    def test_grid_resolution_inferred(self, ellipsoid_field):
        assert ellipsoid_field.grid_resolution() == 7

    def test_light_metric_jets_match_full(self, grid7):
        mj = metric_jets(Ellipsoid(AXES), 0, grid7, order=4)
        full = evaluate_grid(Ellipsoid(AXES), 0, grid7).metric
        assert np.abs(mj.as_jet().coeffs - full.as_jet().coeffs).max() < 1e-12


class TestEmbeddability:
    def test_embedded_families_pass(self, sphere_field, sphere_chi,
                                    ellipsoid_field, ellipsoid_chi):
        assert codazzi_residual_field(sphere_field, sphere_chi).max() < 1e-10
        v = embeddability_check(ellipsoid_field, ellipsoid_chi)
        assert v.embeddable
        assert v.sup_residual <= 1e-6
        assert v.calibration["resolution"] == 7
        assert v.threshold == codazzi_threshold(7)[0]

    def test_perturbed_field_fails(self, ellipsoid_field):
        field = ellipsoid_field.perturbed(diag_ramp_perturbation(0.05))
        chi = solve_contracted_gauss(field)
        v = embeddability_check(field, chi)
        assert not v.embeddable
        assert v.sup_residual > 10.0 * v.threshold
        assert chi.principal_min().min() > 0  # still inside the cone

    def test_explicit_threshold(self, ellipsoid_field, ellipsoid_chi):
        v = embeddability_check(ellipsoid_field, ellipsoid_chi, theta=1e-20)
        assert not v.embeddable
        assert v.calibration == {"provided": True}

    def test_verdict_dict(self, ellipsoid_field, ellipsoid_chi):
        d = embeddability_check(ellipsoid_field, ellipsoid_chi).to_dict()
        assert set(d) == {"embeddable", "sup_residual", "threshold", "at",
                          "calibration"}

    def test_threshold_is_cached_and_small(self):
        theta, observed = codazzi_threshold(7)
        assert theta < 1e-8
        assert len(observed) == 6
        assert theta == 10.0 * max(observed.values())


class TestSeedFrame:
    def test_invariants_exact(self, ellipsoid_field):
        seed = FrameState.seed(ellipsoid_field)
        k0 = int(np.argmin(np.linalg.norm(ellipsoid_field.coords, axis=-1)))
        res = seed.residuals(ellipsoid_field.g()[k0])
        assert max(res.values()) < 1e-14
        frame = np.vstack([seed.E, seed.N])
        assert np.linalg.det(frame) > 0

    def test_bad_seed_rejected(self, sphere_field, sphere_chi):
        seed = FrameState.seed(sphere_field)
        seed.N = seed.N * 1.5
        with pytest.raises(ValueError, match="seed frame"):
            reconstruct(sphere_field, sphere_chi, seed=seed)


@pytest.fixture(scope="module")
def grid5():
    return ball_grid(5, 1.2, 3)


class TestReconstruct:
    def test_round_sphere(self, grid5):
        field = IntrinsicField.from_family(RoundSphere(1.0), 0, grid5)
        chi = solve_contracted_gauss(field)
        rec = reconstruct(field, chi, h=2e-2)
        assert rec.isometry_sup < 5e-7
        assert rec.holonomy_sup < 1e-7
        center, radius, dev = rec.sphere_fit()
        assert radius == pytest.approx(1.0, abs=1e-6)
        assert dev < 1e-6
        truth = evaluate_grid(RoundSphere(1.0), 0, grid5).X
        _, _, rms = align_rigid(rec.X, truth)
        assert rms < 1e-6

    def test_non_codazzi_holonomy(self, grid5):
        base = IntrinsicField.from_family(Ellipsoid(AXES), 0, grid5)
        chi0 = solve_contracted_gauss(base)
        rec0 = reconstruct(base, chi0, h=4e-2)
        field = base.perturbed(diag_ramp_perturbation(0.05))
        chi = solve_contracted_gauss(field)
        rec = reconstruct(field, chi, h=4e-2)
        assert rec.holonomy_sup > 1e-3
        assert rec.holonomy_sup > 1e3 * rec0.holonomy_sup
        # the isometry residual stays small: drift only reflects chi vs g
        assert rec.isometry_sup < 1e-6

    def test_drift_rejection(self, grid5):
        field = IntrinsicField.from_family(RoundSphere(1.0), 0, grid5)
        chi = solve_contracted_gauss(field)
        with pytest.raises(IntegrationError, match="drift"):
            reconstruct(field, chi, h=2e-2, drift_limit=1e-18)

    def test_input_validation(self, grid5, sphere_field, sphere_chi):
        field = IntrinsicField.from_family(RoundSphere(1.0), 0, grid5)
        chi = solve_contracted_gauss(field)
        with pytest.raises(ValueError, match="permutation"):
            reconstruct(field, chi, path_plan=(0, 1, 1))
        with pytest.raises(ValueError, match="different field"):
            reconstruct(field, sphere_chi)
        with pytest.raises(ValueError, match="family-backed"):
            f2 = IntrinsicField.from_metric(field.metric, 0, field.coords)
            c2 = solve_contracted_gauss(f2)
            reconstruct(f2, c2)


class TestAlignRigid:
    def test_identity(self):
        rng = np.random.default_rng(5)
        cloud = rng.normal(size=(40, 4))
        q, t, rms = align_rigid(cloud, cloud)
        assert np.abs(q - np.eye(4)).max() < 1e-12
        assert np.abs(t).max() < 1e-12
        assert rms < 1e-12

    def test_recovers_rigid_motion(self):
        rng = np.random.default_rng(6)
        cloud = rng.normal(size=(50, 4))
        raw = rng.normal(size=(4, 4))
        q_true = np.linalg.qr(raw)[0]
        moved = cloud @ q_true + np.array([0.3, -1.2, 0.05, 2.0])
        q, t, rms = align_rigid(cloud, moved)
        assert rms < 1e-12
        assert np.abs(q - q_true).max() < 1e-10

    def test_reflection_allowed(self):
        rng = np.random.default_rng(7)
        cloud = rng.normal(size=(30, 3))
        mirrored = cloud * np.array([-1.0, 1.0, 1.0])
        q, t, rms = align_rigid(cloud, mirrored)
        assert rms < 1e-12
        assert np.linalg.det(q) < 0

    def test_rank_deficient_warns(self):
        rng = np.random.default_rng(8)
        flat = rng.normal(size=(25, 3))
        flat[:, 2] = 0.0
        with pytest.warns(RuntimeWarning, match="rank deficient"):
            align_rigid(flat, flat)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            align_rigid(np.zeros((3, 4)), np.zeros((4, 4)))
