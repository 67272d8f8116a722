"""Kinematics layer: velocity forms, deformation measures, factorizations."""

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from afftop import (
    Configuration,
    MetricPair,
    NegativeOrientation,
    NonPositiveMetric,
    SingularConfiguration,
    TwoPolarFactors,
    VelocityState,
    affine_velocities,
    deformation_invariants,
    deformation_tensors,
    polar_decompose,
    spin_vorticity,
    two_polar_decompose,
    volume_ratio,
)
from afftop.kinematics import _signed_permutations

from conftest import random_metric_isometry, random_phi, random_spd, random_rotation

# ---------------------------------------------------------------------------
# frozen oracle values: symbolic eigendecomposition of phi^T phi for
# phi = [[2, 1], [0, 1]] gives stretches sqrt(3 +- sqrt(5)); the polar
# factors follow in closed form, U = [[3, 1], [-1, 3]]/sqrt(10) and
# A = [[6, 2], [2, 4]]/sqrt(10).
# ---------------------------------------------------------------------------

PHI_21 = np.array([[2.0, 1.0], [0.0, 1.0]])
Q_21 = np.array([0.827785415339576102, -0.134638234779630793])
U_21 = np.array([[0.948683298050513800, 0.316227766016837933],
                 [-0.316227766016837933, 0.948683298050513800]])
A_21 = np.array([[1.897366596101027599, 0.632455532033675866],
                 [0.632455532033675866, 1.264911064067351733]])

# g = diag(2, 1), eta = diag(1, 4): volume ratio sqrt(2/4) * det phi = sqrt(2),
# trace invariants of eta^-1 phi^T g phi are 35/4 and 1161/16.
G_DIAG = np.diag([2.0, 1.0])
ETA_DIAG = np.diag([1.0, 4.0])
DELTA_21 = 1.414213562373095049
TRACE_INV_21 = np.array([8.75, 72.5625])
PENCIL_EIGS_21 = np.array([8.515123790419798547, 0.234876209580201453])


def metrics_pair(n, rng):
    return MetricPair(random_spd(n, rng), random_spd(n, rng))


class TestFrozenOracles:
    def test_two_polar_stretches(self):
        two = two_polar_decompose(Configuration(phi=PHI_21))
        np.testing.assert_allclose(two.q, Q_21, atol=1e-12)
        np.testing.assert_allclose(two.compose(), PHI_21, atol=1e-12)
        assert not two.degenerate
        assert two.multiplicity == (1, 1)

    def test_polar_factors(self):
        pf = polar_decompose(Configuration(phi=PHI_21))
        np.testing.assert_allclose(pf.U, U_21, atol=1e-12)
        np.testing.assert_allclose(pf.A, A_21, atol=1e-12)

    def test_polar_against_scipy(self):
        u, p = scipy.linalg.polar(PHI_21, side="right")
        pf = polar_decompose(Configuration(phi=PHI_21))
        np.testing.assert_allclose(pf.U, u, atol=1e-12)
        np.testing.assert_allclose(pf.A, p, atol=1e-12)

    def test_volume_ratio(self):
        m = MetricPair(G_DIAG, ETA_DIAG)
        vr = volume_ratio(Configuration(phi=PHI_21), m)
        assert vr.delta == pytest.approx(DELTA_21, abs=1e-12)
        assert vr.q_mean == pytest.approx(np.log(DELTA_21) / 2, abs=1e-12)
        assert vr.linear_scale == pytest.approx(np.sqrt(DELTA_21), abs=1e-12)

    def test_trace_invariants(self):
        m = MetricPair(G_DIAG, ETA_DIAG)
        inv = deformation_invariants(Configuration(phi=PHI_21), m)
        np.testing.assert_allclose(inv, TRACE_INV_21, atol=1e-12)
        eig = deformation_invariants(Configuration(phi=PHI_21), m, basis="eigen")
        np.testing.assert_allclose(eig, PENCIL_EIGS_21, atol=1e-12)


class TestVelocityForms:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_similarity(self, n, rng):
        phi = random_phi(n, rng)
        pd = rng.standard_normal((n, n))
        v = rng.standard_normal(n)
        av = affine_velocities(Configuration(phi=phi), VelocityState(phi_dot=pd, v=v))
        np.testing.assert_allclose(av.Omega, phi @ av.Omega_hat @ np.linalg.inv(phi),
                                   atol=1e-12)
        np.testing.assert_allclose(phi @ av.v_hat, v, atol=1e-12)

    def test_rigid_rotation_gives_skew_omega(self, rng):
        # for phi in SO(3) and phi_dot = W phi with W skew, Omega = W
        w = np.array([[0.0, -1.0, 0.5], [1.0, 0.0, -0.2], [-0.5, 0.2, 0.0]])
        phi = random_rotation(3, rng)
        av = affine_velocities(Configuration(phi=phi), VelocityState(phi_dot=w @ phi))
        np.testing.assert_allclose(av.Omega, w, atol=1e-12)


class TestDeformation:
    @pytest.mark.parametrize("n", [2, 3])
    def test_transformation_laws(self, n, rng):
        m = metrics_pair(n, rng)
        phi = random_phi(n, rng)
        base = deformation_tensors(Configuration(phi=phi), m)
        a = random_metric_isometry(m.g, rng)
        b = random_metric_isometry(m.eta, rng)

        left = deformation_tensors(Configuration(phi=a @ phi), m)
        np.testing.assert_allclose(left.G, base.G, atol=1e-10)
        a_inv = np.linalg.inv(a)
        np.testing.assert_allclose(left.C, a_inv.T @ base.C @ a_inv, atol=1e-10)

        right = deformation_tensors(Configuration(phi=phi @ b), m)
        np.testing.assert_allclose(right.C, base.C, atol=1e-10)
        np.testing.assert_allclose(right.G, b.T @ base.G @ b, atol=1e-10)

    @pytest.mark.parametrize("n", [2, 3])
    def test_mixed_forms_reciprocal_spectra(self, n, rng):
        m = metrics_pair(n, rng)
        defo = deformation_tensors(Configuration(phi=random_phi(n, rng)), m)
        lam_g = np.sort(np.linalg.eigvals(defo.G_mixed).real)
        lam_c = np.sort(np.linalg.eigvals(defo.C_mixed).real)
        np.testing.assert_allclose(lam_g, 1.0 / lam_c[::-1], rtol=1e-10)

    @pytest.mark.parametrize("basis", ["trace_g", "trace_c", "eigen"])
    @pytest.mark.parametrize("n", [2, 3])
    def test_invariants_isometry_insensitive(self, n, basis, rng):
        m = metrics_pair(n, rng)
        phi = random_phi(n, rng)
        cfg = Configuration(phi=phi)
        base = deformation_invariants(cfg, m, basis=basis)
        for _ in range(5):
            a = random_metric_isometry(m.g, rng)
            b = random_metric_isometry(m.eta, rng)
            moved = Configuration(phi=a @ phi @ b)
            inv = deformation_invariants(moved, m, basis=basis)
            np.testing.assert_allclose(inv, base, rtol=1e-9, atol=1e-10)

    def test_eigen_basis_matches_stretches(self, rng):
        m = metrics_pair(3, rng)
        cfg = Configuration(phi=random_phi(3, rng))
        lam = deformation_invariants(cfg, m, basis="eigen")
        two = two_polar_decompose(cfg, m)
        np.testing.assert_allclose(lam, np.exp(2.0 * two.q), rtol=1e-10)

    def test_strain_zero_at_isometry(self, rng):
        m = metrics_pair(3, rng)
        # exact g-eta isometry: phi = g^-1/2 O eta^1/2
        from afftop._mat import spd_sqrt
        gh, ghi = spd_sqrt(m.g)
        eh, _ = spd_sqrt(m.eta)
        phi = ghi @ random_rotation(3, rng) @ eh
        defo = deformation_tensors(Configuration(phi=phi), m)
        np.testing.assert_allclose(defo.E, 0.0, atol=1e-10)
        np.testing.assert_allclose(defo.e, 0.0, atol=1e-10)


class TestTwoPolar:
    @pytest.mark.parametrize("n", [2, 3, 4])
    @pytest.mark.parametrize("identity_metrics", [True, False])
    def test_postconditions(self, n, identity_metrics, rng):
        m = MetricPair.identity(n) if identity_metrics else metrics_pair(n, rng)
        for _ in range(10):
            phi = random_phi(n, rng)
            two = two_polar_decompose(Configuration(phi=phi), m)
            np.testing.assert_allclose(two.L.T @ m.g @ two.L, np.eye(n), atol=1e-10)
            np.testing.assert_allclose(two.R.T @ m.eta @ two.R, np.eye(n), atol=1e-10)
            assert np.all(np.diff(two.q) <= 1e-14)  # descending
            np.testing.assert_allclose(two.compose(m), phi, atol=1e-10)
            if identity_metrics:
                assert np.linalg.det(two.L) == pytest.approx(1.0, abs=1e-10)
                assert np.linalg.det(two.R) == pytest.approx(1.0, abs=1e-10)

    def test_degeneracy_flag(self):
        two = two_polar_decompose(Configuration(phi=np.diag([2.0, 2.0, 1.0])))
        assert two.degenerate
        assert two.multiplicity == (2, 1)
        conformal = two_polar_decompose(Configuration(phi=1.7 * np.eye(3)))
        assert conformal.degenerate
        assert conformal.multiplicity == (3,)
        simple = two_polar_decompose(Configuration(phi=np.diag([3.0, 2.0, 1.0])))
        assert not simple.degenerate

    def test_branch_group_order(self):
        import math
        for n in [2, 3, 4]:
            ws = list(_signed_permutations(n))
            assert len(ws) == 2 ** (n - 1) * math.factorial(n)
            seen = {tuple(np.round(w.ravel()).astype(int)) for w in ws}
            assert len(seen) == len(ws)
            for w in ws:
                assert np.linalg.det(w) == pytest.approx(1.0)
                np.testing.assert_allclose(w.T @ w, np.eye(n), atol=0)

    def test_hint_tracks_smooth_curve(self, rng):
        # without hints the descending convention reorders frames when two
        # stretch curves cross; with hints the frames stay continuous
        phi0 = random_phi(3, rng)
        gen = 0.8 * rng.standard_normal((3, 3))
        ts = np.linspace(0.0, 1.5, 60)
        prev = None
        max_jump = 0.0
        for t in ts:
            phi = scipy.linalg.expm(gen * t) @ phi0
            prev_hint = prev
            cur = two_polar_decompose(Configuration(phi=phi), hint=prev_hint)
            if prev is not None:
                max_jump = max(max_jump, np.linalg.norm(cur.L - prev.L))
            np.testing.assert_allclose(cur.compose(), phi, atol=1e-9 * max(1.0, np.linalg.norm(phi)))
            prev = cur
        dt = ts[1] - ts[0]
        assert max_jump < 10.0 * dt * (np.linalg.norm(gen) + 1.0)

    def test_hint_selects_nearest_branch(self, rng):
        phi = random_phi(3, rng)
        cfg = Configuration(phi=phi)
        base = two_polar_decompose(cfg)
        # flip two columns: that branch is in the group, so it is recovered
        w = np.diag([-1.0, -1.0, 1.0])
        target = TwoPolarFactors(L=base.L @ w, q=base.q, R=base.R @ w)
        picked = two_polar_decompose(cfg, hint=target)
        np.testing.assert_allclose(picked.L, target.L, atol=1e-12)
        np.testing.assert_allclose(picked.R, target.R, atol=1e-12)
        np.testing.assert_allclose(picked.q, base.q, atol=1e-12)
        np.testing.assert_allclose(picked.compose(), phi, atol=1e-12)


class TestPolar:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_postconditions_general_metrics(self, n, rng):
        m = metrics_pair(n, rng)
        phi = random_phi(n, rng)
        pf = polar_decompose(Configuration(phi=phi), m)
        np.testing.assert_allclose(pf.U @ pf.A, phi, atol=1e-10)
        # U is a g-eta isometry, A is eta-symmetric with positive spectrum
        np.testing.assert_allclose(pf.U.T @ m.g @ pf.U, m.eta, atol=1e-10)
        ea = m.eta @ pf.A
        np.testing.assert_allclose(ea, ea.T, atol=1e-10)
        assert np.all(np.linalg.eigvals(pf.A).real > 0)


class TestVolume:
    @pytest.mark.parametrize("n", [2, 3])
    def test_multiplicative(self, n, rng):
        m = metrics_pair(n, rng)
        phi = random_phi(n, rng)
        a = random_phi(n, rng)
        b = random_phi(n, rng)
        lhs = volume_ratio(Configuration(phi=a @ phi @ b), m).delta
        rhs = (np.linalg.det(a) * volume_ratio(Configuration(phi=phi), m).delta
               * np.linalg.det(b))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_mean_stretch_equals_q_average(self, rng):
        m = metrics_pair(3, rng)
        cfg = Configuration(phi=random_phi(3, rng))
        vr = volume_ratio(cfg, m)
        two = two_polar_decompose(cfg, m)
        assert vr.q_mean == pytest.approx(np.mean(two.q), abs=1e-12)


class TestSpinVorticity:
    def test_metric_skewness_and_norms(self, rng):
        n = 3
        m = metrics_pair(n, rng)
        sigma = rng.standard_normal((n, n))
        sigma_hat = rng.standard_normal((n, n))
        sv = spin_vorticity(sigma, sigma_hat, m)
        gs = m.g @ sv.S
        np.testing.assert_allclose(gs, -gs.T, atol=1e-12)
        ev = m.eta @ sv.V
        np.testing.assert_allclose(ev, -ev.T, atol=1e-12)
        assert sv.spin_norm == pytest.approx(np.sqrt(-0.5 * np.trace(sv.S @ sv.S)))
        assert sv.vorticity_norm == pytest.approx(
            np.sqrt(-0.5 * np.trace(sv.V @ sv.V)))

    def test_spin_is_not_conjugated_vorticity(self):
        # with phi = diag(2, 1) and Sigma = [[0, 1], [0, 0]] the conjugate of
        # the vorticity differs from the spin by a finite amount
        phi = np.diag([2.0, 1.0])
        sigma = np.array([[0.0, 1.0], [0.0, 0.0]])
        sigma_hat = np.linalg.inv(phi) @ sigma @ phi
        sv = spin_vorticity(sigma, sigma_hat)
        conj = phi @ sv.V @ np.linalg.inv(phi)
        assert np.abs(sv.S - conj).max() > 0.5


class TestGuards:
    def test_negative_orientation(self):
        with pytest.raises(NegativeOrientation):
            Configuration(phi=np.diag([-1.0, 1.0]))

    def test_singular_configuration(self):
        with pytest.raises(SingularConfiguration):
            Configuration(phi=np.diag([0.0, 1.0]))

    def test_non_positive_metric(self):
        with pytest.raises(NonPositiveMetric):
            MetricPair(np.diag([1.0, -1.0]), np.eye(2))
        with pytest.raises(NonPositiveMetric):
            MetricPair(np.eye(2), np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            volume_ratio(Configuration(phi=np.eye(3)), MetricPair.identity(2))


# hypothesis sweep over bounded perturbations of the identity
@settings(max_examples=60, deadline=None)
@given(
    delta=hnp.arrays(np.float64, (3, 3), elements=st.floats(-0.3, 0.3)),
)
def test_two_polar_round_trip_property(delta):
    phi = np.eye(3) + delta
    if np.linalg.det(phi) < 0.1:
        return
    cfg = Configuration(phi=phi)
    two = two_polar_decompose(cfg)
    np.testing.assert_allclose(two.compose(), phi, atol=1e-10)
    np.testing.assert_allclose(two.L.T @ two.L, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(two.R.T @ two.R, np.eye(3), atol=1e-10)
    assert np.all(np.diff(two.q) <= 1e-14)


@settings(max_examples=60, deadline=None)
@given(
    delta=hnp.arrays(np.float64, (2, 2), elements=st.floats(-0.3, 0.3)),
    rot=st.floats(-3.0, 3.0),
)
def test_invariants_rotation_insensitive_property(delta, rot):
    phi = np.eye(2) + delta
    if np.linalg.det(phi) < 0.1:
        return
    c, s = np.cos(rot), np.sin(rot)
    r = np.array([[c, -s], [s, c]])
    base = deformation_invariants(Configuration(phi=phi))
    moved = deformation_invariants(Configuration(phi=r @ phi @ r.T))
    np.testing.assert_allclose(moved, base, rtol=1e-9, atol=1e-9)
