import numpy as np
import pytest

import droopsync as ds
from droopsync.comms import DelayBounds
from droopsync.lmi import (COMPACT, LmiCertificate, SynthesisError,
                           SynthesisOptions, certify_matrix)

from conftest import reference_gain_lists


def identity_cert(n, tau_star, tau_g, form=COMPACT, scale=1.0):
    I = np.eye(n)
    Z = np.zeros((n, n))
    return LmiCertificate(Q=scale * I, R=scale * I, P=scale * I,
                          M=Z, T=Z, X=Z, tau_star=tau_star, tau_g=tau_g,
                          form=form)


def random_cert(n, tau_star, tau_g, seed, form=COMPACT):
    rng = np.random.default_rng(seed)
    def spd():
        B = rng.normal(size=(n, n))
        return B @ B.T + 0.5 * np.eye(n)
    return LmiCertificate(Q=spd(), R=spd(), P=spd(),
                          M=rng.normal(size=(n, n)),
                          T=rng.normal(size=(n, n)),
                          X=rng.normal(size=(n, n)),
                          tau_star=tau_star, tau_g=tau_g, form=form)


def reference_reduced_matrix():
    k, k_bar = reference_gain_lists()
    gains = ds.GainSet(k={(g["i"], g["j"]): g["value"] for g in k},
                       k_bar={(g["i"], g["j"]): g["value"] for g in k_bar})
    topo = ds.CommTopology.make(4, [(1, 2), (2, 3), (3, 4)], [1])
    return ds.reduced_error_matrix(ds.pinned_matrix(topo, gains),
                                   ds.follower_matrix(topo, gains))


class TestAssembleXi:
    def test_trivial_blocks(self):
        cert = identity_cert(1, tau_star=1.0, tau_g=0.0)
        Xi = ds.assemble_xi(np.zeros((1, 1)), 1.0, 0.0, cert)
        expected = np.array([[1.0, 0.0, 1.0, 0.0],
                             [0.0, -1.0, -1.0, 0.0],
                             [1.0, -1.0, -2.0, 0.0],
                             [0.0, 0.0, 0.0, 1.0]])
        np.testing.assert_allclose(Xi, expected, atol=1e-14)
        # eigen oracle on the assembled matrix
        lam = np.linalg.eigvalsh(Xi)
        assert lam[-1] > 0  # indefinite: never a valid certificate

    def test_symmetry_random_inputs(self):
        rng = np.random.default_rng(5)
        A = rng.normal(size=(3, 3))
        cert = random_cert(3, 0.4, 0.7, seed=1)
        for f in (ds.assemble_xi, ds.assemble_xi_completed):
            Xi = f(A, 0.4, 0.7, cert)
            np.testing.assert_allclose(Xi, Xi.T, atol=1e-12)

    def test_affine_in_certificate(self):
        # two-point interpolation: Xi(a*x + (1-a)*y) == a*Xi(x) + (1-a)*Xi(y)
        rng = np.random.default_rng(6)
        A = rng.normal(size=(2, 2))
        alpha = 0.3
        cx = random_cert(2, 0.5, 0.9, seed=2)
        cy = random_cert(2, 0.5, 0.9, seed=3)
        mix = LmiCertificate(
            *[alpha * mx + (1 - alpha) * my
              for mx, my in zip(cx.matrices(), cy.matrices())],
            tau_star=0.5, tau_g=0.9)
        for f in (ds.assemble_xi, ds.assemble_xi_completed):
            Xi_mix = f(A, 0.5, 0.9, mix)
            Xi_lin = (alpha * f(A, 0.5, 0.9, cx)
                      + (1 - alpha) * f(A, 0.5, 0.9, cy))
            np.testing.assert_allclose(Xi_mix, Xi_lin, atol=1e-10)

    def test_joint_homogeneity_compact_form(self):
        # scaling A and every decision matrix together scales the compact
        # form linearly (the completed form couples A and X bilinearly, so
        # only affineness in the certificate holds there)
        rng = np.random.default_rng(7)
        A = rng.normal(size=(2, 2))
        cert = random_cert(2, 0.5, 0.9, seed=4)
        c = 3.7
        scaled = LmiCertificate(*[c * mtx for mtx in cert.matrices()],
                                tau_star=0.5, tau_g=0.9)
        np.testing.assert_allclose(ds.assemble_xi(c * A, 0.5, 0.9, scaled),
                                   c * ds.assemble_xi(A, 0.5, 0.9, cert),
                                   rtol=1e-12)
        lam_c = np.linalg.eigvalsh(ds.assemble_xi(c * A, 0.5, 0.9, scaled))
        lam_1 = np.linalg.eigvalsh(ds.assemble_xi(A, 0.5, 0.9, cert))
        np.testing.assert_allclose(lam_c, c * lam_1, rtol=1e-10, atol=1e-10)

    def test_dimension_mismatch(self):
        cert = identity_cert(2, 0.5, 0.9)
        with pytest.raises(ValueError):
            ds.assemble_xi(np.zeros((3, 3)), 0.5, 0.9, cert)

    def test_completed_differs_in_jensen_and_slack_blocks(self):
        A = np.array([[-1.0]])
        cert = random_cert(1, 0.5, 0.9, seed=9)
        Xp = ds.assemble_xi(A, 0.5, 0.9, cert)
        Xc = ds.assemble_xi_completed(A, 0.5, 0.9, cert)
        np.testing.assert_allclose(Xc[2, 2] - Xp[2, 2], -cert.P[0, 0] / 0.5)
        np.testing.assert_allclose(Xc[1, 3], (-A.T @ cert.X)[0, 0])
        np.testing.assert_allclose(Xp[1, 3], -A.T[0, 0])


class TestCompactFormObstruction:
    """The compact block form is sign-indefinite for any valid certificate:
    the direction (x, x, 0, 0) with x in ker(A) yields tau_g * x'Qx and the
    direction (x, -x, 2x, 0) yields x'(-2A + tau_g Q)x."""

    def test_kernel_direction_value(self):
        A = np.array([[-1.0, 0.0], [0.0, 0.0]])  # single pinned DG, 2N form
        cert = random_cert(2, 0.5, 0.999, seed=10)
        Xi = ds.assemble_xi(A, 0.5, 0.999, cert)
        x = np.array([0.0, 1.0])  # kernel of A
        rho = np.concatenate([x, x, np.zeros(2), np.zeros(2)])
        val = rho @ Xi @ rho
        np.testing.assert_allclose(val, 0.999 * x @ cert.Q @ x, rtol=1e-10)
        assert val > 0

    def test_newton_leibniz_direction_value(self):
        A = np.array([[-2.0]])
        cert = random_cert(1, 0.5, 0.999, seed=11)
        Xi = ds.assemble_xi(A, 0.5, 0.999, cert)
        rho = np.array([1.0, -1.0, 2.0, 0.0])
        val = rho @ Xi @ rho
        np.testing.assert_allclose(val, -2 * A[0, 0] + 0.999 * cert.Q[0, 0],
                                    rtol=1e-10)
        assert val > 0

    def test_lambda_max_never_negative(self):
        A = reference_reduced_matrix()
        om = ds.disagreement_matrix(4)
        K = -A  # any square embedding; use the full 2N form
        A2 = ds.error_dynamics_matrix(K, np.zeros((4, 4)), om)
        for seed in range(4):
            cert = random_cert(8, 0.5, 0.999, seed=seed)
            lam = np.linalg.eigvalsh(ds.assemble_xi(A2, 0.5, 0.999, cert))[-1]
            assert lam > 0


class TestCheckCertificate:
    def test_zero_certificate_refused(self):
        n = 2
        Z = np.zeros((n, n))
        cert = LmiCertificate(Q=Z, R=Z, P=Z, M=Z, T=Z, X=Z,
                              tau_star=0.5, tau_g=0.999)
        chk = ds.check_certificate(-np.eye(n), DelayBounds(0.5, 0.999), cert)
        assert not chk.accepted
        assert any("positive definite" in r for r in chk.reasons)

    def test_asymmetric_q_rejected(self):
        n = 2
        Q = np.array([[1.0, 0.5], [0.0, 1.0]])
        cert = LmiCertificate(Q=Q, R=np.eye(n), P=np.eye(n),
                              M=np.zeros((n, n)), T=np.zeros((n, n)),
                              X=np.zeros((n, n)), tau_star=0.5, tau_g=0.999)
        with pytest.raises(ValueError, match="symmetric"):
            ds.check_certificate(-np.eye(n), DelayBounds(0.5, 0.999), cert)

    def test_certify_then_check_roundtrip_scalar(self):
        bounds = DelayBounds(0.5, 0.999)
        A = np.array([[-1.5]])
        cert = certify_matrix(A, bounds)
        chk = ds.check_certificate(A, bounds, cert)
        assert chk.accepted
        assert chk.margin > 1e-8
        np.testing.assert_allclose(chk.margin, cert.margin, rtol=1e-6)

    def test_reference_gains_certified_at_small_delay(self):
        A = reference_reduced_matrix()
        bounds = DelayBounds(0.05, 0.999)
        cert = certify_matrix(A, bounds)
        assert ds.check_certificate(A, bounds, cert).accepted

    def test_reference_gains_refused_at_half_second(self):
        # spectral radius ~11.8 makes 0.5 s delays uncertifiable
        A = reference_reduced_matrix()
        with pytest.raises(SynthesisError) as exc:
            certify_matrix(A, DelayBounds(0.5, 0.999))
        assert exc.value.best_margin is not None
        assert exc.value.best_margin < 0


class TestScalarCeiling:
    def test_ceiling_location(self):
        k_hi = ds.scalar_gain_ceiling(DelayBounds(0.5, 0.999))
        assert 1.8 < k_hi < 2.05
        assert k_hi * 0.5 < np.pi / 2

    def test_certified_below_refused_above(self):
        bounds = DelayBounds(0.5, 0.999)
        k_hi = ds.scalar_gain_ceiling(bounds)
        cert = certify_matrix(np.array([[-0.9 * k_hi]]), bounds)
        assert cert.margin > 0
        with pytest.raises(SynthesisError):
            certify_matrix(np.array([[-1.2 * k_hi]]), bounds)


class TestSynthesize:
    def test_single_dg_respects_delay_margin_oracle(self):
        topo = ds.CommTopology.make(1, [], [1])
        bounds = DelayBounds(0.5, 0.999)
        gains, cert = ds.synthesize_gains(topo, bounds)
        k10 = gains.k[(1, 0)]
        assert k10 * 0.5 < np.pi / 2
        chk = ds.check_certificate(np.array([[-k10]]), bounds, cert)
        assert chk.accepted

    def test_infeasible_for_large_delay(self):
        topo = ds.CommTopology.make(4, [(1, 2), (2, 3), (3, 4)], [1])
        with pytest.raises(SynthesisError) as exc:
            ds.synthesize_gains(topo, DelayBounds(50.0, 0.999),
                                SynthesisOptions(k_min=0.5))
        assert exc.value.best_margin is not None

    def test_roundtrip_four_dg(self, ref_scenario, synth_result):
        gains, cert = synth_result
        A = ds.reduced_error_matrix(
            ds.pinned_matrix(ref_scenario.comm, gains),
            ds.follower_matrix(ref_scenario.comm, gains))
        chk = ds.check_certificate(A, ref_scenario.delay_bounds, cert)
        assert chk.accepted
        assert chk.margin >= 1e-8
        # symmetric synthesis: every eigenvalue inside the certified band
        lam = np.linalg.eigvalsh(-A)
        k_hi = ds.scalar_gain_ceiling(ref_scenario.delay_bounds)
        assert lam[0] > 0
        assert lam[-1] <= k_hi


class TestLkFunctional:
    def test_zero_trajectory(self):
        chi = np.zeros((100, 2))
        w = ds.LkWeights(Q=np.eye(2), W=np.eye(2))
        V = ds.evaluate_lk_functional(chi, 0.01, np.full(100, 0.2), w, 0.3)
        valid = ~np.isnan(V)
        assert valid.sum() > 0
        np.testing.assert_allclose(V[valid], 0.0, atol=1e-15)

    def test_constant_trajectory(self):
        c = np.array([1.0, -2.0])
        chi = np.tile(c, (201, 1))
        Q = np.array([[2.0, 0.3], [0.3, 1.0]])
        w = ds.LkWeights(Q=Q, W=np.eye(2))
        tau = np.full(201, 0.25)
        V = ds.evaluate_lk_functional(chi, 0.01, tau, w, 0.5)
        valid = ~np.isnan(V)
        expected = c @ c + 0.25 * (c @ Q @ c)
        np.testing.assert_allclose(V[valid], expected, rtol=1e-9)

    def test_lower_bound_by_state_norm(self):
        rng = np.random.default_rng(12)
        chi = rng.normal(size=(300, 3))
        w = ds.LkWeights(Q=np.eye(3) * 0.5, W=np.eye(3) * 0.2)
        V = ds.evaluate_lk_functional(chi, 0.01, np.full(300, 0.1), w, 0.2)
        valid = np.where(~np.isnan(V))[0]
        norms = np.einsum("ti,ti->t", chi, chi)
        assert np.all(V[valid] >= norms[valid] - 1e-12)

    def test_insufficient_history_raises(self):
        chi = np.zeros((5, 1))
        w = ds.LkWeights(Q=np.eye(1), W=np.eye(1))
        with pytest.raises(ValueError, match="shorter"):
            ds.evaluate_lk_functional(chi, 0.01, np.zeros(5), w, 1.0)

    def test_weights_from_completed_certificate(self):
        cert = certify_matrix(np.array([[-1.0]]), DelayBounds(0.5, 0.999))
        w = ds.lk_weights_from_certificate(cert)
        np.testing.assert_allclose(w.Q, cert.Q)
        np.testing.assert_allclose(w.W, cert.P)

    def test_weights_from_compact_certificate(self):
        cert = random_cert(2, 0.5, 0.9, seed=20, form=COMPACT)
        # make X well-conditioned
        cert = LmiCertificate(cert.Q, cert.R, cert.P, cert.M, cert.T,
                              cert.X + 3 * np.eye(2), 0.5, 0.9, form=COMPACT)
        w = ds.lk_weights_from_certificate(cert)
        Xi = np.linalg.inv(cert.X)
        expected = Xi @ cert.P @ Xi.T
        np.testing.assert_allclose(w.W, 0.5 * (expected + expected.T),
                                   rtol=1e-10)
