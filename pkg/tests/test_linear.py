import numpy as np
import pytest
import scipy.linalg

from gridjac.errors import StabilityError
from gridjac.linear import (input_matrix, jacobian_coi, model_state_space,
                            pe_jacobian, simulate_linear, solve_lyapunov,
                            state_matrix, theoretical_covariances)
from gridjac.network import ContingencyEvent
from gridjac.swing import find_equilibrium, full_angles

from conftest import two_machine_model

K_PRE_REF = np.array([[8.053, 1.240], [2.802, 5.085]])
K_POST_REF = np.array([[5.943, 0.949], [3.897, 5.191]])


class TestJacobian:
    def test_9bus_pre_contingency(self, wscc9_model, wscc9_equilibrium):
        K = jacobian_coi(wscc9_equilibrium.delta, wscc9_model)
        assert np.linalg.norm(K - K_PRE_REF) / np.linalg.norm(K_PRE_REF) < 0.01

    def test_9bus_post_contingency(self, wscc9_model, wscc9_equilibrium):
        m2 = wscc9_model.with_events(
            ContingencyEvent("set_xd_prime", "G1", 0.1824))
        eq = find_equilibrium(m2, guess=wscc9_equilibrium.delta)
        K = jacobian_coi(eq.delta, m2)
        assert np.linalg.norm(K - K_POST_REF) / np.linalg.norm(K_POST_REF) < 0.01

    def test_pe_jacobian_rows_sum_to_zero(self, wscc9_model):
        rng = np.random.default_rng(1)
        for _ in range(5):
            J = pe_jacobian(rng.normal(scale=0.5, size=3), wscc9_model.net)
            assert np.max(np.abs(J.sum(axis=1))) < 1e-12

    def test_finite_difference_agreement(self, wscc9_model):
        # central differences of the COI acceleration residual, step 1e-6
        mdl = wscc9_model
        idx = mdl.indep

        def resid(d_ind):
            from gridjac.swing import electrical_power
            d = full_angles(d_ind, mdl)
            pe = electrical_power(d, mdl.net)
            pcoi = np.sum(mdl.Pm - pe)
            return mdl.Pm[idx] - pe[idx] - mdl.M[idx] / mdl.M_T * pcoi

        rng = np.random.default_rng(7)
        for _ in range(3):
            d_ind = rng.normal(scale=0.3, size=2)
            K = jacobian_coi(full_angles(d_ind, mdl), mdl)
            h = 1e-6
            for j in range(2):
                e = np.zeros(2)
                e[j] = h
                col = (resid(d_ind + e) - resid(d_ind - e)) / (2 * h)
                assert np.linalg.norm(-col - K[:, j]) <= 1e-6 * max(
                    1.0, np.linalg.norm(K[:, j]))


class TestStateMatrix:
    def test_unit_blocks(self):
        A = state_matrix(np.eye(2), np.ones(2), np.ones(2))
        expect = np.array([
            [0, 0, 1, 0],
            [0, 0, 0, 1],
            [-1, 0, -1, 0],
            [0, -1, 0, -1.0],
        ])
        assert np.array_equal(A, expect)

    def test_9bus_hurwitz(self, wscc9_model, wscc9_equilibrium):
        A, _ = model_state_space(wscc9_model, wscc9_equilibrium.delta)
        assert np.max(np.linalg.eigvals(A).real) < 0

    def test_block_structure(self, wscc9_model, wscc9_equilibrium):
        A, _ = model_state_space(wscc9_model, wscc9_equilibrium.delta)
        m = 2
        assert np.array_equal(A[:m, :m], np.zeros((m, m)))
        assert np.array_equal(A[:m, m:], np.eye(m))
        idx = wscc9_model.indep
        assert np.allclose(np.diag(A[m:, m:]),
                           -wscc9_model.D[idx] / wscc9_model.M[idx])
        assert np.count_nonzero(A[m:, m:] - np.diag(np.diag(A[m:, m:]))) == 0

    def test_relabeling_equivariance(self):
        rng = np.random.default_rng(5)
        K = rng.normal(size=(3, 3))
        M = rng.uniform(0.5, 2.0, 3)
        D = rng.uniform(0.5, 2.0, 3)
        A = state_matrix(K, M, D)
        p = np.array([2, 0, 1])
        Ap = state_matrix(K[np.ix_(p, p)], M[p], D[p])
        P = np.zeros((6, 6))
        for i, j in enumerate(p):
            P[i, j] = 1.0
            P[3 + i, 3 + j] = 1.0
        assert np.allclose(Ap, P @ A @ P.T, atol=1e-14)


class TestInputMatrix:
    def test_identity(self):
        B = input_matrix(np.ones(2), np.ones(2))
        assert np.array_equal(B[:2], np.zeros((2, 2)))
        assert np.array_equal(B[2:], np.eye(2))

    def test_scaling(self):
        B = input_matrix(np.array([2.0]), np.array([0.01]))
        assert B[1, 0] == pytest.approx(0.005)

    def test_zero_noise_gives_zero_covariance(self):
        A = state_matrix(np.eye(2), np.ones(2), np.ones(2))
        B = input_matrix(np.ones(2), np.zeros(2))
        assert np.array_equal(B, np.zeros((4, 2)))
        C = solve_lyapunov(A, B)
        assert np.array_equal(C, np.zeros((4, 4)))


class TestLyapunov:
    def test_scalar_balance(self):
        C = solve_lyapunov(-np.eye(2), np.eye(2))
        assert np.allclose(C, 0.5 * np.eye(2), atol=1e-14)

    def test_residual_and_psd(self, wscc9_model, wscc9_equilibrium):
        A, B = model_state_space(wscc9_model, wscc9_equilibrium.delta)
        C = solve_lyapunov(A, B)
        Q = B @ B.T
        assert np.linalg.norm(A @ C + C @ A.T + Q) <= 1e-10 * np.linalg.norm(Q)
        assert np.max(np.abs(C - C.T)) < 1e-12
        assert np.min(np.linalg.eigvalsh(C)) >= -1e-12

    def test_9bus_block_magnitudes(self, wscc9_model, wscc9_equilibrium):
        A, B = model_state_space(wscc9_model, wscc9_equilibrium.delta)
        C = solve_lyapunov(A, B)
        cdd = np.diag(C[:2, :2])
        cww = np.diag(C[2:, 2:])
        assert np.all(cdd > 1e-5) and np.all(cdd < 1e-4)
        assert np.all(cww > 1e-4) and np.all(cww < 1e-3)

    def test_matches_scipy_solver(self, wscc9_model, wscc9_equilibrium):
        A, B = model_state_space(wscc9_model, wscc9_equilibrium.delta)
        C = solve_lyapunov(A, B)
        C_ref = scipy.linalg.solve_continuous_lyapunov(A, -B @ B.T)
        assert np.allclose(C, C_ref, atol=1e-12)

    def test_not_hurwitz_rejected(self):
        with pytest.raises(StabilityError, match="Hurwitz"):
            solve_lyapunov(np.array([[0.1]]), np.array([[1.0]]))

    def test_consistency_identity(self, wscc9_model, wscc9_equilibrium):
        # (1,2) Lyapunov block: C_ww = C_dd K^T M^-1 + C_dw D M^-1
        A, B = model_state_space(wscc9_model, wscc9_equilibrium.delta)
        C = solve_lyapunov(A, B)
        idx = wscc9_model.indep
        K = jacobian_coi(wscc9_equilibrium.delta, wscc9_model)
        Minv = np.diag(1.0 / wscc9_model.M[idx])
        Dm = np.diag(wscc9_model.D[idx])
        lhs = C[2:, 2:]
        rhs = C[:2, :2] @ K.T @ Minv + C[:2, 2:] @ Dm @ Minv
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_dw_block_antisymmetric(self, wscc9_model, wscc9_equilibrium):
        A, B = model_state_space(wscc9_model, wscc9_equilibrium.delta)
        C = solve_lyapunov(A, B)
        assert np.max(np.abs(C[:2, 2:] + C[:2, 2:].T)) < 1e-12


class TestTheoreticalCovariances:
    def test_scalar_case(self):
        tc = theoretical_covariances(np.eye(1), np.ones(1), np.ones(1),
                                     np.ones(1))
        assert tc.c_ww[0, 0] == pytest.approx(0.5)

    def test_exact_for_single_independent_machine(self):
        mdl = two_machine_model(b=1.0, m=(1.0, 3.0), d=(0.7, 1.1), pm=0.4,
                                sigma=0.02)
        eq = find_equilibrium(mdl)
        A, B = model_state_space(mdl, eq.delta)
        C = solve_lyapunov(A, B)
        K = jacobian_coi(eq.delta, mdl)
        tc = theoretical_covariances(K, mdl.M[:1], mdl.D[:1], mdl.sigma[:1])
        assert tc.c_dw[0, 0] == 0.0
        assert abs(C[0, 1]) < 1e-15          # 1x1 antisymmetric block
        assert C[1, 1] == pytest.approx(tc.c_ww[0, 0], rel=1e-10)
        assert C[0, 0] == pytest.approx(tc.c_dd[0, 0], rel=1e-10)

    def test_9bus_against_lyapunov(self, wscc9_model, wscc9_equilibrium):
        idx = wscc9_model.indep
        K = jacobian_coi(wscc9_equilibrium.delta, wscc9_model)
        tc = theoretical_covariances(K, wscc9_model.M[idx],
                                     wscc9_model.D[idx],
                                     wscc9_model.sigma[idx])
        A, B = model_state_space(wscc9_model, wscc9_equilibrium.delta)
        C = solve_lyapunov(A, B)
        # the closed-form prediction drops coupling terms; the measured
        # bias on this case is 5-6 percent on the speed variances
        assert np.allclose(np.diag(tc.c_ww), np.diag(C[2:, 2:]), rtol=0.10)
        assert np.allclose(tc.c_dd, C[:2, :2], rtol=0.15)


class TestLinearSde:
    def test_sample_covariance_matches_lyapunov(self, wscc9_model,
                                                wscc9_equilibrium):
        # seed-averaged long-run covariance of the linearized model
        A, B = model_state_space(wscc9_model, wscc9_equilibrium.delta)
        C_ref = solve_lyapunov(A, B)
        acc = np.zeros_like(C_ref)
        n_seeds = 6
        for seed in range(n_seeds):
            X = simulate_linear(A, B, dt=1e-3, t_end=300.0, seed=seed,
                                record_every=10)
            Xc = X - X.mean(axis=0)
            acc += Xc.T @ Xc / (len(X) - 1)
        C_hat = acc / n_seeds
        err = np.linalg.norm(C_hat - C_ref) / np.linalg.norm(C_ref)
        assert err < 0.10
