"""Ground-truth linearization and the Lyapunov covariance oracle.

The state matrix has the block form [0 I; -M^-1 K  -M^-1 D] over the
independent machines, with K the COI Jacobian dPe/ddelta folded through
the dependent machine.  The stationary covariance of the driven linear
system solves A C + C A^T = -B B^T.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import CaseError, StabilityError

LYAP_RESIDUAL_RTOL = 1e-10


def pe_jacobian(delta: np.ndarray, net) -> np.ndarray:
    """Full n x n dPe/ddelta of the reduced network (no COI terms)."""
    delta = np.asarray(delta, dtype=float)
    E, G, B = net.E, net.G, net.B
    n = len(delta)
    dd = delta[:, None] - delta[None, :]
    EE = np.outer(E, E)
    off = EE * (G * np.sin(dd) - B * np.cos(dd))
    J = off.copy()
    np.fill_diagonal(J, 0.0)
    # translation invariance: rows sum to zero
    np.fill_diagonal(J, -J.sum(axis=1))
    return J


def pcoi_gradient(delta: np.ndarray, net) -> np.ndarray:
    """dPcoi/ddelta_j = 2 sum_k Ej Ek Gjk sin(dj - dk)."""
    delta = np.asarray(delta, dtype=float)
    E, G = net.E, net.G
    dd = delta[:, None] - delta[None, :]
    M = np.outer(E, E) * G * np.sin(dd)
    np.fill_diagonal(M, 0.0)
    return 2.0 * M.sum(axis=1)


def coi_jacobian_full(delta: np.ndarray, model) -> np.ndarray:
    """n x n COI-corrected Jacobian: dPe/ddelta + (M/M_T) dPcoi/ddelta."""
    J = pe_jacobian(delta, model.net)
    g = pcoi_gradient(delta, model.net)
    return J + np.outer(model.M / model.M_T, g)


def jacobian_coi(delta: np.ndarray, model) -> np.ndarray:
    """(n-1) x (n-1) COI Jacobian over the independent machines.

    Chain rule folds the dependent angle d_r(d_indep) = -sum M_i d_i / M_r
    into the independent block, so this is exactly the Jacobian of the
    COI acceleration residual (times -1) used by the Newton solver and
    the state matrix.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (model.n,):
        raise CaseError(f"delta must include all {model.n} machines")
    Kf = coi_jacobian_full(delta, model)
    idx = model.indep
    r = model.ref
    ratio = model.M[idx] / model.M[r]
    return Kf[np.ix_(idx, idx)] - np.outer(Kf[idx, r], ratio)


def state_matrix(K: np.ndarray, M: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Blocks [0 I; -M^-1 K  -M^-1 D]; M, D are the independent diagonals."""
    K = np.asarray(K, dtype=float)
    M = np.asarray(M, dtype=float)
    D = np.asarray(D, dtype=float)
    m = K.shape[0]
    if K.shape != (m, m) or M.shape != (m,) or D.shape != (m,):
        raise CaseError("inconsistent dimensions for state matrix assembly")
    A = np.zeros((2 * m, 2 * m))
    A[:m, m:] = np.eye(m)
    A[m:, :m] = -K / M[:, None]
    A[m:, m:] = -np.diag(D / M)
    return A


def input_matrix(M: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """[0; M^-1 Sigma] mapping unit white noise into the speed equations."""
    M = np.asarray(M, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    m = len(M)
    if sigma.shape != (m,):
        raise CaseError("sigma must match M")
    B = np.zeros((2 * m, m))
    B[m:, :] = np.diag(sigma / M)
    return B


def model_state_space(model, delta_eq: np.ndarray):
    """(A, B) of the model linearized at the given equilibrium angles."""
    idx = model.indep
    K = jacobian_coi(delta_eq, model)
    A = state_matrix(K, model.M[idx], model.D[idx])
    B = input_matrix(model.M[idx], model.sigma[idx])
    return A, B


def solve_lyapunov(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Stationary covariance C of dx = A x dt + B dW: A C + C A^T = -B B^T.

    Solved by Kronecker vectorization; fine for the n <= 20 machine scale
    this package targets.  Raises StabilityError when A is not Hurwitz.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    N = A.shape[0]
    if np.max(np.linalg.eigvals(A).real) >= 0:
        raise StabilityError("A is not Hurwitz: no stationary covariance")
    Q = B @ B.T
    lhs = np.kron(np.eye(N), A) + np.kron(A, np.eye(N))
    C = np.linalg.solve(lhs, -Q.reshape(-1)).reshape(N, N)
    C = 0.5 * (C + C.T)
    qn = np.linalg.norm(Q)
    resid = np.linalg.norm(A @ C + C @ A.T + Q)
    if qn > 0 and resid > LYAP_RESIDUAL_RTOL * qn:
        raise StabilityError(f"Lyapunov residual {resid:.3e} exceeds "
                             f"{LYAP_RESIDUAL_RTOL:.1e} * |BB^T|")
    return C


class TheoreticalCovariances(NamedTuple):
    c_dd: np.ndarray
    c_dw: np.ndarray
    c_ww: np.ndarray


def theoretical_covariances(K: np.ndarray, M: np.ndarray, D: np.ndarray,
                            sigma: np.ndarray) -> TheoreticalCovariances:
    """Closed-form stationary covariance predictions.

    C_dw = 0, C_ww = (1/2) M^-1 D^-1 Sigma^2 (diagonal), and
    C_dd = K^-1 M C_ww.  These drop the coupling terms the full Lyapunov
    solution retains, which is exactly the estimator's modelling step.
    """
    K = np.asarray(K, dtype=float)
    M = np.asarray(M, dtype=float)
    D = np.asarray(D, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    m = len(M)
    if np.any(D <= 0):
        raise StabilityError("theoretical covariances need D > 0")
    c_ww = np.diag(0.5 * sigma**2 / (M * D))
    try:
        kinv = np.linalg.inv(K)
    except np.linalg.LinAlgError:
        raise StabilityError("singular Jacobian: no covariance prediction")
    c_dd = kinv @ np.diag(M) @ c_ww
    return TheoreticalCovariances(c_dd=c_dd, c_dw=np.zeros((m, m)), c_ww=c_ww)


def simulate_linear(A: np.ndarray, B: np.ndarray, dt: float, t_end: float,
                    seed: int = 0, record_every: int = 1,
                    x0: np.ndarray | None = None) -> np.ndarray:
    """Euler-Maruyama sample path of dx = A x dt + B dW (validation aid).

    Shares the noise convention of the nonlinear engine; returns the
    recorded (N, dim) state array.
    """
    from .swing import _boxmuller_normals

    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    N = A.shape[0]
    nsteps = int(round(t_end / dt))
    noise = _boxmuller_normals(seed, (nsteps, B.shape[1]))
    x = np.zeros(N) if x0 is None else np.asarray(x0, dtype=float).copy()
    out = np.zeros((nsteps // record_every + 1, N))
    out[0] = x
    rec = 1
    sq = np.sqrt(dt)
    for k in range(nsteps):
        x = x + dt * (A @ x) + sq * (B @ noise[k])
        if (k + 1) % record_every == 0:
            out[rec] = x
            rec += 1
    return out[:rec]
