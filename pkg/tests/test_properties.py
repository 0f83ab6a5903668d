"""Standalone property suite.

Each property here is an exact identity or tight numerical contract of
one operation, checked at its stated tolerance independently of the
reference scenarios: covariance-relation round-trips, network-reduction
current equivalence, derivative checks, eigenpair contracts, exact Prony
recovery, streaming/batch equivalence and bit-level seed determinism.
"""

import io

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from gridjac.estimate import (CovarianceBlocks, StreamingCovariance,
                              estimate_damping, estimate_jacobian,
                              sample_covariance)
from gridjac.linear import jacobian_coi
from gridjac.modal import eigen_decompose
from gridjac.network import (Branch, Bus, Generator, Load, RawCase,
                             build_augmented_ybus, kron_reduce)
from gridjac.prony import prony_fit
from gridjac.swing import electrical_power, full_angles, simulate


def spd_matrix(rng, m, spread=3.0):
    Q, _ = np.linalg.qr(rng.normal(size=(m, m)))
    vals = rng.uniform(1.0, spread, m)
    return Q @ np.diag(vals) @ Q.T


# 1 ---------------------------------------------------------------- Eq round trip

@settings(max_examples=30, deadline=None)
@given(st.integers(2, 7), st.integers(0, 10_000))
def test_jacobian_covariance_round_trip_exact(m, seed):
    rng = np.random.default_rng(seed)
    M = rng.uniform(0.2, 3.0, m)
    c_ww = spd_matrix(rng, m)
    K = rng.normal(size=(m, m)) + (m + 1) * np.eye(m)
    c_dd = np.linalg.inv(K) @ np.diag(M) @ c_ww
    est = estimate_jacobian(M, CovarianceBlocks(c_dd, np.zeros((m, m)), c_ww))
    assert np.max(np.abs(est.K - K)) <= 1e-12 * max(1.0, np.max(np.abs(K)))


# 2 ----------------------------------------------------------- damping round trip

@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000))
def test_damping_round_trip_exact(m, seed):
    rng = np.random.default_rng(seed)
    M = rng.uniform(0.2, 3.0, m)
    D = rng.uniform(0.1, 5.0, m)
    sigma = rng.uniform(0.001, 0.1, m)
    c_ww = np.diag(0.5 * sigma**2 / (M * D))
    de = estimate_damping(M, sigma, c_ww)
    assert np.max(np.abs(de.d - D)) <= 1e-12 * np.max(D)


# 3 ------------------------------------------------------- Kron current equivalence

def random_connected_case(rng, n_bus):
    buses = tuple(Bus(i + 1, float(rng.uniform(0.95, 1.05)),
                      float(rng.uniform(-0.3, 0.3)))
                  for i in range(n_bus))
    branches = []
    for i in range(2, n_bus + 1):                      # spanning tree
        j = int(rng.integers(1, i))
        branches.append(Branch(j, i, float(rng.uniform(0.0, 0.02)),
                               float(rng.uniform(0.02, 0.3)),
                               float(rng.uniform(0.0, 0.2))))
    for _ in range(rng.integers(0, n_bus)):            # extra meshing
        i, j = rng.choice(n_bus, size=2, replace=False) + 1
        branches.append(Branch(int(i), int(j), 0.01,
                               float(rng.uniform(0.05, 0.4))))
    loads = tuple(Load(int(b), float(rng.uniform(0.1, 1.0)),
                       float(rng.uniform(-0.2, 0.4)))
                  for b in rng.choice(n_bus, size=max(1, n_bus // 3),
                                      replace=False) + 1)
    gens = tuple(Generator(f"G{k+1}", int(b), float(rng.uniform(0.03, 0.2)),
                           1.0, 1.0, 0.5)
                 for k, b in enumerate(
                     rng.choice(n_bus, size=max(2, n_bus // 3),
                                replace=False) + 1))
    return RawCase(buses=buses, branches=tuple(branches), loads=loads,
                   generators=gens)


def test_kron_current_equivalence_random_networks():
    rng = np.random.default_rng(2024)
    for trial in range(25):
        case = random_connected_case(rng, int(rng.integers(4, 10)))
        Y = build_augmented_ybus(case)
        nb = len(case.buses)
        keep = list(range(nb, nb + case.n_gen))
        elim = list(range(nb))
        Yr = kron_reduce(Y, keep)
        v = rng.normal(size=len(keep)) + 1j * rng.normal(size=len(keep))
        ve = np.linalg.solve(Y[np.ix_(elim, elim)],
                             -Y[np.ix_(elim, keep)] @ v)
        i_full = Y[np.ix_(keep, keep)] @ v + Y[np.ix_(keep, elim)] @ ve
        assert np.max(np.abs(i_full - Yr @ v)) < 1e-10
        assert np.max(np.abs(Yr - Yr.T)) < 1e-10


# 4 -------------------------------------------------- finite-difference Jacobian

def test_finite_difference_jacobian(wscc9_model, ne39_model):
    rng = np.random.default_rng(5)
    for mdl in (wscc9_model, ne39_model):
        idx = mdl.indep

        def resid(d_ind):
            d = full_angles(d_ind, mdl)
            pe = electrical_power(d, mdl.net)
            pcoi = np.sum(mdl.Pm - pe)
            return mdl.Pm[idx] - pe[idx] - mdl.M[idx] / mdl.M_T * pcoi

        d_ind = rng.normal(scale=0.2, size=mdl.n - 1)
        K = jacobian_coi(full_angles(d_ind, mdl), mdl)
        h = 1e-6
        for j in range(mdl.n - 1):
            e = np.zeros(mdl.n - 1)
            e[j] = h
            col = (resid(d_ind + e) - resid(d_ind - e)) / (2 * h)
            assert np.linalg.norm(-col - K[:, j]) <= 1e-6 * max(
                1.0, np.linalg.norm(K[:, j]))


# 5 ------------------------------------------------ eigenpair residual contracts

@settings(max_examples=25, deadline=None)
@given(st.integers(2, 10), st.integers(0, 10_000))
def test_eigen_residual_and_biorthogonality(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + 0.3) * np.eye(n)
    md = eigen_decompose(A)
    resid = np.max(np.abs(A @ md.right - md.right * md.eigenvalues))
    assert resid <= 1e-8 * np.linalg.norm(A)
    off = md.left @ md.right - np.eye(n)
    assert np.max(np.abs(off)) <= 1e-8


# 6 --------------------------------------------------------- Prony exact recovery

@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10_000))
def test_prony_exact_recovery(n_modes, seed):
    # damping bounded so every mode keeps numerical presence over the
    # window (a mode decayed to ~1e-6 of its amplitude is not
    # identifiable to 1e-6 pole accuracy by any fit), and frequencies
    # separated so the discrete poles do not coalesce near z = 1,
    # where polynomial rooting loses the last digits
    rng = np.random.default_rng(seed)
    order = 6
    assert n_modes <= order // 2
    dt = 0.01
    t = np.arange(900) * dt
    lams, sig = [], np.zeros_like(t)
    freqs = rng.uniform(0.3, 4.0, n_modes)
    freqs.sort()
    if np.min(np.diff(freqs, prepend=-0.5)) < 0.5:
        freqs = np.linspace(0.4, 4.0, n_modes)  # keep modes separated
    for k in range(n_modes):
        s = rng.uniform(-0.7, -0.05)
        a = rng.uniform(0.3, 1.0)
        ph = rng.uniform(-np.pi, np.pi)
        lams.append(complex(s, 2 * np.pi * freqs[k]))
        sig += a * np.exp(s * t) * np.cos(2 * np.pi * freqs[k] * t + ph)
    res = prony_fit(sig, dt, order)
    got = [m.lam for m in res.modes if m.lam.imag > 0.05]
    for lam in lams:
        assert min(abs(g - lam) for g in got) <= 1e-6


# 7 ----------------------------------------------- streaming vs batch covariance

def test_streaming_matches_batch_on_sliding_window(wscc9_model):
    res = simulate(wscc9_model, dt=1e-3, t_end=30.0, record_every=10, seed=13)
    X = res.trajectory.data
    cap = 512
    sc = StreamingCovariance(capacity=cap, dim=X.shape[1])
    for k, row in enumerate(X):
        sc.push(row)
        if k + 1 >= cap and (k + 1) % 500 == 0:
            got = sc.blocks()
            lo = k + 1 - cap
            ref_traj = res.trajectory
            ref = np.cov(X[lo:k + 1].T)
            assert np.max(np.abs(got.full - 0.5 * (ref + ref.T))) < 1e-10


# 8 -------------------------------------------------------- seed determinism

def test_seed_determinism_byte_exact(wscc9_model):
    blobs = []
    for _ in range(2):
        res = simulate(wscc9_model, dt=1e-3, t_end=10.0, record_every=10,
                       seed=4242)
        buf = io.StringIO()
        res.trajectory.to_csv(buf)
        cov = sample_covariance(res.trajectory, 0.0, 10.0)
        est = estimate_jacobian(wscc9_model.M[:2], cov)
        blobs.append((buf.getvalue(), est.K.tobytes()))
    assert blobs[0] == blobs[1]
