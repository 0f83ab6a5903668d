"""Eigen-analysis of state matrices and its monitoring/control products.

Covers the full chain from a (estimated or analytic) state matrix to
modes, participation factors, the critical eigenvalue, the eigenvector
ranking of at-risk machines, the saddle-node normal vector in mechanical
power space and a balanced re-dispatch plan along it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ModalError
from .swing import CoiModel, Equilibrium, continuation_equilibrium

EIG_RESIDUAL_RTOL = 1e-8
_NEAR_DEFECT = 1e-10


@dataclass(frozen=True)
class ModalDecomposition:
    """Eigen triplets of a real square matrix.

    right[:, k] and left[k, :] are matched to eigenvalues[k] and
    normalized so left[k] @ right[:, k] = 1 (transpose pairing, no
    conjugation).  Complex modes appear with both conjugates;
    ``representative`` flags one member per pair (Im >= 0).
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    residual: float
    warnings: tuple = ()

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def representative(self) -> np.ndarray:
        return self.eigenvalues.imag >= 0


def eigen_decompose(A: np.ndarray) -> ModalDecomposition:
    """Full spectrum with biorthogonal left/right eigenvectors.

    Left vectors are the rows of V^-1, which makes biorthogonality exact;
    near-defective pairs (unit-vector product below 1e-10) attach a
    warning, outright defective matrices are rejected.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ModalError("eigen_decompose needs a square real matrix")
    try:
        lam, V = np.linalg.eig(A)
    except np.linalg.LinAlgError as e:
        raise ModalError(f"eigen iteration failed: {e}") from e
    norms = np.linalg.norm(V, axis=0)
    V = V / norms
    condV = np.linalg.cond(V)
    if not np.isfinite(condV) or condV > 1e14:
        resid = float(np.max(np.abs(A @ V - V * lam)))
        raise ModalError("matrix is defective or near-defective "
                         f"(cond(V)={condV:.3e}, eigpair residual {resid:.3e})")
    W = np.linalg.inv(V)          # rows satisfy w^T A = lam w^T, w^T v = 1
    notes = []
    wnorm = np.linalg.norm(W, axis=1)
    weak = 1.0 / wnorm            # |w~^T v| for unit-norm vectors
    for k in np.nonzero(weak < _NEAR_DEFECT)[0]:
        notes.append(f"eigenvalue {lam[k]:.6g}: near-defective pairing "
                     f"(w.v = {weak[k]:.2e})")
    resid = float(np.max(np.abs(A @ V - V * lam)) / max(np.linalg.norm(A), 1e-300))
    if resid > EIG_RESIDUAL_RTOL:
        raise ModalError(f"eigenpair residual {resid:.3e} exceeds "
                         f"{EIG_RESIDUAL_RTOL:.1e}")
    return ModalDecomposition(eigenvalues=lam, right=V, left=W,
                              residual=resid, warnings=tuple(notes))


def participation_factors(md: ModalDecomposition) -> np.ndarray:
    """|w_mk v_km| normalized so each mode column sums to one.

    Rows are states, columns modes (same order as md.eigenvalues).
    """
    P = np.abs(md.right * md.left.T)
    s = P.sum(axis=0)
    s[s == 0] = 1.0
    return P / s


@dataclass(frozen=True)
class ModeRow:
    index: int
    damping: float      # Re(lambda), 1/s
    freq_hz: float      # Im(lambda)/2pi
    eigenvalue: complex


def mode_table(md: ModalDecomposition) -> list:
    """Per-mode damping/frequency; conjugate pairs reported once."""
    rows = []
    for k in np.nonzero(md.representative)[0]:
        lam = md.eigenvalues[k]
        rows.append(ModeRow(index=int(k), damping=float(lam.real),
                            freq_hz=float(lam.imag / (2 * np.pi)),
                            eigenvalue=complex(lam)))
    rows.sort(key=lambda r: -r.damping)
    return rows


def critical_eigenvalue(md: ModalDecomposition) -> complex:
    """Eigenvalue with maximum real part; ties favour larger |Im|, then index."""
    lam = md.eigenvalues
    best = 0
    for k in range(1, len(lam)):
        if lam[k].real > lam[best].real + 1e-15:
            best = k
        elif abs(lam[k].real - lam[best].real) <= 1e-15:
            if abs(lam[k].imag) > abs(lam[best].imag):
                best = k
    return complex(lam[best])


def _mode_index(md: ModalDecomposition, lam_c: complex) -> int:
    k = int(np.argmin(np.abs(md.eigenvalues - lam_c)))
    if abs(md.eigenvalues[k] - lam_c) > 1e-6 * max(1.0, abs(lam_c)):
        raise ModalError(f"{lam_c} is not an eigenvalue of this decomposition")
    return k


@dataclass(frozen=True)
class MachineRanking:
    machines: tuple       # 1-based machine numbers, most exposed first
    components: np.ndarray  # matching |angle components| of the mode shape
    full_shape: np.ndarray  # normalized angle components for all n machines


def unstable_machine_ranking(md: ModalDecomposition, lam_c: complex,
                             M: np.ndarray, ref: int = -1) -> MachineRanking:
    """Rank machines by angle components of the critical right eigenvector.

    The dependent machine's implied component is recovered through the
    COI constraint so all n machines compete.  The vector is inf-norm
    normalized with its dominant entry positive; a sign flip of the input
    eigenvector does not change the result.
    """
    M = np.asarray(M, dtype=float)
    n = len(M)
    ref = ref % n
    k = _mode_index(md, lam_c)
    v = md.right[:, k]
    m = md.n // 2
    if m != n - 1:
        raise ModalError("state dimension does not match machine count")
    idx = [i for i in range(n) if i != ref]
    shape = np.zeros(n, dtype=complex)
    shape[idx] = v[:m]
    shape[ref] = -(M[idx] @ v[:m]) / M[ref]
    if abs(lam_c.imag) < 1e-9:
        shape = shape.real.astype(complex)
    dom = int(np.argmax(np.abs(shape)))
    if abs(shape[dom]) > 0:
        shape = shape / shape[dom]   # dominant entry 1, rest relative
    comp = np.abs(shape)
    order = np.argsort(-comp, kind="stable")
    return MachineRanking(machines=tuple(int(i) + 1 for i in order),
                          components=comp[order],
                          full_shape=shape.real if abs(lam_c.imag) < 1e-9
                          else shape)


def normal_vector(model: CoiModel, md: ModalDecomposition,
                  lam_c: complex) -> np.ndarray:
    """Unit normal of the saddle-node surface in independent-Pm space.

    n = (dh/dPm)^T w with w the left eigenvector of the (real) critical
    eigenvalue; the COI correction makes the speed-block rows
    (delta_ij - M_i/M_T)/M_i.  Normalized to unit length with the
    dominant entry positive, so scaling of w drops out.
    """
    if abs(lam_c.imag) > 1e-9:
        raise ModalError("normal vector defined at a saddle-node (real "
                         "critical eigenvalue) only")
    k = _mode_index(md, lam_c)
    w = md.left[k, :].real
    m = md.n // 2
    idx = model.indep
    dh = np.zeros((2 * m, m))
    for i in range(m):
        for j in range(m):
            dh[m + i, j] = ((1.0 if i == j else 0.0)
                            - model.M[idx[i]] / model.M_T) / model.M[idx[i]]
    n_vec = dh.T @ w
    nn = np.linalg.norm(n_vec)
    if nn == 0:
        raise ModalError("degenerate normal vector")
    n_vec = n_vec / nn
    if n_vec[int(np.argmax(np.abs(n_vec)))] < 0:
        n_vec = -n_vec
    return n_vec


@dataclass(frozen=True)
class RedispatchPlan:
    delta_pm: np.ndarray    # per independent machine, sums to zero
    slack: int              # 0-based position within the independent set
    step: float
    slack_pickup: float     # power the slack absorbs: step * sum(n)

    def __post_init__(self):
        object.__setattr__(self, "delta_pm",
                           np.asarray(self.delta_pm, dtype=float))
        if abs(self.delta_pm.sum()) > 1e-12 * max(1.0, abs(self.step)):
            raise ModalError("re-dispatch plan does not balance to zero")


def redispatch_plan(n_vec: np.ndarray, step: float = 1.0,
                    slack: int | None = None) -> RedispatchPlan:
    """Move Pm by -step*n and let the slack machine absorb the balance.

    slack defaults to the machine least sensitive in the unstable mode
    (argmin |n_i|); its pickup is step * sum(n).
    """
    n_vec = np.asarray(n_vec, dtype=float)
    if slack is None:
        slack = int(np.argmin(np.abs(n_vec)))
    slack = int(slack)
    if not 0 <= slack < len(n_vec):
        raise ModalError(f"slack index {slack} out of range")
    pickup = float(step * n_vec.sum())
    dpm = -step * n_vec
    dpm[slack] += pickup
    return RedispatchPlan(delta_pm=dpm, slack=slack, step=float(step),
                          slack_pickup=pickup)


def apply_redispatch(model: CoiModel, plan: RedispatchPlan) -> CoiModel:
    """Model with the plan added onto the independent machines' Pm."""
    idx = model.indep
    if plan.delta_pm.shape != (len(idx),):
        raise ModalError("plan size does not match the independent set")
    Pm = model.Pm.copy()
    Pm[idx] += plan.delta_pm
    return replace(model, Pm=Pm)


def redispatch_outcome(model: CoiModel, eq: Equilibrium,
                       plan: RedispatchPlan, steps: int = 20):
    """Critical eigenvalue after applying the plan (continuation solve).

    Newton from the near-fold point jumps branches for 1 p.u. moves, so
    the equilibrium is tracked by stepping Pm.  Returns (model', eq',
    lambda_c').
    """
    from .linear import model_state_space

    model2 = apply_redispatch(model, plan)
    eq2 = continuation_equilibrium(model, model2, eq, steps=steps)
    A, _ = model_state_space(model2, eq2.delta)
    md = eigen_decompose(A)
    return model2, eq2, critical_eigenvalue(md)
