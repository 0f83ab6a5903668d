"""Least-squares Prony analysis of ringdown/ambient signals.

Fits a sum of damped complex exponentials through linear prediction
(overdetermined, solved by least squares), roots the characteristic
polynomial for the discrete poles and recovers residues on the
Vandermonde system.  Used to cross-check eigenvalues extracted from the
estimated state matrix against a single measured signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError
from .modal import ModalDecomposition


@dataclass(frozen=True)
class PronyMode:
    lam: complex        # continuous-time pole, 1/s
    amplitude: float    # |residue|
    phase: float        # arg(residue), rad
    energy: float       # sum_k |residue * z^k|^2 over the fit grid

    @property
    def freq_hz(self) -> float:
        return self.lam.imag / (2 * np.pi)

    @property
    def damping(self) -> float:
        return self.lam.real

    @property
    def residue(self) -> complex:
        return self.amplitude * np.exp(1j * self.phase)


@dataclass(frozen=True)
class PronyResult:
    modes: tuple            # PronyMode, energy-sorted, conjugates included
    order: int
    dt: float
    rms_relative_error: float
    n_samples: int
    dc: float = 0.0         # residual constant left after mean removal

    def representative_modes(self) -> list:
        """One member per conjugate pair (Im >= 0), energy order kept."""
        return [m for m in self.modes if m.lam.imag >= 0]


def prony_fit(signal, dt: float, order: int) -> PronyResult:
    """Fit ``order`` damped exponentials to a uniformly sampled signal.

    The signal mean is removed before fitting (ambient swings sit on a
    nonzero equilibrium), and the linear prediction carries an intercept
    so the constant left by windowed decays is absorbed by the ``dc``
    term rather than biasing the poles.  Requires len(signal) >=
    2*order + 1; an inconsistent rank-deficient prediction problem is
    rejected with advice to lower the order (a consistent one, i.e. a
    noise-free signal with fewer modes than the order, is fine).
    """
    s = np.asarray(signal, dtype=float).ravel()
    N = len(s)
    p = int(order)
    if p < 1:
        raise EstimationError("order must be >= 1")
    if N < 2 * p + 1:
        raise EstimationError(
            f"signal too short: need at least {2*p+1} samples for order {p}")
    if dt <= 0:
        raise EstimationError("dt must be > 0")
    s = s - s.mean()
    snorm = np.linalg.norm(s)
    if snorm == 0:
        raise EstimationError("constant signal: prediction matrix is "
                              "rank-deficient; lower the order")

    # affine linear prediction s[k] = sum_j a_j s[k-j] + b
    A = np.empty((N - p, p + 1))
    for j in range(p):
        A[:, j] = s[p - 1 - j:N - 1 - j]
    A[:, p] = 1.0
    rhs = s[p:]
    coef, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    if rank < p + 1:
        resid = np.linalg.norm(A @ coef - rhs)
        if resid > 1e-8 * max(np.linalg.norm(rhs), snorm):
            raise EstimationError(
                f"prediction matrix rank {rank} < {p + 1} with residual "
                f"{resid:.2e}; lower the order")
    a = coef[:p]

    z = np.roots(np.concatenate([[1.0], -a]))
    z = z[np.abs(z) > 1e-12]     # discard single-sample impulse poles
    lam = np.log(z.astype(complex)) / dt

    # residues on the Vandermonde system, intercept column included
    k = np.arange(N)
    V = np.hstack([z[None, :] ** k[:, None], np.ones((N, 1))])
    c, _, _, _ = np.linalg.lstsq(V, s.astype(complex), rcond=None)
    recon = (V @ c).real
    rms = float(np.linalg.norm(recon - s) / snorm)
    dc = float(c[-1].real)
    c = c[:-1]

    energy = np.sum(np.abs(V[:, :-1] * c[None, :]) ** 2, axis=0)
    modes = [PronyMode(lam=complex(lam[i]), amplitude=float(abs(c[i])),
                       phase=float(np.angle(c[i])), energy=float(energy[i]))
             for i in range(len(z))]
    modes.sort(key=lambda m: -m.energy)
    return PronyResult(modes=tuple(modes), order=p, dt=float(dt),
                       rms_relative_error=rms, n_samples=N, dc=dc)


def reconstruct(result: PronyResult, t) -> np.ndarray:
    """Sum of fitted exponentials plus the dc term (removed mean excluded).

    On the fit grid (t = k*dt) this reproduces the mean-removed signal to
    the reported RMS error.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=complex)
    for m in result.modes:
        out += m.residue * np.exp(m.lam * t)
    return out.real + result.dc


def rms_relative_error(result: PronyResult, signal) -> float:
    """Recompute the fit error of ``result`` against the raw signal."""
    s = np.asarray(signal, dtype=float).ravel()
    s = s - s.mean()
    t = np.arange(len(s)) * result.dt
    r = reconstruct(result, t)
    denom = np.linalg.norm(s)
    return float(np.linalg.norm(r - s) / denom) if denom > 0 else 0.0


@dataclass(frozen=True)
class ModePairing:
    prony_index: int
    modal_index: int
    prony_lam: complex
    modal_lam: complex
    df_hz: float
    dsigma: float


@dataclass(frozen=True)
class ModeMatches:
    pairs: tuple
    unmatched_prony: tuple
    unmatched_modal: tuple


def match_modes(result: PronyResult, md: ModalDecomposition,
                tol_f: float = 0.1, tol_sigma: float = 0.1) -> ModeMatches:
    """Greedy nearest-frequency pairing within the given tolerances.

    Both sets are collapsed to conjugate representatives (Im >= 0) first;
    Prony modes are taken in energy order so the dominant content claims
    its partner first.
    """
    prony_reps = [(i, m) for i, m in enumerate(result.modes) if m.lam.imag >= 0]
    modal_idx = [k for k in np.nonzero(md.representative)[0]]
    free = set(modal_idx)
    pairs = []
    for i, pm in prony_reps:
        best, best_df = None, None
        for k in free:
            lam = md.eigenvalues[k]
            df = abs(pm.lam.imag - lam.imag) / (2 * np.pi)
            if df <= tol_f and abs(pm.lam.real - lam.real) <= tol_sigma:
                if best is None or df < best_df:
                    best, best_df = k, df
        if best is not None:
            lam = md.eigenvalues[best]
            pairs.append(ModePairing(
                prony_index=i, modal_index=int(best), prony_lam=pm.lam,
                modal_lam=complex(lam), df_hz=float(best_df),
                dsigma=float(abs(pm.lam.real - lam.real))))
            free.remove(best)
    matched_p = {p.prony_index for p in pairs}
    return ModeMatches(
        pairs=tuple(pairs),
        unmatched_prony=tuple(i for i, _ in prony_reps if i not in matched_p),
        unmatched_modal=tuple(int(k) for k in modal_idx if k in free))
