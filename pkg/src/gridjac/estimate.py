"""Covariance-based estimation of the Jacobian, state matrix and damping.

The core relations: with sampled angle/speed covariance blocks of the
COI states, K* = M C_ww C_dd^-1 recovers the dynamic state Jacobian and
D* = (1/2) Sigma^2 M^-1 C_ww^-1 the per-machine damping, using generator
inertia (and noise intensity) as the only model knowledge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError
from .linear import state_matrix
from .swing import Trajectory

COND_LIMIT = 1e12


@dataclass(frozen=True)
class CovarianceBlocks:
    """Windowed covariance of (delta, omega) with the mean removed."""

    c_dd: np.ndarray
    c_dw: np.ndarray
    c_ww: np.ndarray
    window: tuple = (0.0, 0.0)
    n_samples: int = 0

    def __post_init__(self):
        for name in ("c_dd", "c_dw", "c_ww"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        m = self.c_dd.shape[0]
        if self.c_dd.shape != (m, m) or self.c_dw.shape != (m, m) \
                or self.c_ww.shape != (m, m):
            raise EstimationError("covariance blocks must be square and equal size")

    @property
    def m(self) -> int:
        return self.c_dd.shape[0]

    @property
    def full(self) -> np.ndarray:
        return np.block([[self.c_dd, self.c_dw], [self.c_dw.T, self.c_ww]])


def sample_covariance(traj: Trajectory, t_start: float, t_end: float
                      ) -> CovarianceBlocks:
    """Per-block sample covariance over [t_start, t_end] (divisor N-1).

    The window sample mean is removed and the symmetric blocks are
    symmetrized, which strips O(1/N) asymmetry noise before inversion.
    """
    eps = 1e-9
    if t_start < traj.t0 - eps or t_end > traj.t_end + eps:
        raise EstimationError(
            f"window [{t_start}, {t_end}] outside trajectory "
            f"[{traj.t0}, {traj.t_end}]")
    X = traj.slice(t_start, t_end)
    if X.shape[0] < 2:
        raise EstimationError("window too short: need at least 2 samples")
    m = traj.m
    Xc = X - X.mean(axis=0)
    C = Xc.T @ Xc / (X.shape[0] - 1)
    c_dd = 0.5 * (C[:m, :m] + C[:m, :m].T)
    c_ww = 0.5 * (C[m:, m:] + C[m:, m:].T)
    return CovarianceBlocks(c_dd=c_dd, c_dw=C[:m, m:], c_ww=c_ww,
                            window=(float(t_start), float(t_end)),
                            n_samples=int(X.shape[0]))


@dataclass(frozen=True)
class JacobianEstimate:
    K: np.ndarray
    cond_c_dd: float
    window: tuple = (0.0, 0.0)
    n_samples: int = 0


def estimate_jacobian(M: np.ndarray, cov: CovarianceBlocks,
                      ridge: float = 0.0) -> JacobianEstimate:
    """K* = M C_ww C_dd^-1 over the independent machines.

    An ill-conditioned C_dd (cond > 1e12, short windows) fails loudly by
    default; pass ``ridge`` > 0 to opt into Tikhonov regularization of
    the inversion (adds ridge * tr(C_dd)/m to its diagonal) instead.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (cov.m,):
        raise EstimationError("M must match the covariance block size")
    c_dd = cov.c_dd
    if ridge > 0.0:
        c_dd = c_dd + ridge * np.trace(c_dd) / cov.m * np.eye(cov.m)
    cond = float(np.linalg.cond(c_dd))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise EstimationError(
            f"C_dd condition number {cond:.3e} exceeds {COND_LIMIT:.1e}; "
            "use a longer estimation window")
    K = np.diag(M) @ cov.c_ww @ np.linalg.inv(c_dd)
    return JacobianEstimate(K=K, cond_c_dd=cond, window=cov.window,
                            n_samples=cov.n_samples)


def assemble_estimated_state_matrix(K_star: np.ndarray, M: np.ndarray,
                                    D: np.ndarray) -> np.ndarray:
    """State matrix built from an estimated Jacobian."""
    return state_matrix(K_star, M, D)


@dataclass(frozen=True)
class DampingEstimate:
    d: np.ndarray                # diagonal estimate per independent machine
    off_diagonal_ratio: float    # |offdiag|_F / |diag|_F of the raw matrix
    raw: np.ndarray


def estimate_damping(M: np.ndarray, sigma: np.ndarray,
                     c_ww: np.ndarray) -> DampingEstimate:
    """D* = (1/2) Sigma^2 M^-1 C_ww^-1, reported as a diagonal.

    The relation is derived for diagonal damping, so off-diagonal content
    of the raw product is returned as a quality metric, not an estimate.
    """
    M = np.asarray(M, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    c_ww = np.asarray(c_ww, dtype=float)
    m = len(M)
    if sigma.shape != (m,) or c_ww.shape != (m, m):
        raise EstimationError("inconsistent shapes for damping estimation")
    cond = np.linalg.cond(c_ww)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise EstimationError(f"C_ww is singular or near-singular "
                              f"(cond {cond:.3e})")
    raw = 0.5 * np.diag(sigma**2 / M) @ np.linalg.inv(c_ww)
    diag = np.diag(raw).copy()
    off = raw - np.diag(diag)
    denom = np.linalg.norm(diag)
    ratio = float(np.linalg.norm(off) / denom) if denom > 0 else np.inf
    return DampingEstimate(d=diag, off_diagonal_ratio=ratio, raw=raw)


def frobenius_relative_error(x_est: np.ndarray, x_ref: np.ndarray) -> float:
    """|X* - X|_F / |X|_F."""
    x_est = np.asarray(x_est, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    if x_est.shape != x_ref.shape:
        raise EstimationError("shape mismatch in Frobenius comparison")
    denom = np.linalg.norm(x_ref)
    if denom == 0:
        raise EstimationError("reference matrix has zero Frobenius norm")
    return float(np.linalg.norm(x_est - x_ref) / denom)


class StreamingCovariance:
    """Fixed-capacity sliding-window covariance of (delta, omega) samples.

    Push per-sample state vectors of length 2m; ``blocks()`` matches a
    batch recomputation over the current window contents to tight
    tolerance.  Sums are taken against the first accepted sample to avoid
    cancellation against large means.  Single writer; ``blocks()`` takes a
    consistent snapshot.
    """

    def __init__(self, capacity: int, dim: int):
        if capacity < 2:
            raise EstimationError("window capacity must be >= 2")
        if dim % 2:
            raise EstimationError("state dimension must be even (delta+omega)")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self._buf = np.zeros((capacity, dim))
        self._count = 0     # samples currently in the window
        self._start = 0     # ring index of the oldest sample
        self._shift = None
        self._s1 = np.zeros(dim)
        self._s2 = np.zeros((dim, dim))

    def __len__(self):
        return self._count

    def _drop_oldest(self):
        old = self._buf[self._start]
        self._s1 -= old
        self._s2 -= np.outer(old, old)
        self._start = (self._start + 1) % self.capacity
        self._count -= 1

    def push(self, sample) -> None:
        x = np.asarray(sample, dtype=float)
        if x.shape != (self.dim,):
            raise EstimationError(f"sample must have length {self.dim}")
        if self._shift is None:
            self._shift = x.copy()
        xs = x - self._shift
        if self._count == self.capacity:
            self._drop_oldest()
        self._buf[(self._start + self._count) % self.capacity] = xs
        self._s1 += xs
        self._s2 += np.outer(xs, xs)
        self._count += 1

    def evict(self, k: int = 1) -> None:
        """Drop the oldest k samples without pushing new ones."""
        k = int(k)
        if k > self._count:
            raise EstimationError("cannot evict more samples than stored")
        for _ in range(k):
            self._drop_oldest()

    def blocks(self, window: tuple = (0.0, 0.0)) -> CovarianceBlocks:
        N = len(self)
        if N < 2:
            raise EstimationError("insufficient samples in streaming window")
        mean = self._s1 / N
        C = (self._s2 - N * np.outer(mean, mean)) / (N - 1)
        m = self.dim // 2
        c_dd = 0.5 * (C[:m, :m] + C[:m, :m].T)
        c_ww = 0.5 * (C[m:, m:] + C[m:, m:].T)
        return CovarianceBlocks(c_dd=c_dd, c_dw=C[:m, m:], c_ww=c_ww,
                                window=window, n_samples=N)
