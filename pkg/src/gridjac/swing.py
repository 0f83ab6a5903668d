"""Stochastic swing-equation integration in center-of-inertia coordinates.

The model keeps n-1 independent (angle, speed) pairs; the dependent
machine is recovered from the inertia-weighted zero-sum constraint.
Integration is Euler-Maruyama at a fixed step with white-noise forcing
on the speed equations; noise comes from a counter-based Philox stream
through a Box-Muller transform so runs are bit-reproducible per seed.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .errors import CaseError, ConvergenceError, ScenarioError
from .network import (ContingencyEvent, RawCase, ReducedNetwork,
                      apply_contingency, internal_angles, reduce_case)

DIVERGENCE_LIMIT = 10.0 * np.pi   # |delta| beyond any synchronous operation


# ------------------------------------------------------------------- model


@dataclass(frozen=True)
class CoiModel:
    """Classical multi-machine model in COI coordinates."""

    net: ReducedNetwork
    M: np.ndarray
    D: np.ndarray
    Pm: np.ndarray
    sigma: np.ndarray
    ref: int = -1                      # dependent machine (default: last)
    delta0: np.ndarray | None = None   # operating-point angles, COI frame
    labels: tuple = ()
    source_case: RawCase | None = None

    def __post_init__(self):
        n = self.net.n
        for name in ("M", "D", "Pm", "sigma"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (n,):
                raise CaseError(f"{name} must have length {n}")
            object.__setattr__(self, name, v)
        if np.any(self.M <= 0):
            raise CaseError("all M must be > 0")
        if np.any(self.D < 0) or np.any(self.sigma < 0):
            raise CaseError("D and sigma must be >= 0")
        ref = self.ref % n
        object.__setattr__(self, "ref", ref)
        if self.delta0 is not None:
            d0 = np.asarray(self.delta0, dtype=float)
            object.__setattr__(self, "delta0", d0 - self.M @ d0 / self.M_T)
        if not self.labels:
            object.__setattr__(self, "labels",
                               tuple(f"G{i+1}" for i in range(n)))

    @property
    def n(self) -> int:
        return self.net.n

    @property
    def M_T(self) -> float:
        return float(self.M.sum())

    @property
    def indep(self) -> np.ndarray:
        """Indices of the independent machines, in machine order."""
        return np.array([i for i in range(self.n) if i != self.ref])

    @classmethod
    def from_case(cls, case: RawCase, ref: int = -1) -> "CoiModel":
        net = reduce_case(case)
        M = np.array([g.M for g in case.generators])
        if case.reduced is not None:
            d0 = None
        else:
            d0 = internal_angles(case)
        return cls(net=net,
                   M=M,
                   D=np.array([g.D for g in case.generators]),
                   Pm=np.array([g.pm for g in case.generators]),
                   sigma=np.array([g.sigma for g in case.generators]),
                   ref=ref,
                   delta0=d0,
                   labels=tuple(g.id for g in case.generators),
                   source_case=case)

    def with_events(self, events) -> "CoiModel":
        """Model after contingency events; rebuilds G/B when needed.

        EMF magnitudes are kept from the current model (classical-model
        flux is not altered by a network change).
        """
        if isinstance(events, ContingencyEvent):
            events = [events]
        network_events = [e for e in events if e.touches_network]
        model = self
        if network_events:
            if self.source_case is None:
                raise CaseError("network contingency needs the full case; "
                                "this model was built from reduced matrices only")
            case2 = apply_contingency(self.source_case, events)
            net2 = ReducedNetwork(*_gb_from_case(case2), E=self.net.E.copy())
            model = replace(self, net=net2, source_case=case2,
                            D=np.array([g.D for g in case2.generators]),
                            Pm=np.array([g.pm for g in case2.generators]))
        else:
            case2 = (apply_contingency(self.source_case, events)
                     if self.source_case is not None else None)
            D, Pm = self.D.copy(), self.Pm.copy()
            by_id = {lab: i for i, lab in enumerate(self.labels)}
            for ev in events:
                if ev.target not in by_id:
                    raise CaseError(f"unknown generator {ev.target!r}")
                i = by_id[ev.target]
                if ev.kind == "scale_damping":
                    D[i] *= float(ev.value)
                elif ev.kind == "set_pm":
                    Pm[i] = float(ev.value)
            model = replace(self, D=D, Pm=Pm, source_case=case2)
        return model


def _gb_from_case(case: RawCase):
    red = reduce_case(replace_reduced_none(case))
    return red.G, red.B


def replace_reduced_none(case: RawCase) -> RawCase:
    """Force reduction from topology even if a reduced section exists."""
    c = copy.copy(case)
    object.__setattr__(c, "reduced", None)
    return c


# --------------------------------------------------------------- dynamics


def electrical_power(delta: np.ndarray, net: ReducedNetwork) -> np.ndarray:
    """Pe_i = sum_j Ei Ej (Gij cos(di-dj) + Bij sin(di-dj))."""
    delta = np.asarray(delta, dtype=float)
    dd = delta[:, None] - delta[None, :]
    EE = np.outer(net.E, net.E)
    return np.sum(EE * (net.G * np.cos(dd) + net.B * np.sin(dd)), axis=1)


def recover_dependent(delta_ind, omega_ind, M, ref: int = -1):
    """Dependent machine state from the COI zero-sum constraints."""
    M = np.asarray(M, dtype=float)
    n = len(M)
    ref = ref % n
    idx = [i for i in range(n) if i != ref]
    d = -float(M[idx] @ np.asarray(delta_ind)) / M[ref]
    w = -float(M[idx] @ np.asarray(omega_ind)) / M[ref]
    return d, w


def full_angles(delta_ind, model: CoiModel) -> np.ndarray:
    """All n machine angles from the independent ones."""
    d = np.empty(model.n)
    d[model.indep] = delta_ind
    d[model.ref] = -(model.M[model.indep] @ np.asarray(delta_ind)) / model.M[model.ref]
    return d


def coi_rhs(state: np.ndarray, model: CoiModel) -> np.ndarray:
    """Time derivative of (delta_ind, omega_ind); noise excluded."""
    m = model.n - 1
    state = np.asarray(state, dtype=float)
    if state.shape != (2 * m,):
        raise CaseError(f"state must have length {2*m}")
    d_ind, w_ind = state[:m], state[m:]
    d = full_angles(d_ind, model)
    pe = electrical_power(d, model.net)
    pcoi = float(np.sum(model.Pm - pe))
    idx = model.indep
    acc = (model.Pm[idx] - pe[idx] - model.M[idx] / model.M_T * pcoi
           - model.D[idx] * w_ind) / model.M[idx]
    return np.concatenate([w_ind, acc])


# ------------------------------------------------------------- equilibrium


@dataclass(frozen=True)
class Equilibrium:
    delta: np.ndarray      # all n machines, COI frame
    residual: float
    stable: bool           # state matrix Hurwitz at this point
    iterations: int

    def state_for(self, model: CoiModel) -> np.ndarray:
        m = model.n - 1
        return np.concatenate([self.delta[model.indep], np.zeros(m)])


def find_equilibrium(model: CoiModel, guess=None, tol: float = 1e-10,
                     max_iter: int = 60) -> Equilibrium:
    """Newton solve of the COI acceleration residual.

    The Jacobian is the analytic COI Jacobian (exact), so convergence is
    quadratic near the solution.  Raises ConvergenceError when the
    iteration stalls; a converged non-Hurwitz point is returned with
    ``stable=False``.
    """
    from .linear import jacobian_coi, state_matrix

    idx = model.indep
    if guess is None:
        if model.delta0 is None:
            guess = np.zeros(model.n)
        else:
            guess = model.delta0
    guess = np.asarray(guess, dtype=float)
    d_ind = guess[idx] if guess.shape == (model.n,) else guess.copy()

    def residual(di):
        d = full_angles(di, model)
        pe = electrical_power(d, model.net)
        pcoi = float(np.sum(model.Pm - pe))
        return model.Pm[idx] - pe[idx] - model.M[idx] / model.M_T * pcoi

    r = residual(d_ind)
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(r) < tol:
            break
        K = jacobian_coi(full_angles(d_ind, model), model)
        try:
            step = np.linalg.solve(K, r)   # d(residual)/d(delta) = -K
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian during Newton iteration",
                                   residual=float(np.linalg.norm(r)))
        d_new = d_ind + step
        r_new = residual(d_new)
        # crude backtracking keeps the iteration inside the basin
        lam = 1.0
        while np.linalg.norm(r_new) > np.linalg.norm(r) and lam > 1e-4:
            lam /= 2.0
            d_new = d_ind + lam * step
            r_new = residual(d_new)
        d_ind, r = d_new, r_new
    rn = float(np.linalg.norm(r))
    if rn >= tol:
        raise ConvergenceError(
            f"equilibrium Newton did not converge (residual {rn:.3e})",
            residual=rn)
    delta = full_angles(d_ind, model)
    K = jacobian_coi(delta, model)
    A = state_matrix(K, model.M[idx], model.D[idx])
    stable = bool(np.max(np.linalg.eigvals(A).real) < 0)
    return Equilibrium(delta=delta, residual=rn, stable=stable, iterations=it)


def continuation_equilibrium(model_from: CoiModel, model_to: CoiModel,
                             start: Equilibrium, steps: int = 20) -> Equilibrium:
    """Track the stable equilibrium branch across a large parameter move.

    Interpolates Pm between the two models and re-solves at each step so
    Newton cannot jump to the saddle branch near a fold.
    """
    eq = start
    for k in range(1, steps + 1):
        a = k / steps
        mk = replace(model_to, Pm=(1 - a) * model_from.Pm + a * model_to.Pm)
        eq = find_equilibrium(mk, guess=eq.delta)
    return eq


# ------------------------------------------------------------- trajectories


@dataclass
class Trajectory:
    """Uniformly sampled COI states of the independent machines."""

    t0: float
    dt_s: float                 # sample period (s)
    data: np.ndarray            # (N, 2(n-1)): deltas then speeds
    machine_labels: tuple       # independent machine labels, in column order
    status: str = "ok"          # "ok" | "diverged"
    diverged_at: float | None = None

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1] // 2

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt_s * np.arange(self.n_samples)

    @property
    def t_end(self) -> float:
        return float(self.t0 + self.dt_s * (self.n_samples - 1))

    def column(self, name: str) -> np.ndarray:
        names = self.column_names()
        if name not in names:
            raise KeyError(f"unknown column {name!r}; have {names}")
        return self.data[:, names.index(name)]

    def column_names(self) -> list:
        nums = [lab.lstrip("G") for lab in self.machine_labels]
        return [f"dtilde_{k}" for k in nums] + [f"wtilde_{k}" for k in nums]

    def slice(self, t_start: float, t_end: float) -> np.ndarray:
        eps = 1e-9 * max(1.0, abs(t_end))
        t = self.t
        mask = (t >= t_start - eps) & (t <= t_end + eps)
        return self.data[mask]

    # -------------------------------------------------------------- io

    def to_csv(self, path_or_buf):
        hdr = "t," + ",".join(self.column_names())
        t = self.t
        if hasattr(path_or_buf, "write"):
            f = path_or_buf
            close = False
        else:
            f = open(path_or_buf, "w")
            close = True
        try:
            f.write(hdr + "\n")
            for i in range(self.n_samples):
                row = [repr(float(t[i]))] + [repr(float(v)) for v in self.data[i]]
                f.write(",".join(row) + "\n")
        finally:
            if close:
                f.close()

    @classmethod
    def from_csv(cls, path_or_buf) -> "Trajectory":
        if hasattr(path_or_buf, "read"):
            text = path_or_buf.read()
        else:
            with open(path_or_buf) as f:
                text = f.read()
        lines = [ln for ln in text.strip().splitlines() if ln]
        header = lines[0].split(",")
        if header[0] != "t":
            raise CaseError("trajectory CSV must start with a 't' column")
        cols = header[1:]
        m = len(cols) // 2
        labels = tuple("G" + c.split("_", 1)[1] for c in cols[:m])
        arr = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        t = arr[:, 0]
        if len(t) > 1:
            steps = np.diff(t)
            if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, abs(t[-1])):
                raise CaseError("trajectory CSV is not uniformly sampled")
            dt = float(steps[0])
        else:
            dt = 0.0
        return cls(t0=float(t[0]), dt_s=dt, data=arr[:, 1:],
                   machine_labels=labels)


@dataclass(frozen=True)
class ContingencySchedule:
    events: tuple = ()   # (time_s, ContingencyEvent) pairs, strictly increasing

    def __post_init__(self):
        evs = tuple(self.events)
        times = [t for t, _ in evs]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ScenarioError("schedule times must be strictly increasing")
        object.__setattr__(self, "events", evs)

    def __len__(self):
        return len(self.events)

    @property
    def times(self):
        return [t for t, _ in self.events]


@dataclass
class SimulationResult:
    trajectory: Trajectory
    models: list          # [(t_active_from, CoiModel)] including the initial model
    seed: int

    @property
    def final_model(self) -> CoiModel:
        return self.models[-1][1]


# --------------------------------------------------------------- EM kernel


@njit(cache=True)
def _em_kernel(delta, omega, E, G, B, M, D, Pm, MT, Mref, indep, ref,
               noise_scale, noise, dt, stride, out, rec0, step0, nrec,
               div_limit):
    n = E.shape[0]
    m = n - 1
    nsteps = noise.shape[0]
    sq = np.sqrt(dt)
    rec = rec0
    d = np.empty(n)
    pe = np.empty(n)
    diverged_step = -1
    for k in range(nsteps):
        for ii in range(m):
            d[indep[ii]] = delta[ii]
        acc = 0.0
        for ii in range(m):
            acc += M[indep[ii]] * delta[ii]
        d[ref] = -acc / Mref
        pcoi = 0.0
        for i in range(n):
            s = 0.0
            for j in range(n):
                ang = d[i] - d[j]
                s += E[i] * E[j] * (G[i, j] * np.cos(ang) + B[i, j] * np.sin(ang))
            pe[i] = s
            pcoi += Pm[i] - s
        for ii in range(m):
            i = indep[ii]
            a = (Pm[i] - pe[i] - M[i] / MT * pcoi - D[i] * omega[ii]) / M[i]
            omega[ii] += dt * a + sq * noise_scale[ii] * noise[k, ii]
        bad = False
        for ii in range(m):
            delta[ii] += dt * omega[ii]
            if np.abs(delta[ii]) > div_limit:
                bad = True
        gstep = step0 + k + 1
        if gstep % stride == 0 and rec < nrec:
            for ii in range(m):
                out[rec, ii] = delta[ii]
                out[rec, m + ii] = omega[ii]
            rec += 1
        if bad:
            diverged_step = k
            break
    return rec, diverged_step


def _boxmuller_normals(seed: int, shape) -> np.ndarray:
    """Standard normals from a Philox counter stream via Box-Muller."""
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    count = int(np.prod(shape))
    u = rng.random((count, 2))
    u1 = np.maximum(u[:, 0], 1e-300)   # avoid log(0)
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u[:, 1])
    return z.reshape(shape)


def simulate(model: CoiModel, schedule: ContingencySchedule | None = None,
             x0: np.ndarray | None = None, dt: float = 1e-3, t_end: float = 10.0,
             record_every: int = 10, seed: int = 0, t0: float = 0.0
             ) -> SimulationResult:
    """Euler-Maruyama integration of the nonlinear COI model.

    Contingency events take effect at the first step boundary at or after
    their scheduled time; the reduced network is rebuilt there.  Output is
    decimated by ``record_every``.  Fixed (model, schedule, x0, dt, t_end,
    seed) give a bit-identical trajectory.
    """
    if dt <= 0:
        raise ScenarioError("dt must be > 0")
    schedule = schedule or ContingencySchedule()
    for te in schedule.times:
        if te < t0 or te > t0 + t_end:
            raise ScenarioError(f"event time {te} outside [{t0}, {t0 + t_end}]")
    m = model.n - 1
    if x0 is None:
        eq = find_equilibrium(model)
        x0 = eq.state_for(model)
    x0 = np.asarray(x0, dtype=float)
    nsteps = int(round(t_end / dt))
    noise = _boxmuller_normals(seed, (nsteps, m))

    # segment boundaries at event steps
    bounds = []
    for te, ev in schedule.events:
        k = int(np.ceil((te - t0) / dt - 1e-9))
        bounds.append((min(max(k, 0), nsteps), ev))

    nrec = nsteps // record_every + 1
    out = np.zeros((nrec, 2 * m))
    out[0] = x0
    delta = x0[:m].copy()
    omega = x0[m:].copy()
    models = [(t0, model)]
    cur = model
    rec, step0 = 1, 0
    status, div_at = "ok", None

    segments = bounds + [(nsteps, None)]
    for k_end, ev in segments:
        if step0 < k_end and status == "ok":
            idx = cur.indep
            rec, dstep = _em_kernel(
                delta, omega, cur.net.E, cur.net.G, cur.net.B, cur.M, cur.D,
                cur.Pm, cur.M_T, cur.M[cur.ref], idx, cur.ref,
                np.ascontiguousarray(cur.sigma[idx] / cur.M[idx]),
                noise[step0:k_end], dt, record_every, out, rec, step0, nrec,
                DIVERGENCE_LIMIT)
            if dstep >= 0:
                status = "diverged"
                div_at = t0 + (step0 + dstep + 1) * dt
            step0 = k_end if dstep < 0 else step0 + dstep + 1
        if ev is not None and status == "ok":
            cur = cur.with_events(ev)
            models.append((t0 + k_end * dt, cur))

    traj = Trajectory(t0=t0, dt_s=dt * record_every, data=out[:rec],
                      machine_labels=tuple(model.labels[i] for i in model.indep),
                      status=status, diverged_at=div_at)
    return SimulationResult(trajectory=traj, models=models, seed=seed)


# ------------------------------------------------------------- third order


@dataclass(frozen=True)
class ThirdOrderModel:
    """Flux-decay generator model with a first-order AVR.

    Extends the classical model with one transient EMF state per machine
    (time constant td0, armature reaction through xd - xd') and a field
    voltage driven by terminal-voltage error.
    """

    base: CoiModel
    xd: np.ndarray
    xd_prime: np.ndarray
    td0: np.ndarray
    avr_gain: np.ndarray
    avr_t: np.ndarray
    vref: np.ndarray       # set so the classical equilibrium is preserved
    eq_state: np.ndarray   # (delta_ind, omega_ind=0, eq, efd) at equilibrium

    @property
    def n(self) -> int:
        return self.base.n

    @classmethod
    def from_case(cls, case: RawCase, ref: int = -1) -> "ThirdOrderModel":
        base = CoiModel.from_case(case, ref=ref)
        for g in case.generators:
            if g.xd is None or g.td0 is None or g.avr_gain is None or g.avr_t is None:
                raise CaseError(f"generator {g.id}: xd/td0/avr_gain/avr_t "
                                "required for the third-order model")
        xd = np.array([g.xd for g in case.generators])
        xdp = np.array([g.xd_prime for g in case.generators])
        td0 = np.array([g.td0 for g in case.generators])
        ka = np.array([g.avr_gain for g in case.generators])
        ta = np.array([g.avr_t for g in case.generators])
        eq = find_equilibrium(base)
        eq_q, efd, vref = _flux_equilibrium(base, eq.delta, xd, xdp, ka)
        m = base.n - 1
        state = np.concatenate([eq.delta[base.indep], np.zeros(m), eq_q, efd])
        return cls(base=base, xd=xd, xd_prime=xdp, td0=td0, avr_gain=ka,
                   avr_t=ta, vref=vref, eq_state=state)


def _machine_currents(delta, eq, net: ReducedNetwork):
    w = eq * np.exp(1j * delta)
    return net.Y @ w


def _flux_equilibrium(base: CoiModel, delta, xd, xdp, ka):
    """EMF/field/reference values that hold the classical equilibrium."""
    eq_q = base.net.E.copy()
    cur = _machine_currents(delta, eq_q, base.net)
    rot = np.exp(-1j * delta)
    i_d = -np.imag(cur * rot)
    efd = eq_q + (xd - xdp) * i_d
    vt = np.abs(eq_q * np.exp(1j * delta) - 1j * xdp * cur)
    vref = vt + efd / ka
    return eq_q, efd, vref


def third_order_rhs(state: np.ndarray, model3: ThirdOrderModel) -> np.ndarray:
    """Derivatives of (delta_ind, omega_ind, eq', efd)."""
    base = model3.base
    n, m = base.n, base.n - 1
    state = np.asarray(state, dtype=float)
    d_ind, w_ind = state[:m], state[m:2 * m]
    eq = state[2 * m:2 * m + n]
    efd = state[2 * m + n:]
    d = full_angles(d_ind, base)
    net = base.net
    w = eq * np.exp(1j * d)
    cur = net.Y @ w
    pe = np.real(w * np.conj(cur))
    rot = np.exp(-1j * d)
    i_d = -np.imag(cur * rot)
    vt = np.abs(w - 1j * model3.xd_prime * cur)
    pcoi = float(np.sum(base.Pm - pe))
    idx = base.indep
    acc = (base.Pm[idx] - pe[idx] - base.M[idx] / base.M_T * pcoi
           - base.D[idx] * w_ind) / base.M[idx]
    deq = (efd - eq - (model3.xd - model3.xd_prime) * i_d) / model3.td0
    defd = (model3.avr_gain * (model3.vref - vt) - efd) / model3.avr_t
    return np.concatenate([w_ind, acc, deq, defd])


@njit(cache=True)
def _em3_kernel(delta, omega, eq, efd, Yr, Yi, xd, xdp, td0, ka, ta, vref,
                M, D, Pm, MT, Mref, indep, ref, noise_scale, noise, dt,
                stride, out, rec0, nrec, div_limit):
    n = xd.shape[0]
    m = n - 1
    nsteps = noise.shape[0]
    sq = np.sqrt(dt)
    rec = rec0
    d = np.empty(n)
    diverged_step = -1
    for k in range(nsteps):
        for ii in range(m):
            d[indep[ii]] = delta[ii]
        acc = 0.0
        for ii in range(m):
            acc += M[indep[ii]] * delta[ii]
        d[ref] = -acc / Mref
        # complex phasor algebra, unrolled on real/imag parts
        pcoi = 0.0
        pe = np.empty(n)
        id_ax = np.empty(n)
        vt = np.empty(n)
        wr = np.empty(n)
        wi = np.empty(n)
        for j in range(n):
            wr[j] = eq[j] * np.cos(d[j])
            wi[j] = eq[j] * np.sin(d[j])
        for i in range(n):
            cr = 0.0
            ci = 0.0
            for j in range(n):
                cr += Yr[i, j] * wr[j] - Yi[i, j] * wi[j]
                ci += Yr[i, j] * wi[j] + Yi[i, j] * wr[j]
            pe[i] = wr[i] * cr + wi[i] * ci
            pcoi += Pm[i] - pe[i]
            # current rotated into the machine frame: c * exp(-j d)
            rot_r = cr * np.cos(d[i]) + ci * np.sin(d[i])
            rot_i = ci * np.cos(d[i]) - cr * np.sin(d[i])
            id_ax[i] = -rot_i
            # terminal voltage w - j xdp c
            tr = wr[i] + xdp[i] * ci
            ti = wi[i] - xdp[i] * cr
            vt[i] = np.sqrt(tr * tr + ti * ti)
        for ii in range(m):
            i = indep[ii]
            a = (Pm[i] - pe[i] - M[i] / MT * pcoi - D[i] * omega[ii]) / M[i]
            omega[ii] += dt * a + sq * noise_scale[ii] * noise[k, ii]
        bad = False
        for ii in range(m):
            delta[ii] += dt * omega[ii]
            if np.abs(delta[ii]) > div_limit:
                bad = True
        for i in range(n):
            eq[i] += dt * (efd[i] - eq[i] - (xd[i] - xdp[i]) * id_ax[i]) / td0[i]
            efd[i] += dt * (ka[i] * (vref[i] - vt[i]) - efd[i]) / ta[i]
        if (k + 1) % stride == 0 and rec < nrec:
            for ii in range(m):
                out[rec, ii] = delta[ii]
                out[rec, m + ii] = omega[ii]
            rec += 1
        if bad:
            diverged_step = k
            break
    return rec, diverged_step


def simulate_third_order(model3: ThirdOrderModel, x0: np.ndarray | None = None,
                         dt: float = 1e-3, t_end: float = 10.0,
                         record_every: int = 10, seed: int = 0,
                         t0: float = 0.0) -> SimulationResult:
    """EM integration of the flux-decay model; records (delta, omega) only."""
    base = model3.base
    m = base.n - 1
    n = base.n
    if x0 is None:
        x0 = model3.eq_state
    x0 = np.asarray(x0, dtype=float)
    nsteps = int(round(t_end / dt))
    noise = _boxmuller_normals(seed, (nsteps, m))
    nrec = nsteps // record_every + 1
    out = np.zeros((nrec, 2 * m))
    out[0] = x0[:2 * m]
    delta = x0[:m].copy()
    omega = x0[m:2 * m].copy()
    eq = x0[2 * m:2 * m + n].copy()
    efd = x0[2 * m + n:].copy()
    idx = base.indep
    rec, dstep = _em3_kernel(
        delta, omega, eq, efd, np.ascontiguousarray(base.net.G),
        np.ascontiguousarray(base.net.B), model3.xd, model3.xd_prime,
        model3.td0, model3.avr_gain, model3.avr_t, model3.vref,
        base.M, base.D, base.Pm, base.M_T, base.M[base.ref], idx, base.ref,
        np.ascontiguousarray(base.sigma[idx] / base.M[idx]), noise, dt,
        record_every, out, 1, nrec, DIVERGENCE_LIMIT)
    status = "ok" if dstep < 0 else "diverged"
    div_at = None if dstep < 0 else t0 + (dstep + 1) * dt
    traj = Trajectory(t0=t0, dt_s=dt * record_every, data=out[:rec],
                      machine_labels=tuple(base.labels[i] for i in idx),
                      status=status, diverged_at=div_at)
    return SimulationResult(trajectory=traj, models=[(t0, base)], seed=seed)
