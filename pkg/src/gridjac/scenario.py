"""Scenario runner: wires cases, simulation, estimation and analyses.

A scenario file describes one experiment (case, noise, schedule,
estimation windows, requested analyses); running it produces a bundle of
delimited outputs, figures and a plain-text report with pass/fail lines
against the registered acceptance bands.  The shipped ``repro-*``
scenarios reproduce the package's reference experiments end to end.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import ConvergenceError, ScenarioError, StabilityError
from .estimate import (assemble_estimated_state_matrix, estimate_damping,
                       estimate_jacobian, frobenius_relative_error,
                       sample_covariance)
from .linear import jacobian_coi, model_state_space
from .modal import (critical_eigenvalue, eigen_decompose, mode_table,
                    normal_vector, participation_factors, redispatch_outcome,
                    redispatch_plan, unstable_machine_ranking)
from .network import ContingencyEvent, RawCase
from .prony import match_modes, prony_fit, reconstruct
from .swing import (CoiModel, ContingencySchedule, ThirdOrderModel,
                    find_equilibrium, simulate, simulate_third_order)

REPRO_NAMES = ("9bus", "39bus-oscillation", "39bus-stability",
               "39bus-damping", "appendix-3rd-order")

_SCENARIO_FILES = {
    "9bus": "repro_9bus.json",
    "39bus-oscillation": "repro_39bus_oscillation.json",
    "39bus-stability": "repro_39bus_stability.json",
    "39bus-damping": "repro_39bus_damping.json",
    "appendix-3rd-order": "repro_appendix_3rd_order.json",
}


def data_path(name: str):
    """Path of a packaged data file."""
    return resources.files("gridjac").joinpath("data", name)


def packaged_scenario_path(name: str):
    if name not in _SCENARIO_FILES:
        raise ScenarioError(f"unknown repro name {name!r}; "
                            f"valid names: {', '.join(REPRO_NAMES)}")
    return resources.files("gridjac").joinpath("data", "scenarios",
                                               _SCENARIO_FILES[name])


@dataclass(frozen=True)
class PronySpec:
    signal: str
    window: tuple
    order: int = 19
    preprocess: str = "acf"     # "acf" (ambient data) or "none" (ringdown)
    acf_lags: float = 4.0       # seconds of autocorrelation handed to the fit
    decimate: int = 1


@dataclass(frozen=True)
class RedispatchSpec:
    step: float = 1.0
    slack: int | None = None    # 1-based machine number; None = argmin |n|


@dataclass(frozen=True)
class AggravateSpec:
    gen: str
    dx: float
    t_end: float


@dataclass(frozen=True)
class Scenario:
    name: str
    case_path: str
    dt: float = 1e-3
    t_end: float = 10.0
    record_every: int = 10
    seed: int = 0
    model_kind: str = "classical"      # or "third_order"
    sigma: object = None               # scalar/list override, None = case values
    events: tuple = ()                 # (time, ContingencyEvent)
    windows: tuple = ()
    analyses: dict = field(default_factory=dict)
    allow_window_events: bool = False

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "Scenario":
        events = tuple((float(e["t"]), ContingencyEvent.from_dict(e))
                       for e in d.get("events", []))
        analyses = {}
        a = d.get("analyses", {})
        if a.get("estimate"):
            analyses["estimate"] = True
        if a.get("modal"):
            analyses["modal"] = True
        if a.get("damping"):
            analyses["damping"] = True
        if a.get("prony"):
            p = a["prony"]
            analyses["prony"] = PronySpec(
                signal=p["signal"], window=tuple(p["window"]),
                order=int(p.get("order", 19)),
                preprocess=p.get("preprocess", "acf"),
                acf_lags=float(p.get("acf_lags", 4.0)),
                decimate=int(p.get("decimate", 1)))
        if a.get("redispatch"):
            r = a["redispatch"]
            analyses["redispatch"] = RedispatchSpec(
                step=float(r.get("step", 1.0)),
                slack=(int(r["slack"]) if r.get("slack") is not None else None))
        if a.get("aggravate"):
            g = a["aggravate"]
            analyses["aggravate"] = AggravateSpec(
                gen=g["gen"], dx=float(g["dx"]), t_end=float(g["t_end"]))
        case_path = d["case"]
        if not os.path.isabs(case_path) and not os.path.exists(
                os.path.join(base_dir, case_path)):
            packaged = data_path(case_path)
            if packaged.is_file():
                case_path = str(packaged)
            else:
                case_path = os.path.join(base_dir, case_path)
        elif not os.path.isabs(case_path):
            case_path = os.path.join(base_dir, case_path)
        return cls(
            name=d.get("name", "scenario"),
            case_path=case_path,
            dt=float(d.get("dt", 1e-3)),
            t_end=float(d.get("t_end", 10.0)),
            record_every=int(d.get("record_every", 10)),
            seed=int(d.get("seed", 0)),
            model_kind=d.get("model", "classical"),
            sigma=d.get("sigma"),
            events=events,
            windows=tuple(tuple(w) for w in d.get("windows", [])),
            analyses=analyses,
            allow_window_events=bool(d.get("allow_window_events", False)))

    @classmethod
    def from_json(cls, path) -> "Scenario":
        with open(path) as f:
            d = json.load(f)
        return cls.from_dict(d, base_dir=os.path.dirname(str(path)) or ".")


@dataclass
class Check:
    name: str
    passed: bool
    value: float | str
    band: str


@dataclass
class ScenarioResult:
    scenario: Scenario
    out_dir: str
    checks: list
    values: dict
    files: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _load_model(scn: Scenario):
    case = RawCase.from_json(scn.case_path)
    if scn.sigma is not None:
        sig = scn.sigma
        gens = []
        for k, g in enumerate(case.generators):
            s = float(sig) if np.isscalar(sig) else float(sig[k])
            gens.append(replace(g, sigma=s))
        case = replace(case, generators=tuple(gens))
    if scn.model_kind == "third_order":
        return case, ThirdOrderModel.from_case(case)
    if scn.model_kind != "classical":
        raise ScenarioError(f"unknown model kind {scn.model_kind!r}")
    return case, CoiModel.from_case(case)


def _check_windows(scn: Scenario):
    if scn.allow_window_events:
        return
    for (a, b) in scn.windows:
        for te, ev in scn.events:
            if a < te < b:
                raise ScenarioError(
                    f"window [{a}, {b}] straddles the t={te} event "
                    f"({ev.kind} {ev.target}); split the window or set "
                    "allow_window_events")


def _fmt_matrix(K) -> str:
    rows = ["[" + ", ".join(f"{v: .4f}" for v in row) + "]" for row in np.asarray(K)]
    return "[" + "; ".join(rows) + "]"


def _active_model(models, t) -> CoiModel:
    cur = models[0][1]
    for t0, mdl in models:
        if t0 <= t + 1e-9:
            cur = mdl
    return cur


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(f"not JSON serializable: {type(o)}")


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True, default=_json_default)
        f.write("\n")


def run_scenario(scn: Scenario, out_dir: str, seed: int | None = None,
                 make_figures: bool = True) -> ScenarioResult:
    """Execute a scenario and write the output bundle.

    Deterministic for a fixed seed.  Raises ScenarioError for definition
    conflicts; numerical failures from the stages propagate as the
    corresponding package exceptions.
    """
    if seed is not None:
        scn = replace(scn, seed=int(seed))
    _check_windows(scn)
    os.makedirs(out_dir, exist_ok=True)
    files = []
    report = []
    values = {}
    checks = []

    case, model = _load_model(scn)
    base = model.base if scn.model_kind == "third_order" else model
    idx = base.indep
    labels_ind = [base.labels[i] for i in idx]

    schedule = ContingencySchedule(scn.events)
    if scn.model_kind == "third_order":
        if len(schedule):
            raise ScenarioError("third-order scenarios do not support events")
        sim = simulate_third_order(model, dt=scn.dt, t_end=scn.t_end,
                                   record_every=scn.record_every, seed=scn.seed)
    else:
        sim = simulate(model, schedule, dt=scn.dt, t_end=scn.t_end,
                       record_every=scn.record_every, seed=scn.seed)
    traj = sim.trajectory
    values["status"] = traj.status

    report.append(f"gridjac scenario report: {scn.name}")
    report.append(f"case: {os.path.basename(scn.case_path)}  "
                  f"model: {scn.model_kind}  seed: {scn.seed}")
    report.append(f"simulate: {traj.status}  (t_end={scn.t_end} s, "
                  f"dt={scn.dt} s, samples={traj.n_samples})")
    for te, ev in scn.events:
        report.append(f"event: t={te}  {ev.kind} {ev.target} -> {ev.value}")

    traj_path = os.path.join(out_dir, "trajectory.csv")
    traj.to_csv(traj_path)
    files.append(traj_path)

    if make_figures:
        from . import plots
        figdir = os.path.join(out_dir, "figures")
        os.makedirs(figdir, exist_ok=True)
        cols = traj.column_names()
        shown = [cols[0], cols[traj.m]] if traj.m <= 3 else \
            [cols[3], cols[4], cols[traj.m + 3], cols[traj.m + 4]]
        fp = os.path.join(figdir, "trajectory.png")
        plots.trajectory_figure(traj, shown, fp,
                                event_times=[t for t, _ in scn.events],
                                title=scn.name)
        files.append(fp)

    # --------------------------------------------------- per-window estimates
    window_info = []
    eq_guess = None
    for (a, b) in scn.windows:
        wmodel = _active_model(sim.models, a)
        eq = find_equilibrium(wmodel, guess=eq_guess)
        eq_guess = eq.delta
        K_an = jacobian_coi(eq.delta, wmodel)
        if scn.model_kind == "third_order":
            # deterministic Jacobian of the flux-decay model at its
            # equilibrium (EMFs sit at their equilibrium values there)
            K_an = jacobian_coi(eq.delta, base)
        cov = sample_covariance(traj, a, b)
        est = estimate_jacobian(base.M[idx], cov)
        err = frobenius_relative_error(est.K, K_an)
        window_info.append({"window": [a, b], "model": wmodel, "eq": eq,
                            "K_analytic": K_an, "est": est, "error": err,
                            "cov": cov})
        report.append(f"window [{a}, {b}]: n={cov.n_samples}  "
                      f"cond(C_dd)={est.cond_c_dd:.3e}")
        report.append(f"  K*        = {_fmt_matrix(est.K)}")
        report.append(f"  K analytic = {_fmt_matrix(K_an)}")
        report.append(f"  frobenius error = {err:.4%}")
    values["windows"] = window_info

    if scn.analyses.get("estimate") and window_info:
        est_doc = {"case": os.path.basename(scn.case_path), "seed": scn.seed,
                   "machines": labels_ind, "windows": []}
        for w in window_info:
            est_doc["windows"].append({
                "window": w["window"], "n_samples": w["cov"].n_samples,
                "cond_c_dd": w["est"].cond_c_dd,
                "K_star": w["est"].K, "K_analytic": w["K_analytic"],
                "frobenius_error": w["error"],
                "c_dd": w["cov"].c_dd, "c_dw": w["cov"].c_dw,
                "c_ww": w["cov"].c_ww})
        if len(window_info) >= 2:
            stale = frobenius_relative_error(window_info[0]["K_analytic"],
                                             window_info[-1]["K_analytic"])
            hybrid_post = window_info[-1]["error"]
            est_doc["stale_error"] = stale
            values["stale_error"] = stale
            report.append(f"stale pre-event matrix vs post-event analytic: "
                          f"{stale:.4%} (hybrid: {hybrid_post:.4%})")
        p = os.path.join(out_dir, "estimates.json")
        _write_json(p, est_doc)
        files.append(p)

    # ----------------------------------------------------------- damping
    if scn.analyses.get("damping") and window_info:
        w = window_info[-1]
        de = estimate_damping(base.M[idx], base.sigma[idx], w["cov"].c_ww)
        d_true = w["model"].D[idx]
        rel = np.abs(de.d - d_true) / d_true
        values["damping"] = {"true": d_true, "est": de.d, "rel_err": rel,
                             "off_diagonal_ratio": de.off_diagonal_ratio}
        p = os.path.join(out_dir, "damping.csv")
        with open(p, "w") as f:
            f.write("machine,d_true,d_est,rel_err\n")
            for lab, dt_, de_, r_ in zip(labels_ind, d_true, de.d, rel):
                f.write(f"{lab},{dt_!r},{de_!r},{r_!r}\n")
        files.append(p)
        report.append("damping estimates (window "
                      f"{w['window']}): max rel err {rel.max():.4%}, "
                      f"off-diagonal ratio {de.off_diagonal_ratio:.3f}")

    # ------------------------------------------------------------- modal
    md_est = md_an = None
    if scn.analyses.get("modal") and window_info:
        w = window_info[-1]
        wmodel = w["model"]
        A_est = assemble_estimated_state_matrix(w["est"].K, base.M[idx],
                                                wmodel.D[idx])
        A_an, _ = model_state_space(wmodel, w["eq"].delta)
        md_est = eigen_decompose(A_est)
        md_an = eigen_decompose(A_an)
        values["lambda_c_est"] = critical_eigenvalue(md_est)
        values["lambda_c_analytic"] = critical_eigenvalue(md_an)
        report.append(f"critical eigenvalue: analytic "
                      f"{values['lambda_c_analytic']:.4f}, estimated "
                      f"{values['lambda_c_est']:.4f}")
        rows_est = mode_table(md_est)
        rows_an = mode_table(md_an)
        p = os.path.join(out_dir, "modes.csv")
        with open(p, "w") as f:
            f.write("source,re,im,freq_hz,damping\n")
            for src, rows in (("analytic", rows_an), ("estimated", rows_est)):
                for r in rows:
                    f.write(f"{src},{r.eigenvalue.real!r},{r.eigenvalue.imag!r},"
                            f"{r.freq_hz!r},{r.damping!r}\n")
        files.append(p)
        osc_e = [r for r in rows_est if r.freq_hz > 0.05]
        osc_a = [r for r in rows_an if r.freq_hz > 0.05]
        if osc_e and osc_a:
            values["least_damped_est"] = osc_e[0].eigenvalue
            values["least_damped_analytic"] = osc_a[0].eigenvalue
            report.append(f"least-damped oscillatory pair: analytic "
                          f"{osc_a[0].eigenvalue:.4f} ({osc_a[0].freq_hz:.3f} Hz), "
                          f"estimated {osc_e[0].eigenvalue:.4f} "
                          f"({osc_e[0].freq_hz:.3f} Hz)")
            pf = participation_factors(md_est)[:, osc_e[0].index]
            values["pf_least_damped"] = pf
            p = os.path.join(out_dir, "participation.csv")
            m = len(idx)
            with open(p, "w") as f:
                f.write("state,participation\n")
                for i, lab in enumerate(labels_ind):
                    f.write(f"dtilde_{lab.lstrip('G')},{pf[i]!r}\n")
                for i, lab in enumerate(labels_ind):
                    f.write(f"wtilde_{lab.lstrip('G')},{pf[m + i]!r}\n")
            files.append(p)
            kmax = int(np.argmax(pf))
            report.append(f"max participation {pf[kmax]:.3f} at state index "
                          f"{kmax} ({'delta' if kmax < m else 'omega'} of "
                          f"{labels_ind[kmax % m]})")
        if make_figures:
            from . import plots
            fp = os.path.join(figdir, "modes.png")
            plots.mode_map_figure(md_an.eigenvalues, md_est.eigenvalues, fp,
                                  critical=values["lambda_c_est"])
            files.append(fp)

    # ------------------------------------------------------------- prony
    if scn.analyses.get("prony"):
        ps: PronySpec = scn.analyses["prony"]
        sig = traj.column(ps.signal)
        t = traj.t
        a, b = ps.window
        mask = (t >= a - 1e-9) & (t <= b + 1e-9)
        s = sig[mask]
        dt_s = traj.dt_s
        if ps.preprocess == "acf":
            s0 = s - s.mean()
            nlags = int(round(ps.acf_lags / dt_s))
            fit_in = (np.correlate(s0, s0, mode="full")[len(s0) - 1:
                                                        len(s0) + nlags]
                      / len(s0))
            fit_in = fit_in[::ps.decimate]
        elif ps.preprocess == "none":
            fit_in = s[::ps.decimate]
        else:
            raise ScenarioError(f"unknown prony preprocess {ps.preprocess!r}")
        pr = prony_fit(fit_in, dt_s * ps.decimate, ps.order)
        values["prony"] = pr
        p = os.path.join(out_dir, "prony.csv")
        with open(p, "w") as f:
            f.write("lam_re,lam_im,freq_hz,damping,amplitude,phase,energy\n")
            for m_ in pr.modes:
                f.write(f"{m_.lam.real!r},{m_.lam.imag!r},{m_.freq_hz!r},"
                        f"{m_.damping!r},{m_.amplitude!r},{m_.phase!r},"
                        f"{m_.energy!r}\n")
        files.append(p)
        report.append(f"prony: signal {ps.signal} window [{a}, {b}] order "
                      f"{ps.order} preprocess {ps.preprocess}; rms fit error "
                      f"{pr.rms_relative_error:.3e}")
        for m_ in pr.representative_modes()[:3]:
            report.append(f"  mode {m_.lam:.4f}  f={m_.freq_hz:.3f} Hz  "
                          f"amp={m_.amplitude:.3e}")
        if md_est is not None:
            mm = match_modes(pr, md_est, tol_f=0.15, tol_sigma=0.15)
            values["prony_matches"] = mm
            lam_t = values.get("least_damped_est")
            if lam_t is not None:
                best = min(pr.representative_modes(),
                           key=lambda m_: abs(m_.lam - lam_t))
                values["prony_df"] = abs(best.lam.imag - lam_t.imag) / (2 * np.pi)
                values["prony_ds"] = abs(best.lam.real - lam_t.real)
                report.append(
                    f"prony vs estimated least-damped mode: df="
                    f"{values['prony_df']:.4f} Hz  dsigma="
                    f"{values['prony_ds']:.4f} 1/s  ({len(mm.pairs)} pairings "
                    "within tolerance)")
        if make_figures:
            from . import plots
            tw = t[mask]
            if ps.preprocess == "acf":
                tt = np.arange(len(fit_in)) * dt_s * ps.decimate
                plots.prony_figure(tt, fit_in, reconstruct(pr, tt),
                                   os.path.join(figdir, "prony.png"),
                                   title=f"{ps.signal} autocorrelation fit")
            else:
                tt = np.arange(len(fit_in)) * dt_s * ps.decimate
                plots.prony_figure(tt + tw[0], fit_in, reconstruct(pr, tt),
                                   os.path.join(figdir, "prony.png"),
                                   title=f"{ps.signal} fit")
            files.append(os.path.join(figdir, "prony.png"))

    # -------------------------------------------------------- redispatch
    if scn.analyses.get("redispatch") and window_info:
        rs: RedispatchSpec = scn.analyses["redispatch"]
        w = window_info[-1]
        wmodel = w["model"]
        if md_est is None:
            raise ScenarioError("redispatch analysis needs modal analysis")
        md_ctl, src = md_est, "estimated"
        lam_c = critical_eigenvalue(md_ctl)
        if abs(lam_c.imag) > 1e-9:
            # the sampled matrix did not resolve the fold mode as real;
            # fall back to the analytic matrix for control design
            md_ctl, src = md_an, "analytic"
            lam_c = critical_eigenvalue(md_ctl)
        report.append(f"control design from the {src} state matrix")
        rank = unstable_machine_ranking(md_ctl, lam_c, base.M, base.ref)
        n_vec = normal_vector(wmodel, md_ctl, lam_c)
        slack0 = None if rs.slack is None else \
            labels_ind.index(f"G{rs.slack}")
        plan = redispatch_plan(n_vec, step=rs.step, slack=slack0)
        model2, eq2, lam_after = redispatch_outcome(wmodel, w["eq"], plan)
        values["ranking"] = rank
        values["normal_vector"] = n_vec
        values["plan"] = plan
        values["lambda_c_after"] = lam_after
        doc = {"critical_eigenvalue": lam_c,
               "ranking_machines": list(rank.machines),
               "ranking_components": rank.components,
               "normal_vector": n_vec,
               "machines": labels_ind,
               "step": rs.step,
               "slack_machine": labels_ind[plan.slack],
               "slack_pickup": plan.slack_pickup,
               "delta_pm": plan.delta_pm,
               "lambda_c_analytic_before": values.get("lambda_c_analytic"),
               "lambda_c_after": lam_after}
        p = os.path.join(out_dir, "redispatch.json")
        _write_json(p, doc)
        files.append(p)
        report.append(f"ranking (most exposed first): "
                      f"{', '.join('G%d' % k for k in rank.machines[:3])} "
                      f"(components {np.round(rank.components[:3], 4)})")
        report.append(f"normal vector: {np.round(n_vec, 4)}")
        report.append(f"re-dispatch: step {rs.step}, slack "
                      f"{labels_ind[plan.slack]}, pickup "
                      f"{plan.slack_pickup:.4f}; lambda_c "
                      f"{values['lambda_c_analytic'].real:.4f} -> "
                      f"{lam_after.real:.4f}")

    # --------------------------------------------------------- aggravate
    if scn.analyses.get("aggravate"):
        ag: AggravateSpec = scn.analyses["aggravate"]
        base_events = list(scn.events)
        # bump the LAST event on this generator by dx
        bumped = []
        for te, ev in base_events:
            if ev.kind == "set_xd_prime" and ev.target == ag.gen:
                ev = ContingencyEvent(ev.kind, ev.target,
                                      float(ev.value) + ag.dx)
            bumped.append((te, ev))
        sim2 = simulate(model, ContingencySchedule(tuple(bumped)), dt=scn.dt,
                        t_end=ag.t_end, record_every=scn.record_every,
                        seed=scn.seed)
        values["aggravated_status"] = sim2.trajectory.status
        values["aggravated_at"] = sim2.trajectory.diverged_at
        report.append(f"aggravated run (+{ag.dx} on {ag.gen}): "
                      f"{sim2.trajectory.status}"
                      + (f" at t={sim2.trajectory.diverged_at:.1f} s"
                         if sim2.trajectory.diverged_at else ""))

    # ------------------------------------------------------------ checks
    checks = _registered_checks(scn.name, values, labels_ind)
    for c in checks:
        report.append(f"CHECK {c.name} {c.band}: "
                      f"{'PASS' if c.passed else 'FAIL'} ({c.value})")
    if checks:
        report.append(f"RESULT: {'PASS' if all(c.passed for c in checks) else 'FAIL'}")

    rp = os.path.join(out_dir, "report.txt")
    with open(rp, "w") as f:
        f.write("\n".join(report) + "\n")
    files.append(rp)
    return ScenarioResult(scenario=scn, out_dir=out_dir, checks=checks,
                          values=values, files=files)


# ------------------------------------------------------- acceptance bands


def _registered_checks(name: str, v: dict, labels_ind) -> list:
    checks = []

    def add(cname, passed, value, band):
        checks.append(Check(name=cname, passed=bool(passed),
                            value=value, band=band))

    if name == "9bus":
        wins = v.get("windows", [])
        if len(wins) >= 2:
            add("hybrid_pre_error", wins[0]["error"] <= 0.10,
                round(wins[0]["error"], 4), "<= 0.10")
            add("hybrid_post_error", wins[-1]["error"] <= 0.10,
                round(wins[-1]["error"], 4), "<= 0.10")
            add("stale_post_error", v.get("stale_error", 0.0) >= 0.20,
                round(v.get("stale_error", 0.0), 4), ">= 0.20")
    elif name == "39bus-oscillation":
        for tag in ("least_damped_analytic", "least_damped_est"):
            lam = v.get(tag)
            if lam is not None:
                f = abs(lam.imag) / (2 * np.pi)
                add(f"{tag}_freq", 0.5 <= f <= 3.0, round(f, 3),
                    "in [0.5, 3.0] Hz")
        pf = v.get("pf_least_damped")
        if pf is not None:
            m = len(labels_ind)
            i4 = labels_ind.index("G4")
            add("pf_gen4_delta", pf[i4] >= 0.3, round(float(pf[i4]), 3),
                ">= 0.3")
            add("pf_gen4_omega", pf[m + i4] >= 0.3,
                round(float(pf[m + i4]), 3), ">= 0.3")
            add("pf_gen4_max", int(np.argmax(pf)) % m == i4,
                labels_ind[int(np.argmax(pf)) % m], "== G4")
        if "prony_df" in v:
            add("prony_freq_match", v["prony_df"] <= 0.15,
                round(v["prony_df"], 4), "<= 0.15 Hz")
            add("prony_damping_match", v["prony_ds"] <= 0.15,
                round(v["prony_ds"], 4), "<= 0.15 1/s")
    elif name == "39bus-stability":
        lam_an = v.get("lambda_c_analytic")
        lam_est = v.get("lambda_c_est")
        if lam_an is not None:
            add("lambda_c_analytic", -0.05 <= lam_an.real <= -0.01,
                round(lam_an.real, 4), "in [-0.05, -0.01]")
        if lam_an is not None and lam_est is not None:
            err = abs(lam_est.real - lam_an.real)
            add("lambda_c_estimate", err <= 0.05, round(err, 4),
                "|est - analytic| <= 0.05")
        if "aggravated_status" in v:
            add("aggravated_divergence", v["aggravated_status"] == "diverged",
                v["aggravated_status"], "== diverged")
        rank = v.get("ranking")
        if rank is not None:
            add("ranking_machine_1", rank.machines[0] == 1,
                f"G{rank.machines[0]}", "== G1")
        plan = v.get("plan")
        if plan is not None:
            add("plan_balance", abs(plan.delta_pm.sum()) <= 1e-12,
                f"{plan.delta_pm.sum():.2e}", "|sum| <= 1e-12")
        if plan is not None and lam_an is not None \
                and v.get("lambda_c_after") is not None:
            dec = lam_an.real - v["lambda_c_after"].real
            add("redispatch_decrease", dec >= 0.1, round(dec, 4), ">= 0.1")
    elif name == "39bus-damping":
        d = v.get("damping")
        if d is not None:
            worst = float(np.max(d["rel_err"]))
            add("damping_max_rel_err", worst <= 0.10, round(worst, 4),
                "<= 0.10")
    elif name == "appendix-3rd-order":
        wins = v.get("windows", [])
        if wins:
            add("third_order_error", wins[-1]["error"] <= 0.10,
                round(wins[-1]["error"], 4), "<= 0.10")
    return checks


def repro(name: str, out_dir: str, seed: int | None = None,
          make_figures: bool = True) -> ScenarioResult:
    """Run a shipped reference scenario by name."""
    scn = Scenario.from_json(packaged_scenario_path(name))
    return run_scenario(scn, out_dir, seed=seed, make_figures=make_figures)


# ------------------------------------------------------------ SNB tuning


def tune_xdprime_for_lambda(case: RawCase, gen_id: str,
                            target: float = -0.03, x_start: float | None = None,
                            x_step: float = 0.05, x_max: float = 2.0,
                            tol: float = 1e-6):
    """Bisection on xd' of one generator until lambda_c reaches ``target``.

    Marches the transient reactance up from its case value until the
    stable equilibrium is lost (or the critical eigenvalue passes
    ``target``), then bisects.  Returns (xd_prime, lambda_c) on the
    stable side with lambda_c <= target.
    """
    model = CoiModel.from_case(case)
    eq = find_equilibrium(model)

    def lam_at(x, guess):
        m2 = model.with_events(ContingencyEvent("set_xd_prime", gen_id, x))
        try:
            e = find_equilibrium(m2, guess=guess)
        except (ConvergenceError, StabilityError):
            return None, None
        if not e.stable:
            return None, e
        A, _ = model_state_space(m2, e.delta)
        return critical_eigenvalue(eigen_decompose(A)).real, e

    x_lo = case.generator(gen_id).xd_prime if x_start is None else x_start
    lam_lo, eq_lo = lam_at(x_lo, eq.delta)
    if lam_lo is None or lam_lo > target:
        raise ScenarioError(f"{gen_id}: base case already at or past the "
                            f"target critical eigenvalue")
    x = x_lo
    x_hi = None
    while x < x_max:
        x = x + x_step
        lam, e = lam_at(x, eq_lo.delta)
        if lam is None or lam > target:
            x_hi = x
            break
        x_lo, lam_lo, eq_lo = x, lam, e
    if x_hi is None:
        raise ScenarioError(f"no instability found up to xd'={x_max}")
    while x_hi - x_lo > tol:
        mid = 0.5 * (x_lo + x_hi)
        lam, e = lam_at(mid, eq_lo.delta)
        if lam is None or lam > target:
            x_hi = mid
        else:
            x_lo, lam_lo, eq_lo = mid, lam, e
    return x_lo, lam_lo
