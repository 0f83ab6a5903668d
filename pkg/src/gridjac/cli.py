"""Command-line interface.

Subcommands wrap the library stages into file-in/file-out pipelines:

    gridjac simulate   --scenario S.json --out DIR [--seed N]
    gridjac estimate   --traj T.csv --case C.json --window A,B --out DIR
    gridjac modal      --estimates estimates.json --case C.json --out DIR
    gridjac prony      --traj T.csv --signal dtilde_4 --window A,B --order 19 --out DIR
    gridjac damping    --traj T.csv --case C.json --window A,B --out DIR
    gridjac redispatch --case C.json --gen G1 --xdprime X --step 1 [--slack K] --out DIR
    gridjac repro      NAME --out DIR [--seed N]

Exit codes: 0 ok, 2 input error, 3 numerical failure, 4 acceptance-band
failure (repro only).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import (CaseError, ConvergenceError, EstimationError,
                     GridJacError, ModalError, ReductionError, ScenarioError,
                     StabilityError)
from .estimate import (assemble_estimated_state_matrix, estimate_damping,
                       estimate_jacobian, sample_covariance)
from .linear import model_state_space
from .modal import (critical_eigenvalue, eigen_decompose, mode_table,
                    normal_vector, participation_factors, redispatch_outcome,
                    redispatch_plan, unstable_machine_ranking)
from .network import ContingencyEvent, RawCase
from .prony import prony_fit
from .scenario import (REPRO_NAMES, Scenario, _write_json, repro,
                       run_scenario)
from .swing import CoiModel, Trajectory, find_equilibrium

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_BAND = 4

_INPUT_ERRORS = (CaseError, ScenarioError, FileNotFoundError, KeyError,
                 json.JSONDecodeError)
_NUMERICAL_ERRORS = (ConvergenceError, EstimationError, ModalError,
                     ReductionError, StabilityError, np.linalg.LinAlgError)


def _window(text):
    a, b = text.split(",")
    return float(a), float(b)


def _resolve_case(path):
    """Bare packaged-case names (wscc9.json) resolve to the data dir."""
    if not os.path.exists(path):
        from .scenario import data_path
        packaged = data_path(os.path.basename(str(path)))
        if packaged.is_file():
            return str(packaged)
    return path


def _load_traj_case(args):
    traj = Trajectory.from_csv(args.traj)
    case = RawCase.from_json(_resolve_case(args.case))
    model = CoiModel.from_case(case)
    return traj, case, model


def cmd_simulate(args):
    scn = Scenario.from_json(args.scenario)
    res = run_scenario(scn, args.out, seed=args.seed,
                       make_figures=not args.no_figures)
    print(f"[simulate] wrote {len(res.files)} files to {res.out_dir}")
    return EXIT_OK


def cmd_estimate(args):
    traj, case, model = _load_traj_case(args)
    idx = model.indep
    cov = sample_covariance(traj, *args.window)
    est = estimate_jacobian(model.M[idx], cov)
    A = assemble_estimated_state_matrix(est.K, model.M[idx], model.D[idx])
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, "estimates.json")
    _write_json(out, {
        "window": list(args.window), "n_samples": cov.n_samples,
        "cond_c_dd": est.cond_c_dd, "K_star": est.K, "A_star": A,
        "c_dd": cov.c_dd, "c_dw": cov.c_dw, "c_ww": cov.c_ww,
        "machines": [model.labels[i] for i in idx]})
    print(f"[estimate] K* cond(C_dd)={est.cond_c_dd:.3e} -> {out}")
    return EXIT_OK


def cmd_modal(args):
    with open(args.estimates) as f:
        doc = json.load(f)
    if "A_star" in doc:
        A = np.array(doc["A_star"], dtype=float)
    else:
        case = RawCase.from_json(_resolve_case(args.case))
        model = CoiModel.from_case(case)
        idx = model.indep
        K = np.array(doc["K_star"], dtype=float)
        A = assemble_estimated_state_matrix(K, model.M[idx], model.D[idx])
    md = eigen_decompose(A)
    rows = mode_table(md)
    pf = participation_factors(md)
    os.makedirs(args.out, exist_ok=True)
    p = os.path.join(args.out, "modes.csv")
    with open(p, "w") as f:
        f.write("re,im,freq_hz,damping\n")
        for r in rows:
            f.write(f"{r.eigenvalue.real!r},{r.eigenvalue.imag!r},"
                    f"{r.freq_hz!r},{r.damping!r}\n")
    p2 = os.path.join(args.out, "participation.csv")
    with open(p2, "w") as f:
        f.write("state," + ",".join(f"mode_{r.index}" for r in rows) + "\n")
        for i in range(md.n):
            f.write(f"x{i}," + ",".join(repr(float(pf[i, r.index]))
                                        for r in rows) + "\n")
    lam = critical_eigenvalue(md)
    print(f"[modal] critical eigenvalue {lam:.4f}; wrote {p}, {p2}")
    return EXIT_OK


def cmd_prony(args):
    traj = Trajectory.from_csv(args.traj)
    sig = traj.column(args.signal)
    t = traj.t
    a, b = args.window
    mask = (t >= a - 1e-9) & (t <= b + 1e-9)
    s = sig[mask]
    dt = traj.dt_s
    if args.acf_lags:
        s0 = s - s.mean()
        nlags = int(round(args.acf_lags / dt))
        s = np.correlate(s0, s0, mode="full")[len(s0) - 1:len(s0) + nlags] / len(s0)
    res = prony_fit(s[::args.decimate], dt * args.decimate, args.order)
    os.makedirs(args.out, exist_ok=True)
    p = os.path.join(args.out, "prony.csv")
    with open(p, "w") as f:
        f.write("lam_re,lam_im,freq_hz,damping,amplitude,phase,energy\n")
        for m_ in res.modes:
            f.write(f"{m_.lam.real!r},{m_.lam.imag!r},{m_.freq_hz!r},"
                    f"{m_.damping!r},{m_.amplitude!r},{m_.phase!r},"
                    f"{m_.energy!r}\n")
    top = res.representative_modes()[0]
    print(f"[prony] order {res.order}, rms {res.rms_relative_error:.3e}, "
          f"dominant mode {top.lam:.4f} ({top.freq_hz:.3f} Hz) -> {p}")
    return EXIT_OK


def cmd_damping(args):
    traj, case, model = _load_traj_case(args)
    idx = model.indep
    cov = sample_covariance(traj, *args.window)
    de = estimate_damping(model.M[idx], model.sigma[idx], cov.c_ww)
    os.makedirs(args.out, exist_ok=True)
    p = os.path.join(args.out, "damping.csv")
    with open(p, "w") as f:
        f.write("machine,d_true,d_est,rel_err\n")
        for j, i in enumerate(idx):
            r = abs(de.d[j] - model.D[i]) / model.D[i] if model.D[i] > 0 else float("nan")
            f.write(f"{model.labels[i]},{model.D[i]!r},{de.d[j]!r},{r!r}\n")
    print(f"[damping] off-diagonal ratio {de.off_diagonal_ratio:.3f} -> {p}")
    return EXIT_OK


def cmd_redispatch(args):
    case = RawCase.from_json(_resolve_case(args.case))
    model = CoiModel.from_case(case)
    eq0 = find_equilibrium(model)
    if args.xdprime is not None:
        model = model.with_events(
            ContingencyEvent("set_xd_prime", args.gen, args.xdprime))
    eq = find_equilibrium(model, guess=eq0.delta)
    A, _ = model_state_space(model, eq.delta)
    md = eigen_decompose(A)
    lam = critical_eigenvalue(md)
    rank = unstable_machine_ranking(md, lam, model.M, model.ref)
    n_vec = normal_vector(model, md, lam)
    idx = model.indep
    labels = [model.labels[i] for i in idx]
    slack = None if args.slack is None else labels.index(f"G{args.slack}")
    plan = redispatch_plan(n_vec, step=args.step, slack=slack)
    model2, eq2, lam_after = redispatch_outcome(model, eq, plan)
    os.makedirs(args.out, exist_ok=True)
    p = os.path.join(args.out, "redispatch.json")
    _write_json(p, {
        "critical_eigenvalue": lam, "ranking_machines": list(rank.machines),
        "normal_vector": n_vec, "machines": labels,
        "slack_machine": labels[plan.slack], "slack_pickup": plan.slack_pickup,
        "delta_pm": plan.delta_pm, "lambda_c_after": lam_after})
    print(f"[redispatch] lambda_c {lam.real:.4f} -> {lam_after.real:.4f}, "
          f"slack {labels[plan.slack]} pickup {plan.slack_pickup:.4f} -> {p}")
    return EXIT_OK


def cmd_repro(args):
    if args.name not in REPRO_NAMES:
        print(f"unknown repro {args.name!r}; valid names: "
              f"{', '.join(REPRO_NAMES)}", file=sys.stderr)
        return EXIT_INPUT
    res = repro(args.name, args.out, seed=args.seed,
                make_figures=not args.no_figures)
    for c in res.checks:
        print(f"CHECK {c.name} {c.band}: {'PASS' if c.passed else 'FAIL'} "
              f"({c.value})")
    print(f"RESULT: {'PASS' if res.passed else 'FAIL'} "
          f"(report: {os.path.join(res.out_dir, 'report.txt')})")
    return EXIT_OK if res.passed else EXIT_BAND


def build_parser():
    ap = argparse.ArgumentParser(prog="gridjac", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="windowed Jacobian estimate from a trajectory")
    p.add_argument("--traj", required=True)
    p.add_argument("--case", required=True)
    p.add_argument("--window", type=_window, required=True, metavar="A,B")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("modal", help="eigen-analysis of an estimated state matrix")
    p.add_argument("--estimates", required=True)
    p.add_argument("--case", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_modal)

    p = sub.add_parser("prony", help="Prony fit of one trajectory column")
    p.add_argument("--traj", required=True)
    p.add_argument("--signal", required=True)
    p.add_argument("--window", type=_window, required=True, metavar="A,B")
    p.add_argument("--order", type=int, default=19)
    p.add_argument("--acf-lags", type=float, default=0.0,
                   help="fit the autocorrelation up to this lag (s); 0 = raw signal")
    p.add_argument("--decimate", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prony)

    p = sub.add_parser("damping", help="damping estimates from a trajectory window")
    p.add_argument("--traj", required=True)
    p.add_argument("--case", required=True)
    p.add_argument("--window", type=_window, required=True, metavar="A,B")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_damping)

    p = sub.add_parser("redispatch", help="normal-vector re-dispatch plan")
    p.add_argument("--case", required=True)
    p.add_argument("--gen", default="G1")
    p.add_argument("--xdprime", type=float, default=None,
                   help="apply a transient-reactance contingency first")
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--slack", type=int, default=None,
                   help="slack machine number (default: least sensitive)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_redispatch)

    p = sub.add_parser("repro", help="run a shipped reference scenario")
    p.add_argument("name")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_repro)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except _NUMERICAL_ERRORS as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except GridJacError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
