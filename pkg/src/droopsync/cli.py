"""Command-line interface.

Subcommands: ``simulate`` runs a scenario and emits traces/plots; ``synth``
solves the gain-synthesis problem for a scenario's topology and delay
bounds; ``check`` re-verifies a gains+certificate file; ``metrics`` prints
summary statistics of a trace.  Exit codes: 0 success, 2 invalid scenario,
3 simulation failure, 4 synthesis infeasible, 5 certificate rejected,
1 other errors.  No environment variables are consulted.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

__all__ = ["main"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_SCENARIO = 2
EXIT_SIMULATION = 3
EXIT_INFEASIBLE = 4
EXIT_REJECTED = 5


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="droopsync")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario")
    sim.add_argument("scenario", type=Path)
    sim.add_argument("--out", type=Path, default=Path("."),
                     help="output directory")
    sim.add_argument("--seed", type=int, default=None,
                     help="override the delay seed")
    sim.add_argument("--step", type=float, default=None,
                     help="override the integration step (s)")
    sim.add_argument("--emit", default="csv",
                     help="comma-separated outputs: csv,svg")
    sim.add_argument("--decimation", type=int, default=1,
                     help="keep every Nth sample in the CSV")

    syn = sub.add_parser("synth", help="synthesize certified gains")
    syn.add_argument("scenario", type=Path)
    syn.add_argument("--out", type=Path, required=True,
                     help="gains+certificate file to write")
    syn.add_argument("--k-min", type=float, default=0.1)
    syn.add_argument("--k-max", type=float, default=60.0)

    chk = sub.add_parser("check", help="verify a gains+certificate file")
    chk.add_argument("gains_file", type=Path)
    chk.add_argument("scenario", type=Path)

    met = sub.add_parser("metrics", help="summarize a trajectory CSV")
    met.add_argument("trajectory", type=Path)
    met.add_argument("--window", action="append", default=[],
                     metavar="LO:HI", help="time window(s) to summarize")
    return ap


def _cmd_simulate(args) -> int:
    from . import engine, metrics, output, scenario as scn_mod
    from .lmi import SynthesisOptions, synthesize_gains

    scn = scn_mod.load_scenario(args.scenario)
    if scn.gains is None:
        gains, _cert = synthesize_gains(scn.comm, scn.delay_bounds,
                                        SynthesisOptions(),
                                        m=tuple([0.1] * scn.n_dg))
        scn = scn.with_gains(gains)
    traj = engine.run(scn, step=args.step, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    emitted = []
    kinds = [k.strip() for k in args.emit.split(",") if k.strip()]
    for kind in kinds:
        if kind == "csv":
            p = args.out / f"{scn.name}.csv"
            output.write_csv(traj, p, decimation=args.decimation)
        elif kind == "svg":
            p = args.out / f"{scn.name}.svg"
            output.write_svg(traj, p)
        else:
            print(f"error: unknown emit kind {kind!r}", file=sys.stderr)
            return EXIT_ERROR
        emitted.append(str(p))
    summary = metrics.summarize(traj, events=[e.t for e in scn.events
                                              if e.kind == "set_omega0"])
    summary["files"] = emitted
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _cmd_synth(args) -> int:
    from . import scenario as scn_mod
    from .lmi import SynthesisOptions, check_certificate, synthesize_gains
    from .topology import follower_matrix, pinned_matrix, reduced_error_matrix

    scn = scn_mod.load_scenario(args.scenario)
    opts = SynthesisOptions(k_min=args.k_min, k_max=args.k_max)
    gains, cert = synthesize_gains(scn.comm, scn.delay_bounds, opts)
    A = reduced_error_matrix(pinned_matrix(scn.comm, gains),
                             follower_matrix(scn.comm, gains))
    chk = check_certificate(A, scn.delay_bounds, cert,
                            eps_pd=opts.eps_pd, eps_margin=opts.eps_margin)
    scn_mod.dump_gains_file(args.out, gains, cert, chk)
    print(json.dumps({"margin": cert.margin, "accepted": chk.accepted,
                      "gains_file": str(args.out)}, indent=2))
    return EXIT_OK if chk.accepted else EXIT_REJECTED


def _cmd_check(args) -> int:
    from . import scenario as scn_mod
    from .lmi import check_certificate
    from .topology import follower_matrix, pinned_matrix, reduced_error_matrix

    scn = scn_mod.load_scenario(args.scenario)
    gains, cert = scn_mod.load_gains_file(args.gains_file)
    gains.validate_against(scn.comm)
    if cert.n == scn.n_dg:
        A = reduced_error_matrix(pinned_matrix(scn.comm, gains),
                                 follower_matrix(scn.comm, gains))
    else:
        from .topology import disagreement_matrix, error_dynamics_matrix
        A = error_dynamics_matrix(pinned_matrix(scn.comm, gains),
                                  follower_matrix(scn.comm, gains),
                                  disagreement_matrix(scn.n_dg))
    chk = check_certificate(A, scn.delay_bounds, cert)
    print(json.dumps({"accepted": chk.accepted, "margin": chk.margin,
                      "lambda_max_xi": chk.lambda_max_xi,
                      "reasons": list(chk.reasons)}, indent=2))
    return EXIT_OK if chk.accepted else EXIT_REJECTED


def _cmd_metrics(args) -> int:
    from . import metrics, output

    traj = output.read_csv(args.trajectory)
    windows = []
    for w in args.window:
        lo, hi = w.split(":")
        windows.append((float(lo), float(hi)))
    out = {"step_s": traj.step, "n_dg": traj.n_dg,
           "duration_s": float(traj.t[-1]),
           "max_tau_s": float(traj.tau.max()),
           "max_abs_S_rad_s": float(np.abs(traj.S).max())}
    if windows:
        out["windows"] = []
        for lo, hi in windows:
            wm = metrics.window_metrics(traj, lo, hi)
            out["windows"].append({
                "t_lo_s": wm.t_lo, "t_hi_s": wm.t_hi,
                "max_freq_error_rad_s": wm.max_freq_error,
                "max_abs_S_rad_s": wm.max_abs_s})
    print(json.dumps(out, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    from .lmi import SynthesisError
    from .scenario import ScenarioError

    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        return EXIT_ERROR
    except ScenarioError as exc:
        print(f"error: scenario: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except SynthesisError as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except FileNotFoundError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # simulation and remaining errors
        from .engine import SimulationError

        if isinstance(exc, SimulationError):
            print(f"error: simulation: {exc}", file=sys.stderr)
            return EXIT_SIMULATION
        raise


if __name__ == "__main__":
    sys.exit(main())
