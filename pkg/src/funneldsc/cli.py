"""Experiment runner CLI.

Runs a preset or a config file, writes the trajectory export and a
verification summary, and exits 0 exactly when both funnel bounds held.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from .config import ConfigError, ExperimentConfig
from .controller import ControlMode
from .perf import perf_from_terminal
from .plants import (
    electromechanical_reference,
    make_electromechanical,
    make_single_link,
    single_link_reference,
)
from .sim import SimConfig, SimulationDivergenceError, export_trajectory, run, convergence_check  # noqa: F401

OUT_DIR_ENV = "FUNNELDSC_OUT_DIR"

EXIT_OK = 0
EXIT_BOUND_VIOLATED = 1
EXIT_ERROR = 2


def build_problem(cfg: ExperimentConfig):
    """Materialize plant, reference, perf function and sim config."""
    if cfg.plant == "electromechanical":
        plant = make_electromechanical()
        reference = electromechanical_reference()
    else:
        plant = make_single_link()
        reference = single_link_reference()
    perf = perf_from_terminal(b=cfg.perf_b, c=cfg.perf_c, h=cfg.perf_h, T=cfg.perf_T)
    sim_cfg = SimConfig(
        dt=cfg.dt,
        t_end=cfg.t_end,
        x0=cfg.x0,
        mode=cfg.mode,
        record_every=cfg.record_every,
        exact_filter=cfg.exact_filter,
    )
    return plant, reference, perf, sim_cfg


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> int:
    """Run one experiment, write artifacts, return the process exit status."""
    out = Path(out_dir or cfg.out or os.environ.get(OUT_DIR_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    plant, reference, perf, sim_cfg = build_problem(cfg)
    try:
        traj, report = run(
            plant,
            reference,
            cfg.gains,
            perf,
            sim_cfg,
            kind=cfg.transform_kind,
            sign_smoothing=cfg.sign_smoothing,
        )
    except SimulationDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    (out / "config.txt").write_text(cfgmod.serialize_config(cfg))
    if traj.times:
        export_trajectory(traj, plant.n, out / "trajectory.csv")
    summary = report.as_dict()
    summary["breach_time"] = traj.breach
    (out / "verification.json").write_text(json.dumps(summary, indent=2) + "\n")

    lines = [
        f"transient bound (|arctan(e)| < eta): {'PASS' if report.transient_ok else 'FAIL'}",
        f"steady bound (|e| < tan(c) after T): {'PASS' if report.steady_ok else 'FAIL'}",
        f"max |e|          : {report.max_abs_error:.6g}",
        f"max |e| after T  : {report.max_abs_error_after_T:.6g}",
        f"max |u|          : {report.max_abs_control:.6g}",
    ]
    if traj.breach is not None:
        lines.append(f"funnel breach at t = {traj.breach:.6g}")
    text = "\n".join(lines)
    (out / "verification.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK if report.transient_ok and report.steady_ok else EXIT_BOUND_VIOLATED


def _sweep_worker(args):
    path, out_root = args
    cfg = cfgmod.load_config(path)
    name = Path(path).stem
    return path, run_experiment(cfg, out_dir=Path(out_root) / name)


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="funneldsc",
        description="Prescribed-time funnel tracking experiments on strict-feedback plants.",
    )
    parser.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help="built-in case study")
    parser.add_argument("--config", help="flat key-value config file (overrides nothing; used instead of --preset)")
    parser.add_argument("--mode", choices=[m.value for m in ControlMode], help="controller mode")
    parser.add_argument("--dt", type=float, help="integration step, seconds")
    parser.add_argument("--t-end", type=float, help="simulation horizon, seconds")
    parser.add_argument("--x0", help="comma-separated initial plant state")
    parser.add_argument("--sign-smoothing", type=float, help="replace sign(z) by tanh(z/eps); 0 keeps the discontinuity")
    parser.add_argument("--out", help=f"output directory (default: ${OUT_DIR_ENV} or cwd)")
    parser.add_argument("--sweep", nargs="+", metavar="CONFIG", help="run several config files in parallel workers")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = _parse_args(argv if argv is not None else sys.argv[1:])

    if args.sweep:
        out_root = args.out or os.environ.get(OUT_DIR_ENV, "sweep-out")
        with multiprocessing.Pool() as pool:
            results = pool.map(_sweep_worker, [(p, out_root) for p in args.sweep])
        status = EXIT_OK
        for path, code in results:
            print(f"{path}: exit {code}")
            status = max(status, code)
        return status

    try:
        if args.config:
            cfg = cfgmod.load_config(args.config)
        elif args.preset:
            cfg = cfgmod.PRESETS[args.preset]()
        else:
            print("error: one of --preset, --config or --sweep is required", file=sys.stderr)
            return EXIT_ERROR

        overrides = {}
        if args.mode:
            overrides["mode"] = ControlMode(args.mode)
        if args.dt is not None:
            overrides["dt"] = args.dt
        if args.t_end is not None:
            overrides["t_end"] = args.t_end
        if args.x0 is not None:
            overrides["x0"] = tuple(float(v) for v in args.x0.split(","))
        if args.sign_smoothing is not None:
            overrides["sign_smoothing"] = args.sign_smoothing
        if overrides:
            cfg = replace(cfg, **overrides)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    return run_experiment(cfg, out_dir=args.out)


if __name__ == "__main__":
    sys.exit(main())
