"""Command-line entry point: ``zklab <command> [options]``.

Commands
--------
simulate    evolve a Gaussian from a config file, write trajectory and trace
propagate   free linear evolution of the same initial data
verify      run one named experiment and write its report
norms       contraction-space norms of a saved trajectory
report      merge saved reports into a summary table
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ZKLabError, InvalidInputError
from .harness import (
    EXPERIMENT_NAMES,
    EstimateReport,
    ExperimentSpec,
    coerce_parameter,
    default_parameters,
    run_experiment,
    summary_table,
)
from .norms import Trajectory, Truncated, triple_norm
from .propagator import free_evolve
from .snapshot import emit_trace, load_snapshot, save_snapshot
from .solver import SimulationConfig, evolve, picard_solve


def read_config(path: str | Path | None) -> dict[str, str]:
    """Flat ``key = value`` file with ``#`` comments; returns raw strings.

    Sections, duplicate keys and lines without ``=`` are errors.
    """
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None, strict=True
    )
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise InvalidInputError(f"cannot parse config {path}: {exc}") from None
    if parser.sections() != ["config"]:
        raise InvalidInputError(f"config {path} must be flat; found sections {parser.sections()[1:]}")
    return dict(parser["config"])


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0"):
        return False
    raise InvalidInputError(f"expected a boolean, got {text!r}")


def simulation_config(raw: dict[str, Any], grid: tuple[int, int] | None = None, box: float | None = None) -> SimulationConfig:
    """Build a :class:`SimulationConfig` from raw config values; unknown keys are errors."""
    fields = {f.name: f for f in dataclasses.fields(SimulationConfig)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
    kw: dict[str, Any] = {}
    for key, value in raw.items():
        default = fields[key].default
        try:
            if not isinstance(value, str):
                kw[key] = value
            elif key == "dt":
                kw[key] = None if value.strip().lower() == "none" else float(value)
            elif isinstance(default, bool):
                kw[key] = _parse_bool(value)
            elif isinstance(default, int):
                kw[key] = int(value)
            elif isinstance(default, float):
                kw[key] = float(value)
            else:
                kw[key] = value.strip()
        except ValueError:
            raise InvalidInputError(f"config key {key!r} expects {type(default).__name__}, got {value!r}") from None
    if grid is not None:
        kw["nx"], kw["ny"] = grid
    if box is not None:
        kw["half_length_x"] = kw["half_length_y"] = box
    try:
        return SimulationConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(str(exc)) from None


def experiment_spec(name: str, raw: dict[str, Any], seed: int, grid=None, box=None) -> ExperimentSpec:
    params = {k: coerce_parameter(name, k, v) for k, v in raw.items()} if name in EXPERIMENT_NAMES else dict(raw)
    defaults = default_parameters(name)
    if grid is not None:
        if "nx" not in defaults:
            raise InvalidInputError(f"experiment {name!r} has no grid parameters")
        params["nx"], params["ny"] = grid
    if box is not None:
        if "half_length" not in defaults:
            raise InvalidInputError(f"experiment {name!r} has no box parameter")
        params["half_length"] = box
    return ExperimentSpec(name, params, seed)


def _grid_arg(text: str) -> tuple[int, int]:
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 256x256, got {text!r}") from None
    return nx, ny


def _seed_arg(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True, indent=2))
    else:
        print(text)


def _write_run(args, traj: Trajectory, cfg: SimulationConfig, kind: str) -> None:
    out = _out_dir(args)
    traj_path, trace_path = out / f"{kind}.zkf", out / f"{kind}_trace.csv"
    save_snapshot(traj, traj_path)
    emit_trace(traj, trace_path, sobolev_orders=[cfg.sobolev_order], weights=[Truncated(cfg.N, cfg.s)])
    l2 = [f.l2_norm() for f in traj.fields]
    payload = {
        "trajectory": str(traj_path),
        "trace": str(trace_path),
        "snapshots": len(traj),
        "T": float(traj.times[-1]),
        "l2_initial": l2[0],
        "l2_final": l2[-1],
    }
    _emit(args, payload, "\n".join(f"{k}: {v}" for k, v in payload.items()))


def cmd_simulate(args) -> int:
    cfg = simulation_config(read_config(args.config), args.grid, args.box)
    u0 = cfg.initial_field()
    if cfg.scheme == "picard":
        traj, diag = picard_solve(u0, cfg.T, cfg)
        if not args.json:
            print(f"picard: {diag.iterations} iterations, converged={diag.converged}")
    else:
        traj = evolve(u0, cfg)
    _write_run(args, traj, cfg, "simulate")
    return 0


def cmd_propagate(args) -> int:
    cfg = simulation_config(read_config(args.config), args.grid, args.box)
    u0 = cfg.initial_field()
    times = cfg.T * np.arange(cfg.snapshots + 1) / cfg.snapshots
    fields = [free_evolve(u0, t, cfg.form) for t in times]
    _write_run(args, Trajectory.from_fields(times, fields), cfg, "propagate")
    return 0


def cmd_verify(args) -> int:
    spec = experiment_spec(args.experiment, read_config(args.config), args.seed, args.grid, args.box)
    report = run_experiment(spec)
    out = _out_dir(args)
    path = out / f"{spec.name}.json"
    path.write_text(report.to_json() + "\n", encoding="utf-8")
    lines = [f"{spec.name}: {'PASS' if report.passed else 'FAIL'} ({report.wall_time:.1f} s) -> {path}"]
    for c in report.checks:
        lines.append(f"  {c['name']}: {c['value']:.6g} {c['op']} {c['limit']:.6g}")
    _emit(args, report.to_dict(), "\n".join(lines))
    return 0 if report.passed else 1


def cmd_norms(args) -> int:
    obj = load_snapshot(args.trajectory)
    if not isinstance(obj, Trajectory):
        raise InvalidInputError(f"{args.trajectory} holds a single field, not a trajectory")
    raw = read_config(args.config)
    unknown = sorted(set(raw) - {"s"})
    if unknown:
        raise InvalidInputError(f"unknown config keys for norms: {', '.join(unknown)}")
    s = args.s if args.s is not None else float(raw.get("s", 1.0))
    rep = triple_norm(obj, s)
    d = rep.as_dict()
    _emit(args, {"s": s, **d}, "\n".join(f"{k}: {v:.10g}" for k, v in d.items()))
    return 0


def cmd_report(args) -> int:
    reports = [EstimateReport.from_json(Path(p).read_text(encoding="utf-8")) for p in args.reports]
    payload = {
        "reports": [{"name": r.name, "passed": r.passed, "failed_checks": r.failed_checks()} for r in reports],
        "all_passed": all(r.passed for r in reports),
    }
    _emit(args, payload, summary_table(reports))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--seed", type=_seed_arg, default=0, help="random seed (u64)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--grid", type=_grid_arg, help="grid size as NXxNY")
    common.add_argument("--box", type=float, help="box half-length L")
    common.add_argument("--json", action="store_true", help="machine-readable output")

    p = argparse.ArgumentParser(prog="zklab", description="Zakharov-Kuznetsov numerical laboratory")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="nonlinear evolution to trajectory and trace").set_defaults(
        func=cmd_simulate
    )
    sub.add_parser("propagate", parents=[common], help="free linear evolution").set_defaults(func=cmd_propagate)
    v = sub.add_parser("verify", parents=[common], help="run one named experiment")
    v.add_argument("experiment", choices=EXPERIMENT_NAMES)
    v.set_defaults(func=cmd_verify)
    n = sub.add_parser("norms", parents=[common], help="norms of a trajectory file")
    n.add_argument("trajectory")
    n.add_argument("--s", type=float, help="regularity index (default 1)")
    n.set_defaults(func=cmd_norms)
    r = sub.add_parser("report", parents=[common], help="summarise report files")
    r.add_argument("reports", nargs="+")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ZKLabError, OSError) as exc:
        print(f"zklab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
