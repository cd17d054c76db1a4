"""Command line driver for the batch experiments.

Subcommands: ``sweep`` (parameter sweep to CSV), ``converge`` (dual
convergence trace), ``timing`` (per-solver wall-clock table), ``solve``
(single instance from a channel file, JSON solution records).

Every flag can also be given in a flat key/value config file
(``key = value`` per line, ``#`` comments); flags override the file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import List, Optional

import numpy as np

from . import benchmarks, binary
from .channel import load_channel_matrix
from .harness import (
    ExperimentSpec,
    SOLVER_NAMES,
    SWEEP_VARS,
    run_convergence_trace,
    run_experiment,
    run_timing,
)
from .partial import SystemConfig, UserProfile, solve_p1


def _parse_floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_names(text: str) -> tuple:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` file mirroring the CLI flags."""
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line without '=': {line!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


_SPEC_KEYS = {
    "sweep_var": str,
    "grid": _parse_floats,
    "trials": int,
    "seed": int,
    "solvers": _parse_names,
    "users": int,
    "antennas": int,
    "block_s": float,
    "task_bits": float,
    "window_fraction": float,
    "bandwidth_hz": float,
    "noise_psd_dbm_per_hz": float,
    "reference_gain_db": float,
    "reference_distance_m": float,
    "pathloss_exponent": float,
    "cycles_per_bit": float,
    "capacitance": float,
    "weight": float,
    "distance_min_m": float,
    "distance_max_m": float,
    "eps": float,
    "eps_gap": float,
    "measure_runtime": lambda v: str(v).lower() in ("1", "true", "yes"),
    "force_exhaustive": lambda v: str(v).lower() in ("1", "true", "yes"),
    "out": str,
}

_FLAG_ALIASES = {
    "k": "users",
    "n_antennas": "antennas",
    "block_t": "block_s",
}


def build_spec(file_values: dict, flag_values: dict) -> ExperimentSpec:
    merged = {}
    for source in (file_values, flag_values):
        for key, val in source.items():
            key = _FLAG_ALIASES.get(key, key)
            if val is None:
                continue
            if key not in _SPEC_KEYS:
                raise ValueError(f"unknown configuration key {key!r}")
            conv = _SPEC_KEYS[key]
            merged[key] = conv(val) if isinstance(val, str) else val
    return ExperimentSpec(**merged)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file; flags override it")
    parser.add_argument("--k", type=int, default=None, help="number of users")
    parser.add_argument("--n-antennas", dest="n_antennas", type=int, default=None)
    parser.add_argument("--block-t", dest="block_t", type=float, default=None,
                        help="block length T in seconds")
    parser.add_argument("--task-bits", dest="task_bits", type=float, default=None)
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--solvers", type=str, default=None,
                        help=f"comma list from {','.join(SOLVER_NAMES)}")
    parser.add_argument("--out", type=str, default=None)
    parser.add_argument("--eps", type=float, default=None)
    parser.add_argument("--eps-gap", dest="eps_gap", type=float, default=None)
    parser.add_argument("--force-exhaustive", dest="force_exhaustive",
                        action="store_true", default=None)
    parser.add_argument("--measure-runtime", dest="measure_runtime",
                        action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noma-mec",
        description="Batch experiments for NOMA-based multiuser computation offloading",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="sweep one parameter, write a CSV")
    _add_common(sweep)
    sweep.add_argument("--sweep-var", dest="sweep_var", choices=SWEEP_VARS, default=None)
    sweep.add_argument("--grid", type=str, default=None, help="comma list of grid values")

    conv = sub.add_parser("converge", help="dual convergence trace of one instance")
    _add_common(conv)
    conv.add_argument("--instance-seed", dest="instance_seed", type=int, default=0)

    timing = sub.add_parser("timing", help="per-solver wall-clock table")
    _add_common(timing)

    solve = sub.add_parser("solve", help="solve one instance from a channel file")
    _add_common(solve)
    solve.add_argument("--channel-file", dest="channel_file", required=True)

    return parser


def _spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    file_values = read_config_file(args.config) if args.config else {}
    flag_values = {}
    for key in ("k", "n_antennas", "block_t", "task_bits", "trials", "seed",
                "eps", "eps_gap", "out"):
        flag_values[key] = getattr(args, key, None)
    if getattr(args, "solvers", None):
        flag_values["solvers"] = _parse_names(args.solvers)
    if getattr(args, "sweep_var", None):
        flag_values["sweep_var"] = args.sweep_var
    if getattr(args, "grid", None):
        flag_values["grid"] = _parse_floats(args.grid)
    if getattr(args, "force_exhaustive", None):
        flag_values["force_exhaustive"] = True
    if getattr(args, "measure_runtime", None):
        flag_values["measure_runtime"] = True
    return build_spec(file_values, flag_values)


def _cmd_sweep(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    result = run_experiment(spec)
    if not spec.out:
        sys.stdout.write(result.csv_text)
    return 0


def _cmd_converge(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    trace = run_convergence_trace(spec, instance_seed=args.instance_seed, out=spec.out)
    if not spec.out:
        sys.stdout.write("iteration,relative_error\n")
        for it, err in trace:
            sys.stdout.write(f"{it},{err:.12g}\n")
    return 0


def _cmd_timing(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    rows = run_timing(spec, out=spec.out)
    if not spec.out:
        sys.stdout.write("solver,mean_runtime_s,ratio_vs_p1,mean_energy_j,trials\n")
        for row in rows:
            sys.stdout.write(
                f"{row['solver']},{row['mean_runtime_s']:.6g},{row['ratio_vs_p1']:.6g},"
                f"{row['mean_energy_j']:.12g},{row['trials']}\n"
            )
    return 0


def _cmd_solve(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    channels = load_channel_matrix(args.channel_file)
    if channels.shape[0] != spec.users and args.k is None:
        spec = dataclasses.replace(spec, users=channels.shape[0])
    if channels.shape[0] != spec.users:
        raise SystemExit(
            f"channel file has {channels.shape[0]} users but --k={spec.users}"
        )
    profiles = [
        UserProfile(spec.task_bits, spec.cycles_per_bit, spec.capacitance,
                    spec.weight, channels[i])
        for i in range(channels.shape[0])
    ]
    config = SystemConfig(
        block_length_s=spec.block_s,
        offload_window_s=spec.window_fraction * spec.block_s,
        bandwidth_hz=spec.bandwidth_hz,
        antenna_count=channels.shape[1],
    )
    records = {}
    for name in spec.solvers:
        if name == "p1":
            records[name] = solve_p1(profiles, config, eps=spec.eps).to_record()
        elif name == "local":
            total, per_user = benchmarks.local_only(profiles, config)
            records[name] = {
                "weighted_total_j": total,
                "per_user_local_energy_j": [float(v) for v in per_user],
            }
        elif name == "full":
            records[name] = benchmarks.full_offload(profiles, config, eps=spec.eps).to_record()
        elif name == "oma_partial":
            sol = benchmarks.oma_partial(profiles, config)
            records[name] = {
                "slot_durations_s": [float(v) for v in sol.slot_durations],
                "partition_bits": [float(v) for v in sol.partition],
                "powers_w": [float(v) for v in sol.powers],
                "weighted_total_j": sol.weighted_total,
            }
        elif name in ("bnb", "greedy", "relaxation", "exhaustive"):
            fn = {
                "bnb": lambda: binary.solve_bnb(profiles, config, eps_gap=spec.eps_gap),
                "greedy": lambda: binary.solve_greedy(profiles, config),
                "relaxation": lambda: binary.solve_relaxation(profiles, config),
                "exhaustive": lambda: binary.solve_exhaustive(
                    profiles, config, force=spec.force_exhaustive
                ),
            }[name]
            sol = fn()
            records[name] = {
                "decisions": [int(v) for v in sol.xi],
                "weighted_total_j": sol.value,
                "convex_solves": sol.stats.convex_solves,
            }
        elif name == "oma_binary":
            sol = benchmarks.oma_binary(profiles, config, eps_gap=spec.eps_gap)
            records[name] = {
                "decisions": [int(v) for v in sol.xi],
                "weighted_total_j": sol.value,
            }
    text = json.dumps(records, indent=2, sort_keys=True)
    if spec.out:
        with open(spec.out, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "sweep": _cmd_sweep,
        "converge": _cmd_converge,
        "timing": _cmd_timing,
        "solve": _cmd_solve,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
