"""Seeded Monte Carlo experiments over channel draws.

One experiment sweeps a single parameter (task bits, block length, user
count, or antenna count), draws fresh user distances and channels per trial
from per-trial RNG substreams, runs the requested solvers, and aggregates
per-solver energy statistics into a CSV.  Everything downstream of
``(spec, seed)`` is deterministic, including the CSV bytes; wall-clock
measurements are therefore kept out of the default sweep output (the runtime
column reads 0 unless ``measure_runtime`` is set) and the dedicated timing
table carries them instead.
"""

from __future__ import annotations

import dataclasses
import io
import json
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import benchmarks, binary
from .channel import PathLossModel, draw_channel_matrix, trial_rng
from .partial import DEFAULT_EPS, DEFAULT_RADIUS, SystemConfig, UserProfile, solve_p1

SWEEP_VARS = ("task_bits", "block_length", "user_count", "antenna_count")
SOLVER_NAMES = (
    "p1", "local", "full", "oma_partial",
    "bnb", "greedy", "relaxation", "exhaustive", "oma_binary",
)
EXHAUSTIVE_MAX_USERS = 10
BNB_MAX_USERS = 14

CSV_HEADER = "grid_value,solver,mean_energy_j,std_energy_j,mean_runtime_s,trials_ok,trials_failed"


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one batch experiment."""

    sweep_var: str = "task_bits"
    grid: Tuple[float, ...] = (1e5, 3e5, 5e5, 7e5)
    trials: int = 50
    seed: int = 0
    solvers: Tuple[str, ...] = ("p1", "local", "full", "oma_partial")
    users: int = 4
    antennas: int = 4
    block_s: float = 0.2
    task_bits: float = 5e5
    window_fraction: float = 0.9
    bandwidth_hz: float = 2e6
    noise_psd_dbm_per_hz: float = -174.0
    reference_gain_db: float = -40.0
    reference_distance_m: float = 1.0
    pathloss_exponent: float = 3.5
    cycles_per_bit: float = 4e3
    capacitance: float = 1e-28
    weight: float = 1.0
    distance_min_m: float = 100.0
    distance_max_m: float = 400.0
    eps: float = DEFAULT_EPS
    eps_gap: float = 1e-3
    measure_runtime: bool = False
    force_exhaustive: bool = False
    out: Optional[str] = None

    def __post_init__(self):
        if self.sweep_var not in SWEEP_VARS:
            raise ValueError(f"sweep_var must be one of {SWEEP_VARS}")
        if not self.grid:
            raise ValueError("grid must be nonempty")
        if self.trials < 1:
            raise ValueError("trial count must be at least 1")
        bad = [s for s in self.solvers if s not in SOLVER_NAMES]
        if bad:
            raise ValueError(f"unknown solvers {bad}; choose from {SOLVER_NAMES}")

    def pathloss_model(self) -> PathLossModel:
        return PathLossModel(
            reference_gain_db=self.reference_gain_db,
            reference_distance_m=self.reference_distance_m,
            exponent=self.pathloss_exponent,
            noise_psd_dbm_per_hz=self.noise_psd_dbm_per_hz,
            bandwidth_hz=self.bandwidth_hz,
        )

    def point(self, grid_value: float) -> Tuple[int, int, float, float]:
        """(users, antennas, block_s, task_bits) at one grid point."""
        users, antennas = self.users, self.antennas
        block, bits = self.block_s, self.task_bits
        if self.sweep_var == "task_bits":
            bits = float(grid_value)
        elif self.sweep_var == "block_length":
            block = float(grid_value)
        elif self.sweep_var == "user_count":
            users = int(round(grid_value))
        else:
            antennas = int(round(grid_value))
        return users, antennas, block, bits

    def config_for(self, block_s: float, antennas: int) -> SystemConfig:
        return SystemConfig(
            block_length_s=block_s,
            offload_window_s=self.window_fraction * block_s,
            bandwidth_hz=self.bandwidth_hz,
            antenna_count=antennas,
        )


def make_instance(spec: ExperimentSpec, grid_index: int, trial: int):
    """Draw the profiles and config of one trial (deterministic substream)."""
    users, antennas, block, bits = spec.point(spec.grid[grid_index])
    rng = trial_rng(spec.seed, grid_index, trial)
    distances = rng.uniform(spec.distance_min_m, spec.distance_max_m, users)
    channels = draw_channel_matrix(spec.pathloss_model(), distances, antennas, rng)
    profiles = [
        UserProfile(
            task_bits=bits,
            cycles_per_bit=spec.cycles_per_bit,
            capacitance=spec.capacitance,
            weight=spec.weight,
            channel=channels[k],
        )
        for k in range(users)
    ]
    return profiles, spec.config_for(block, antennas)


def solver_allowed(name: str, users: int, force: bool) -> bool:
    if name == "exhaustive" and users > EXHAUSTIVE_MAX_USERS and not force:
        return False
    if name in ("bnb", "oma_binary") and users > BNB_MAX_USERS and not force:
        return False
    return True


def run_solver(name: str, profiles, config, spec: ExperimentSpec) -> float:
    """Dispatch one solver and return its weighted sum-energy."""
    if name == "p1":
        return solve_p1(profiles, config, eps=spec.eps).weighted_total
    if name == "local":
        return benchmarks.local_only(profiles, config)[0]
    if name == "full":
        return benchmarks.full_offload(profiles, config, eps=spec.eps).weighted_total
    if name == "oma_partial":
        return benchmarks.oma_partial(profiles, config).weighted_total
    if name == "bnb":
        return binary.solve_bnb(profiles, config, eps_gap=spec.eps_gap).value
    if name == "greedy":
        return binary.solve_greedy(profiles, config).value
    if name == "relaxation":
        return binary.solve_relaxation(profiles, config).value
    if name == "exhaustive":
        return binary.solve_exhaustive(profiles, config, force=spec.force_exhaustive).value
    if name == "oma_binary":
        return benchmarks.oma_binary(profiles, config, eps_gap=spec.eps_gap).value
    raise ValueError(f"unknown solver {name!r}")


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: List[dict]
    per_trial: Dict[Tuple[float, str], np.ndarray]
    csv_text: str
    manifest: dict


def _fmt(value: float) -> str:
    return format(float(value), ".12g")


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run the sweep, write the CSV (and manifest) if an output path is set.

    A solver failure on a trial is recorded and that (grid point, solver)
    mean excludes the trial; the whole run aborts once more than 10% of all
    solver runs have failed.
    """
    rows: List[dict] = []
    per_trial: Dict[Tuple[float, str], np.ndarray] = {}
    failures = 0
    planned = len(spec.grid) * spec.trials * len(spec.solvers)
    for gi, gval in enumerate(spec.grid):
        users, _, _, _ = spec.point(gval)
        names = [s for s in spec.solvers if solver_allowed(s, users, spec.force_exhaustive)]
        skipped = [s for s in spec.solvers if s not in names]
        if skipped:
            warnings.warn(f"grid value {gval}: solvers {skipped} disabled at K={users}")
        values = {name: np.full(spec.trials, np.nan) for name in names}
        runtimes = {name: np.zeros(spec.trials) for name in names}
        for t in range(spec.trials):
            profiles, config = make_instance(spec, gi, t)
            for name in names:
                start = time.perf_counter()
                try:
                    values[name][t] = run_solver(name, profiles, config, spec)
                except Exception as exc:  # recorded, trial excluded from the mean
                    failures += 1
                    warnings.warn(f"{name} failed on grid {gval} trial {t}: {exc}")
                    if failures > 0.1 * planned:
                        raise RuntimeError("more than 10% of solver runs failed") from exc
                runtimes[name][t] = time.perf_counter() - start
        for name in names:
            ok = np.isfinite(values[name])
            vals = values[name][ok]
            mean_rt = float(np.mean(runtimes[name])) if spec.measure_runtime else 0.0
            rows.append(
                {
                    "grid_value": float(gval),
                    "solver": name,
                    "mean_energy_j": float(np.mean(vals)) if vals.size else float("nan"),
                    "std_energy_j": float(np.std(vals)) if vals.size else float("nan"),
                    "mean_runtime_s": mean_rt,
                    "trials_ok": int(np.sum(ok)),
                    "trials_failed": int(spec.trials - np.sum(ok)),
                }
            )
            per_trial[(float(gval), name)] = values[name]

    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for row in rows:
        buf.write(
            ",".join(
                [
                    _fmt(row["grid_value"]),
                    row["solver"],
                    _fmt(row["mean_energy_j"]),
                    _fmt(row["std_energy_j"]),
                    _fmt(row["mean_runtime_s"]),
                    str(row["trials_ok"]),
                    str(row["trials_failed"]),
                ]
            )
            + "\n"
        )
    csv_text = buf.getvalue()
    manifest = {
        "spec": dataclasses.asdict(spec),
        "seed": spec.seed,
        "package": "noma-mec 0.1.0",
    }
    if spec.out:
        with open(spec.out, "w") as fh:
            fh.write(csv_text)
        with open(spec.out + ".manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
    return ExperimentResult(spec=spec, rows=rows, per_trial=per_trial,
                            csv_text=csv_text, manifest=manifest)


def run_convergence_trace(
    spec: ExperimentSpec,
    instance_seed: int = 0,
    out: Optional[str] = None,
) -> List[Tuple[int, float]]:
    """Relative best-objective error per dual iteration on one instance.

    Emits ``(iteration, |E(n) - E*| / E*)`` rows where ``E(n)`` is the best
    feasible objective found within ``n`` iterations and ``E*`` the final
    converged value.
    """
    users, antennas, block, bits = spec.users, spec.antennas, spec.block_s, spec.task_bits
    rng = trial_rng(instance_seed, 0, 0)
    distances = rng.uniform(spec.distance_min_m, spec.distance_max_m, users)
    channels = draw_channel_matrix(spec.pathloss_model(), distances, antennas, rng)
    profiles = [
        UserProfile(bits, spec.cycles_per_bit, spec.capacitance, spec.weight, channels[k])
        for k in range(users)
    ]
    config = spec.config_for(block, antennas)
    history: List[Tuple[int, float]] = []

    def hook(iteration: int, best_primal: float, best_dual: float) -> None:
        history.append((iteration, best_primal))

    solution = solve_p1(
        profiles, config, eps=spec.eps, initial_radius=DEFAULT_RADIUS, on_iteration=hook
    )
    final = solution.weighted_total
    trace = [
        (it, abs(val - final) / abs(final))
        for it, val in history
        if np.isfinite(val) and final != 0
    ]
    if out:
        with open(out, "w") as fh:
            fh.write("iteration,relative_error\n")
            for it, err in trace:
                fh.write(f"{it},{_fmt(err)}\n")
    return trace


def iterations_to_tolerance(trace: Sequence[Tuple[int, float]], tol: float) -> int:
    """First iteration whose best-so-far relative error is within ``tol``."""
    for it, err in trace:
        if err <= tol:
            return it
    return trace[-1][0] if trace else 0


def run_timing(spec: ExperimentSpec, out: Optional[str] = None) -> List[dict]:
    """Wall-clock table per solver at the spec's fixed configuration.

    Absolute numbers are hardware-specific; the table also reports each
    solver's runtime relative to the partial-offloading solver so orderings
    can be compared across machines.
    """
    timings = {name: [] for name in spec.solvers}
    energies = {name: [] for name in spec.solvers}
    for t in range(spec.trials):
        profiles, config = make_instance(
            dataclasses.replace(spec, sweep_var="task_bits", grid=(spec.task_bits,)), 0, t
        )
        for name in spec.solvers:
            if not solver_allowed(name, spec.users, spec.force_exhaustive):
                continue
            start = time.perf_counter()
            energies[name].append(run_solver(name, profiles, config, spec))
            timings[name].append(time.perf_counter() - start)
    base = np.mean(timings["p1"]) if timings.get("p1") else None
    rows = []
    for name in spec.solvers:
        if not timings[name]:
            continue
        mean_rt = float(np.mean(timings[name]))
        rows.append(
            {
                "solver": name,
                "mean_runtime_s": mean_rt,
                "ratio_vs_p1": mean_rt / base if base else float("nan"),
                "mean_energy_j": float(np.mean(energies[name])),
                "trials": len(timings[name]),
            }
        )
    if out:
        with open(out, "w") as fh:
            fh.write("solver,mean_runtime_s,ratio_vs_p1,mean_energy_j,trials\n")
            for row in rows:
                fh.write(
                    f"{row['solver']},{_fmt(row['mean_runtime_s'])},"
                    f"{_fmt(row['ratio_vs_p1'])},{_fmt(row['mean_energy_j'])},{row['trials']}\n"
                )
    return rows


def run_weight_tradeoff(
    profiles: Sequence[UserProfile],
    config: SystemConfig,
    n_points: int = 101,
    eps: float = DEFAULT_EPS,
) -> List[Tuple[float, float, float]]:
    """Two-user energy tradeoff: sweep the weight pair (a, 1-a) over a grid.

    Returns ``(alpha_1, E_1, E_2)`` per grid point.  Exact zero weights make
    the dual degenerate, so the endpoints are clamped to 1e-6.
    """
    if len(profiles) != 2:
        raise ValueError("the tradeoff sweep is defined for two users")
    out = []
    for alpha in np.linspace(0.0, 1.0, n_points):
        a1 = min(max(float(alpha), 1e-6), 1.0 - 1e-6)
        reweighted = [
            dataclasses.replace(profiles[0], weight=a1),
            dataclasses.replace(profiles[1], weight=1.0 - a1),
        ]
        sol = solve_p1(reweighted, config, eps=eps)
        e1 = float(sol.per_user_tx_energy[0] + sol.per_user_local_energy[0])
        e2 = float(sol.per_user_tx_energy[1] + sol.per_user_local_energy[1])
        out.append((float(alpha), e1, e2))
    return out
