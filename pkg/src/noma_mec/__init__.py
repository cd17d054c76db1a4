"""Energy-minimal multiuser computation offloading over a NOMA uplink.

Solvers for the convex partial-offloading problem (Lagrange dual
decomposition with ellipsoid price updates and time-sharing recovery) and
the NP-hard binary-offloading problem (branch-and-bound, greedy, convex
relaxation), the local/full/TDMA comparison schemes, and a seeded Monte
Carlo harness that reproduces the comparative energy experiments.
"""

from .benchmarks import OmaSolution, full_offload, local_only, oma_binary, oma_partial
from .binary import (
    BinarySolution,
    BnbNode,
    DecisionSets,
    branch_select,
    round_decision,
    solve_bnb,
    solve_exhaustive,
    solve_greedy,
    solve_relaxation,
    solve_sp,
    solve_sp_relaxed,
)
from .channel import PathLossModel, draw_channel, draw_channel_matrix, load_channel_matrix, save_channel_matrix, trial_rng
from .ellipsoid import EllipsoidState, ball, ellipsoid_maximize
from .errors import CapabilityError, InfeasibleRecovery, NumericalFailure
from .harness import ExperimentSpec, run_convergence_trace, run_experiment, run_timing
from .orthant import maximize_concave_orthant
from .partial import (
    OffloadSolution,
    SystemConfig,
    UserProfile,
    local_energy,
    power_subproblem,
    recover_timeshare,
    solve_p1,
    split_subproblem,
)
from .rate_region import RateSchedule, RateSegment, contains, sumrate_bound, vertex_rates
from .simplex import LpProblem, LpResult, lp_solve

__version__ = "0.1.0"

__all__ = [
    "BinarySolution", "BnbNode", "CapabilityError", "DecisionSets", "EllipsoidState",
    "ExperimentSpec", "InfeasibleRecovery", "LpProblem", "LpResult", "NumericalFailure",
    "OffloadSolution", "OmaSolution", "PathLossModel", "RateSchedule", "RateSegment",
    "SystemConfig", "UserProfile", "ball", "branch_select", "contains", "draw_channel",
    "draw_channel_matrix", "ellipsoid_maximize", "full_offload", "load_channel_matrix",
    "local_energy", "local_only", "lp_solve", "maximize_concave_orthant", "oma_binary",
    "oma_partial", "power_subproblem", "recover_timeshare", "round_decision",
    "run_convergence_trace", "run_experiment", "run_timing", "save_channel_matrix",
    "solve_bnb", "solve_exhaustive", "solve_greedy", "solve_p1", "solve_relaxation",
    "solve_sp", "solve_sp_relaxed", "split_subproblem", "sumrate_bound", "trial_rng",
    "vertex_rates",
]
