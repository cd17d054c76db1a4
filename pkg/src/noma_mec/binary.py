"""Binary offloading: exact branch-and-bound plus two cheap heuristics.

Each user either computes its whole task locally or offloads it completely.
Locking the decisions of two disjoint user sets gives the subproblem
SP(K0, K1): users in K0 compute locally (a closed-form energy), users in K1
must deliver all their bits over the uplink, and the rest stay binary.  With
a full partition SP is convex and is solved by the partial-offloading dual
solver with pinned splits; relaxing the leftover binary decisions to the
interval [0, 1] gives the bounding problem.

The branch-and-bound search is best-first on a priority queue keyed by the
node lower bound.  Lower bounds are the *dual* values of the relaxations, so
they are valid regardless of how accurately the inner solver converged;
upper bounds come from rounding the relaxed split and solving the resulting
full partition.  Branching picks the most undecided user (fractional split
closest to one half).  The greedy method moves one user at a time from local
to offload while that strictly helps; the relaxation method rounds a single
relaxed solve.  Both heuristics and the exhaustive reference reuse the same
inner machinery, and an alternative inner solver (e.g. the TDMA benchmark)
can be injected to run the same tree over a different physical layer.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CapabilityError
from .partial import OffloadSolution, SystemConfig, UserProfile, _stack, solve_p1

EXHAUSTIVE_MAX_USERS = 12


@dataclass(frozen=True)
class DecisionSets:
    """Disjoint sets of users locked to local computing / offloading."""

    locked_local: frozenset
    locked_offload: frozenset

    def __post_init__(self):
        if self.locked_local & self.locked_offload:
            raise ValueError("locked sets must be disjoint")

    def validate(self, n_users: int) -> None:
        for u in self.locked_local | self.locked_offload:
            if not 0 <= u < n_users:
                raise ValueError("locked user index out of range")

    def free_users(self, n_users: int) -> List[int]:
        locked = self.locked_local | self.locked_offload
        return [u for u in range(n_users) if u not in locked]

    def is_partition(self, n_users: int) -> bool:
        return not self.free_users(n_users)


def sets_from_xi(xi) -> DecisionSets:
    xi = np.asarray(xi)
    return DecisionSets(
        locked_local=frozenset(int(i) for i in np.where(xi < 0.5)[0]),
        locked_offload=frozenset(int(i) for i in np.where(xi >= 0.5)[0]),
    )


def split_bounds(sets: DecisionSets, bits: np.ndarray):
    """Per-user split bounds implementing the locks (free users keep [0, L])."""
    k = bits.shape[0]
    sets.validate(k)
    lo = np.zeros(k)
    hi = bits.copy()
    for u in sets.locked_local:
        hi[u] = 0.0
    for u in sets.locked_offload:
        lo[u] = bits[u]
    return list(zip(lo, hi))


@dataclass
class BnbNode:
    sets: DecisionSets
    lower_bound: float
    upper_bound: float
    relaxed_xi: np.ndarray
    node_id: int
    parent_id: int
    expanded: bool = False
    pruned: bool = False


@dataclass
class BinaryStats:
    convex_solves: int = 0
    nodes: int = 0
    iterations: int = 0
    certified: bool = True
    gap: float = 0.0


@dataclass
class BinarySolution:
    xi: np.ndarray
    inner: object
    value: float
    method: str
    stats: BinaryStats


@dataclass
class InnerSolvers:
    """Physical-layer hooks for the tree search.

    ``relax(sets)`` returns a certified lower bound, the fractional decision
    vector, and the relaxed solution; ``exact(sets)`` solves a full partition
    and returns (value, solution).
    """

    relax: Callable[[DecisionSets], Tuple[float, np.ndarray, object]]
    exact: Callable[[DecisionSets], Tuple[float, object]]
    counter: "SolveCounter" = field(default_factory=lambda: SolveCounter())


@dataclass
class SolveCounter:
    relax_calls: int = 0
    exact_calls: int = 0

    @property
    def total(self) -> int:
        return self.relax_calls + self.exact_calls


def solve_sp(sets: DecisionSets, profiles: Sequence[UserProfile], config: SystemConfig,
             eps: float = 1e-3) -> OffloadSolution:
    """Solve the convex subproblem of a full local/offload partition.

    Locked-local users contribute their closed-form computing energy; locked
    offloaders must deliver all task bits, so only their rate prices enter
    the dual.
    """
    bits = np.array([u.task_bits for u in profiles])
    if not sets.is_partition(bits.shape[0]):
        raise ValueError("solve_sp needs a full partition of the users")
    return solve_p1(profiles, config, eps=eps, bounds=split_bounds(sets, bits))


def solve_sp_relaxed(sets: DecisionSets, profiles: Sequence[UserProfile],
                     config: SystemConfig, eps: float = 1e-3):
    """Continuous relaxation of SP: free users may split in [0, L].

    Returns ``(lower_bound, xi, solution)`` where the bound is the certified
    dual value (a true lower bound on every binary completion of ``sets``)
    and ``xi`` is the fractional decision vector ``ell / L``.
    """
    bits = np.array([u.task_bits for u in profiles])
    sol = solve_p1(profiles, config, eps=eps, bounds=split_bounds(sets, bits))
    lower = sol.stats.dual_value if sol.stats is not None else sol.weighted_total
    with np.errstate(invalid="ignore", divide="ignore"):
        xi = np.where(bits > 0, sol.partition / np.where(bits > 0, bits, 1.0), 0.0)
    return float(lower), np.clip(xi, 0.0, 1.0), sol


def noma_inner(profiles: Sequence[UserProfile], config: SystemConfig,
               eps: float = 1e-3) -> InnerSolvers:
    counter = SolveCounter()

    def relax(sets: DecisionSets):
        counter.relax_calls += 1
        return solve_sp_relaxed(sets, profiles, config, eps=eps)

    def exact(sets: DecisionSets):
        counter.exact_calls += 1
        sol = solve_sp(sets, profiles, config, eps=eps)
        return sol.weighted_total, sol

    return InnerSolvers(relax=relax, exact=exact, counter=counter)


def round_decision(xi) -> DecisionSets:
    """Round a fractional decision vector; exactly 0.5 goes to offload."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < -1e-9) or np.any(xi > 1 + 1e-9):
        raise ValueError("fractional decisions must lie in [0, 1]")
    return sets_from_xi(xi)


def branch_select(xi, free_users: Sequence[int]) -> int:
    """Most undecided free user: smallest |xi - 1/2|, ties to smallest index."""
    if not free_users:
        raise ValueError("no free users to branch on")
    xi = np.asarray(xi, dtype=float)
    best, best_dist = None, np.inf
    for u in sorted(free_users):
        dist = abs(xi[u] - 0.5)
        if dist < best_dist - 1e-15:
            best, best_dist = u, dist
    return int(best)


class _Incumbent:
    def __init__(self):
        self.value = np.inf
        self.sets: Optional[DecisionSets] = None
        self.solution = None

    def offer(self, value: float, sets: DecisionSets, solution) -> None:
        if value < self.value:
            self.value, self.sets, self.solution = value, sets, solution


def _xi_of_sets(sets: DecisionSets, k: int) -> np.ndarray:
    xi = np.zeros(k, dtype=int)
    for u in sets.locked_offload:
        xi[u] = 1
    return xi


def solve_bnb(
    profiles: Sequence[UserProfile],
    config: SystemConfig,
    eps_gap: float = 1e-3,
    eps: float = 1e-3,
    inner: Optional[InnerSolvers] = None,
    node_cap: Optional[int] = None,
    trace: Optional[List[dict]] = None,
    method: str = "bnb",
) -> BinarySolution:
    """Globally solve the binary-offloading problem by branch-and-bound.

    Best-first search; a node is discarded once its lower bound cannot beat
    the incumbent by more than ``eps_gap * (1 + |incumbent|)``, and the
    search stops when the best open lower bound is within that tolerance of
    the incumbent.  Bounds are computed once per node.  ``trace`` collects
    per-node records (id, parent, sets, bounds, pruned flag) for rendering
    the search tree.
    """
    k = len(profiles)
    if inner is None:
        inner = noma_inner(profiles, config, eps=eps)
    if node_cap is None:
        node_cap = 2 ** (k + 1)
    memo: Dict[Tuple[frozenset, frozenset], Tuple[float, object]] = {}

    def exact_cached(sets: DecisionSets):
        key = (sets.locked_local, sets.locked_offload)
        if key not in memo:
            memo[key] = inner.exact(sets)
        return memo[key]

    incumbent = _Incumbent()
    nodes: List[BnbNode] = []
    heap: List[Tuple[float, int, BnbNode]] = []

    def evaluate(sets: DecisionSets, parent_id: int) -> BnbNode:
        lower, xi, _relaxed = inner.relax(sets)
        rounded = round_decision(xi)
        upper, rounded_sol = exact_cached(rounded)
        incumbent.offer(upper, rounded, rounded_sol)
        node = BnbNode(
            sets=sets, lower_bound=lower, upper_bound=upper,
            relaxed_xi=xi, node_id=len(nodes), parent_id=parent_id,
        )
        nodes.append(node)
        heapq.heappush(heap, (lower, node.node_id, node))
        return node

    evaluate(DecisionSets(frozenset(), frozenset()), parent_id=-1)
    certified = True
    iterations = 0
    while heap:
        tol = eps_gap * (1.0 + abs(incumbent.value))
        if heap[0][0] >= incumbent.value - tol:
            break  # best-first: every open node is within tolerance
        if len(nodes) >= node_cap:
            certified = False
            break
        _, _, node = heapq.heappop(heap)
        iterations += 1
        free = node.sets.free_users(k)
        if not free:
            continue
        node.expanded = True
        star = branch_select(node.relaxed_xi, free)
        evaluate(
            DecisionSets(node.sets.locked_local | {star}, node.sets.locked_offload),
            parent_id=node.node_id,
        )
        evaluate(
            DecisionSets(node.sets.locked_local, node.sets.locked_offload | {star}),
            parent_id=node.node_id,
        )

    open_bounds = [entry[0] for entry in heap]
    v_lower = min(open_bounds) if open_bounds else incumbent.value
    gap = max(incumbent.value - v_lower, 0.0)
    for node in nodes:
        if not node.expanded:
            node.pruned = True
    if trace is not None:
        for node in nodes:
            trace.append(
                {
                    "node": node.node_id,
                    "parent": node.parent_id,
                    "locked_local": sorted(node.sets.locked_local),
                    "locked_offload": sorted(node.sets.locked_offload),
                    "lower_bound": node.lower_bound,
                    "upper_bound": node.upper_bound,
                    "pruned": node.pruned,
                }
            )
    stats = BinaryStats(
        convex_solves=inner.counter.total,
        nodes=len(nodes),
        iterations=iterations,
        certified=certified and gap <= eps_gap * (1.0 + abs(incumbent.value)),
        gap=gap,
    )
    return BinarySolution(
        xi=_xi_of_sets(incumbent.sets, k),
        inner=incumbent.solution,
        value=incumbent.value,
        method=method,
        stats=stats,
    )


def solve_greedy(
    profiles: Sequence[UserProfile],
    config: SystemConfig,
    eps: float = 1e-3,
    inner: Optional[InnerSolvers] = None,
    method: str = "greedy",
) -> BinarySolution:
    """Move one user at a time from local to offload while it strictly helps.

    The starting value (everyone local) is the closed-form computing energy;
    each sweep solves one convex subproblem per remaining local user, so at
    most K(K+1)/2 solves happen overall.
    """
    k = len(profiles)
    if inner is None:
        inner = noma_inner(profiles, config, eps=eps)
    bits, cycles, capac, weight, _ = _stack(profiles)
    current_value = float(
        np.sum(weight * capac * cycles**3 * bits**3) / config.block_length_s**2
    )
    current_sets = DecisionSets(frozenset(range(k)), frozenset())
    current_sol = None
    iterations = 0
    for _ in range(k):
        best_value, best_sets, best_sol = np.inf, None, None
        for user in sorted(current_sets.locked_local):
            cand = DecisionSets(
                current_sets.locked_local - {user}, current_sets.locked_offload | {user}
            )
            value, sol = inner.exact(cand)
            if value < best_value:
                best_value, best_sets, best_sol = value, cand, sol
        iterations += 1
        if best_sets is None or best_value >= current_value:
            break
        current_value, current_sets, current_sol = best_value, best_sets, best_sol
    if current_sol is None:
        _, current_sol = inner.exact(current_sets)
        inner.counter.exact_calls -= 1  # materializing the all-local start is not a sweep solve
    stats = BinaryStats(
        convex_solves=inner.counter.total, nodes=0, iterations=iterations, certified=False,
        gap=math.nan,
    )
    return BinarySolution(
        xi=_xi_of_sets(current_sets, k), inner=current_sol, value=current_value,
        method=method, stats=stats,
    )


def solve_relaxation(
    profiles: Sequence[UserProfile],
    config: SystemConfig,
    eps: float = 1e-3,
    inner: Optional[InnerSolvers] = None,
    method: str = "relaxation",
) -> BinarySolution:
    """Round one continuous relaxation: exactly two convex solves."""
    k = len(profiles)
    if inner is None:
        inner = noma_inner(profiles, config, eps=eps)
    _, xi, _ = inner.relax(DecisionSets(frozenset(), frozenset()))
    rounded = round_decision(xi)
    value, sol = inner.exact(rounded)
    stats = BinaryStats(
        convex_solves=inner.counter.total, nodes=0, iterations=1, certified=False,
        gap=math.nan,
    )
    return BinarySolution(
        xi=_xi_of_sets(rounded, k), inner=sol, value=value, method=method, stats=stats
    )


def solve_exhaustive(
    profiles: Sequence[UserProfile],
    config: SystemConfig,
    eps: float = 1e-3,
    inner: Optional[InnerSolvers] = None,
    force: bool = False,
    method: str = "exhaustive",
) -> BinarySolution:
    """Reference solver: evaluate every one of the 2^K partitions."""
    k = len(profiles)
    if k > EXHAUSTIVE_MAX_USERS and not force:
        raise CapabilityError(
            f"exhaustive enumeration above {EXHAUSTIVE_MAX_USERS} users needs force=True"
        )
    if inner is None:
        inner = noma_inner(profiles, config, eps=eps)
    best_value, best_sets, best_sol = np.inf, None, None
    for mask in range(2**k):
        offload = frozenset(u for u in range(k) if mask >> u & 1)
        sets = DecisionSets(frozenset(range(k)) - offload, offload)
        value, sol = inner.exact(sets)
        if value < best_value:
            best_value, best_sets, best_sol = value, sets, sol
    stats = BinaryStats(
        convex_solves=inner.counter.total, nodes=2**k, iterations=2**k, certified=True,
        gap=0.0,
    )
    return BinarySolution(
        xi=_xi_of_sets(best_sets, k), inner=best_sol, value=best_value, method=method,
        stats=stats,
    )
