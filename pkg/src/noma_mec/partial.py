"""Weighted sum-energy minimization with partial offloading (the convex case).

Each user splits a task of ``L_k`` input bits between local computing, which
costs ``zeta_k C_k^3 (L_k - ell_k)^3 / T^2`` joules at the energy-optimal
constant CPU frequency ``C_k (L_k - ell_k) / T``, and offloading over the
NOMA uplink, which costs ``p_k * T_w`` joules of transmit energy subject to
the delivered-bits constraint ``r_k T_w >= ell_k`` with the rate tuple inside
the MAC polymatroid.

The solver runs a Lagrange dual decomposition.  Prices ``lam_k >= 0`` on the
rate constraints separate the problem into per-user scalar split problems
(closed form) and one weighted-rate power allocation whose optimum sits at a
polymatroid vertex once users are sorted by descending price.  A central-cut
ellipsoid drives the prices; termination is primal-dual: the loop stops when
a feasible primal rebuilt from the current prices is within ``eps`` of the
best dual value and complementary slackness holds, which reproduces the
reference iteration counts far earlier than the worst-case ellipsoid
certificate.  When prices tie, the primal rate tuple is recovered by
time-sharing among the decoding orders of the tied groups through a small LP.

Internally the ellipsoid iterates over bandwidth-scaled prices
``lam_tilde = B * lam`` so the dual optimum lands at O(0.01..1) under the
default system parameters and the default initial ball of radius 20 is
well matched; all public operations speak unscaled prices (joules per
bit/sec).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations, product
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .ellipsoid import ball, ellipsoid_maximize
from .errors import CapabilityError, InfeasibleRecovery, NumericalFailure
from .orthant import maximize_concave_orthant
from .rate_region import RateSchedule, RateSegment, contains, vertex_rates
from .simplex import LpProblem, lp_solve

_LN2 = math.log(2.0)

DEFAULT_EPS = 0.01
DEFAULT_RADIUS = 20.0
_ORDER_CAP = 5040  # 7! decoding orders; beyond this the LP itself is hopeless
_REGION_CHECK_MAX_USERS = 10


@dataclass(frozen=True)
class SystemConfig:
    """Block structure and radio constants shared by all users.

    ``offload_window_s`` is the transmission part of the block; the rest is
    reserved for remote execution and result feedback and is treated as a
    fixed overhead.
    """

    block_length_s: float
    offload_window_s: float
    bandwidth_hz: float
    antenna_count: int

    def __post_init__(self):
        if not 0.0 < self.offload_window_s <= self.block_length_s:
            raise ValueError("offload window must satisfy 0 < T_w <= T")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth must be positive")
        if self.antenna_count < 1:
            raise ValueError("need at least one receive antenna")


@dataclass(frozen=True)
class UserProfile:
    """Task and hardware description of one user.

    ``capacitance`` is the effective switched-capacitance coefficient of the
    chip; ``weight`` is the user's priority in the weighted sum-energy.
    """

    task_bits: float
    cycles_per_bit: float
    capacitance: float
    weight: float
    channel: np.ndarray

    def __post_init__(self):
        if self.task_bits < 0:
            raise ValueError("task_bits must be nonnegative")
        if self.cycles_per_bit <= 0 or self.capacitance <= 0:
            raise ValueError("cycles_per_bit and capacitance must be positive")
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")
        ch = np.asarray(self.channel)
        if ch.ndim != 1 or not np.all(np.isfinite(ch.view(float))):
            raise ValueError("channel must be a finite complex vector")


def local_energy(profile: UserProfile, local_bits: float, block_length_s: float) -> float:
    """Energy of computing ``local_bits`` within one block: zeta C^3 bits^3 / T^2."""
    if not 0.0 <= local_bits <= profile.task_bits * (1 + 1e-12):
        raise ValueError("local_bits must lie in [0, task_bits]")
    cycles3 = profile.cycles_per_bit**3
    return profile.capacitance * cycles3 * local_bits**3 / block_length_s**2


def _stack(profiles: Sequence[UserProfile]):
    bits = np.array([u.task_bits for u in profiles], dtype=float)
    cycles = np.array([u.cycles_per_bit for u in profiles], dtype=float)
    capac = np.array([u.capacitance for u in profiles], dtype=float)
    weight = np.array([u.weight for u in profiles], dtype=float)
    channels = np.asarray([np.asarray(u.channel, dtype=complex) for u in profiles])
    return bits, cycles, capac, weight, channels


def _bounds_arrays(bounds, bits: np.ndarray):
    if bounds is None:
        return np.zeros_like(bits), bits.copy()
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if lo.shape != bits.shape or hi.shape != bits.shape:
        raise ValueError("bounds length mismatch")
    if np.any(lo < -1e-9) or np.any(hi > bits * (1 + 1e-12) + 1e-9) or np.any(lo > hi + 1e-9):
        raise ValueError("bounds must satisfy 0 <= lo <= hi <= task_bits")
    return lo, np.minimum(hi, bits)


def _split_arrays(lam, bits, cycles, capac, weight, block, window, lo, hi) -> np.ndarray:
    out = np.empty_like(bits)
    for i in range(bits.shape[0]):
        if weight[i] <= 0.0:
            out[i] = lo[i] if lam[i] > 0.0 else hi[i]
        elif lam[i] <= 0.0:
            out[i] = hi[i]
        else:
            pull = block * math.sqrt(
                lam[i] / (3.0 * window * weight[i] * capac[i] * cycles[i] ** 3)
            )
            out[i] = min(max(bits[i] - pull, lo[i]), hi[i])
    return out


def split_subproblem(lam, profiles: Sequence[UserProfile], config: SystemConfig, bounds=None):
    """Per-user optimal task split for given rate prices.

    Minimizes ``alpha zeta C^3 (L - ell)^3 / T^2 + lam ell / T_w`` over the
    split bounds; the interior stationary point is
    ``ell = L - T sqrt(lam / (3 T_w alpha zeta C^3))`` and the cubic term
    makes clamping it to the bounds exact.  Zero-weight users fall to the
    lower bound whenever their price is positive (offloading cost dominates a
    weightless local term) and to the upper bound at zero price.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("prices must be nonnegative")
    bits, cycles, capac, weight, _ = _stack(profiles)
    lo, hi = _bounds_arrays(bounds, bits)
    return _split_arrays(
        lam, bits, cycles, capac, weight, config.block_length_s, config.offload_window_s, lo, hi
    )


class _PowerObjective:
    """Weighted-rate power allocation objective over sorted users.

    value(q) = -T_w sum_j alpha_j q_j + sum_j delta_j log2 det(A_j),
    A_j = I + sum_{i<=j} q_i h_i h_i^H, with delta_j >= 0 the scaled price
    gaps of the descending sort.  Gradient and Hessian follow from
    d log det A / dq = h^H A^-1 h; the Hessian entries are
    -(1/ln 2) sum_{j >= max(a,b)} delta_j |h_a^H A_j^-1 h_b|^2.
    """

    def __init__(self, deltas, hs, weights, window):
        self.deltas = deltas
        self.hs = hs
        self.weights = weights
        self.window = window
        self.k, self.n = hs.shape
        self._outer = [np.outer(hs[j], hs[j].conj()) for j in range(self.k)]
        self._x = None
        self._value = None
        self._grad = None
        self._quads: List[Tuple[int, np.ndarray]] = []

    def _compute(self, q: np.ndarray) -> None:
        a = np.eye(self.n, dtype=complex)
        value = -self.window * float(self.weights @ q)
        grad = -self.window * self.weights.copy()
        quads: List[Tuple[int, np.ndarray]] = []
        for j in range(self.k):
            a = a + q[j] * self._outer[j]
            if self.deltas[j] > 0.0:
                chol = np.linalg.cholesky(a)
                logdet2 = 2.0 * float(np.sum(np.log2(np.real(np.diag(chol)))))
                value += self.deltas[j] * logdet2
                sol = np.linalg.solve(a, self.hs[: j + 1].T)
                qmat = self.hs[: j + 1].conj() @ sol
                grad[: j + 1] += (self.deltas[j] / _LN2) * np.real(np.diag(qmat))
                quads.append((j, qmat))
        self._x = q.copy()
        self._value = value
        self._grad = grad
        self._quads = quads

    def value_and_grad(self, q):
        if self._x is None or not np.array_equal(self._x, q):
            self._compute(q)
        return self._value, self._grad.copy()

    def hessian(self, q):
        if self._x is None or not np.array_equal(self._x, q):
            self._compute(q)
        h = np.zeros((self.k, self.k))
        for j, qmat in self._quads:
            h[: j + 1, : j + 1] -= (self.deltas[j] / _LN2) * np.abs(qmat) ** 2
        return h


def _power_opt(lam, weight, channels, config, x0=None):
    k = lam.shape[0]
    order = np.argsort(-lam, kind="stable")
    lam_sorted = lam[order]
    tail = np.append(lam_sorted[1:], 0.0)
    deltas = config.bandwidth_hz * (lam_sorted - tail)
    objective = _PowerObjective(
        deltas, channels[order], weight[order], config.offload_window_s
    )
    scale = 1.0 + config.offload_window_s * float(np.max(weight, initial=0.0))
    start = None if x0 is None else np.asarray(x0, dtype=float)[order]
    res = maximize_concave_orthant(
        objective.value_and_grad,
        k,
        hessian=objective.hessian,
        x0=start,
        tol=1e-8 * scale,
        max_iter=300,
    )
    if res.residual > 1e-4 * scale:
        raise NumericalFailure(
            f"power allocation did not reach stationarity (residual {res.residual:.3e})"
        )
    p = np.zeros(k)
    p[order] = res.x
    rates = vertex_rates(p, order, channels, config.bandwidth_hz)
    return p, tuple(int(u) for u in order), rates


def power_subproblem(lam, profiles: Sequence[UserProfile], config: SystemConfig, x0=None):
    """Optimal transmit powers and vertex rates for given rate prices.

    Users are sorted by descending price (stable in user index), the
    weighted-rate concave program is solved over the nonnegative orthant by
    projected Newton, and the rate tuple is the vertex of the sort order.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("prices must be nonnegative")
    _, _, _, weight, channels = _stack(profiles)
    if np.any((weight <= 0.0) & (lam > 0.0)):
        raise ValueError(
            "a zero-weight user with a positive rate price makes the power problem unbounded"
        )
    return _power_opt(lam, weight, channels, config, x0=x0)


def _price_groups(scaled_lam: np.ndarray, tie_tol: float) -> List[List[int]]:
    """Cluster users whose scaled prices agree within ``tie_tol``.

    Users are sorted by descending price (ties broken by index); consecutive
    gaps below the tolerance merge into one group.
    """
    order = np.argsort(-scaled_lam, kind="stable")
    groups: List[List[int]] = [[int(order[0])]]
    for idx in order[1:]:
        if scaled_lam[groups[-1][-1]] - scaled_lam[idx] <= tie_tol:
            groups[-1].append(int(idx))
        else:
            groups.append([int(idx)])
    return groups


def _orders_from_groups(
    groups: List[List[int]], cap: int, rotations_fallback: bool = False
) -> List[Tuple[int, ...]]:
    count = 1
    for g in groups:
        count *= math.factorial(len(g))
    if count > cap:
        if not rotations_fallback:
            raise CapabilityError(
                f"{count} tied decoding orders exceed the enumeration cap ({cap})"
            )
        # Cyclic rotations within each tied group: |J| orders per group give
        # every member each decode position, enough vertices for recovery.
        perms = []
        for g in groups:
            g = sorted(g)
            perms.append([tuple(g[i:] + g[:i]) for i in range(len(g))])
    else:
        perms = [list(permutations(sorted(g))) for g in groups]
    orders = []
    for combo in product(*perms):
        flat: Tuple[int, ...] = tuple(u for blk in combo for u in blk)
        orders.append(flat)
        if len(orders) >= cap:
            break
    return orders


def _timeshare_lp(orders, targets, p, channels, bandwidth_hz, window, prices=None):
    """Segment-duration LP delivering the bit targets.

    Works in normalized durations u_i = t_i / window; row k reads
    sum_i (r_k^(i) window / s_k) u_i >= targets_k / s_k with s_k = max(targets_k, 1)
    so the coefficients are O(1).  The default objective minimizes total time
    so delivery carries no spurious slack; passing ``prices`` minimizes the
    price-weighted delivered bits instead, which drives the complementary
    slackness residual of the recovered point to its attainable minimum.
    Returns (durations, rate matrix) or None when infeasible.
    """
    rate_rows = np.array(
        [vertex_rates(p, order, channels, bandwidth_hz) for order in orders]
    )  # (n_orders, K)
    n_orders = len(orders)
    need = np.where(targets > 0.0)[0]
    a_rows = []
    b_rows = []
    for k in need:
        s = max(targets[k], 1.0)
        a_rows.append(-rate_rows[:, k] * window / s)
        b_rows.append(-targets[k] / s)
    a_rows.append(np.ones(n_orders))
    b_rows.append(1.0)
    if prices is None:
        objective = np.ones(n_orders)
    else:
        objective = rate_rows @ prices
        top = float(np.max(np.abs(objective), initial=0.0))
        objective = objective / top + 1e-6 * np.ones(n_orders) if top > 0 else np.ones(n_orders)
    problem = LpProblem(
        objective=objective,
        a_ub=np.asarray(a_rows),
        b_ub=np.asarray(b_rows),
    )
    res = lp_solve(problem)
    if res.status != "feasible":
        return None
    durations = np.maximum(res.x, 0.0) * window
    return durations, rate_rows


def recover_timeshare(
    lam,
    ell,
    p,
    profiles: Sequence[UserProfile],
    config: SystemConfig,
    tie_tol: Optional[float] = None,
) -> RateSchedule:
    """Build a rate schedule delivering ``ell`` at the dual optimum.

    Prices are clustered into tie groups (tolerance relative to the scaled
    price magnitude); with all groups singleton the sorted order is optimal
    for the whole window.  Otherwise all decoding orders consistent with the
    tie structure are enumerated, and a feasibility LP over segment durations
    picks a time-sharing schedule; total time is minimized so the delivered
    bits carry no spurious slack.
    """
    lam = np.asarray(lam, dtype=float)
    ell = np.asarray(ell, dtype=float)
    p = np.asarray(p, dtype=float)
    _, _, _, _, channels = _stack(profiles)
    scaled = config.bandwidth_hz * lam
    if tie_tol is None:
        tie_tol = 1e-4 * (1.0 + float(np.max(np.abs(scaled), initial=0.0)))
    groups = _price_groups(scaled, tie_tol)
    if all(len(g) == 1 for g in groups):
        order = tuple(u for g in groups for u in g)
        rates = vertex_rates(p, order, channels, config.bandwidth_hz)
        seg = RateSegment(duration=config.offload_window_s, order=order, rates=rates)
        return RateSchedule(segments=(seg,), window=config.offload_window_s)
    orders = _orders_from_groups(groups, _ORDER_CAP)
    out = _timeshare_lp(
        orders, ell, p, channels, config.bandwidth_hz, config.offload_window_s
    )
    if out is None:
        raise InfeasibleRecovery(
            "time-sharing LP infeasible; loosen the tie tolerance or tighten the dual accuracy"
        )
    durations, rate_rows = out
    segments = tuple(
        RateSegment(duration=float(d), order=orders[i], rates=rate_rows[i])
        for i, d in enumerate(durations)
        if d > 1e-12 * config.offload_window_s
    )
    return RateSchedule(segments=segments, window=config.offload_window_s)


@dataclass
class SolveStats:
    """Diagnostics of one dual solve (not part of the solution record)."""

    iterations: int
    dual_value: float
    primal_value: float
    gap: float
    cs_residual: float
    certificate: float
    converged: bool
    reason: str
    prices: np.ndarray


@dataclass
class OffloadSolution:
    """A feasible operating point with its energy accounting."""

    partition: np.ndarray
    powers: np.ndarray
    schedule: RateSchedule
    per_user_tx_energy: np.ndarray
    per_user_local_energy: np.ndarray
    weighted_total: float
    cpu_frequencies: np.ndarray
    stats: Optional[SolveStats] = None

    def validate(self, profiles: Sequence[UserProfile], config: SystemConfig) -> None:
        bits, cycles, capac, weight, channels = _stack(profiles)
        k = bits.shape[0]
        tol_bits = np.maximum(1.0, 1e-6 * bits)
        if np.any(self.partition < -1e-9) or np.any(self.partition > bits + tol_bits):
            raise ValueError("partition outside [0, task_bits]")
        if np.any(self.powers < -1e-12):
            raise ValueError("negative transmit power")
        window = config.offload_window_s
        self.schedule.validate(self.powers, channels, config.bandwidth_hz)
        delivered = self.schedule.effective_rates * window
        if np.any(delivered < self.partition - tol_bits):
            raise ValueError("schedule does not deliver the offloaded bits")
        local = capac * cycles**3 * (bits - self.partition) ** 3 / config.block_length_s**2
        if np.max(np.abs(local - self.per_user_local_energy)) > 1e-9 * (1 + np.max(local)):
            raise ValueError("local energy inconsistent")
        tx = self.powers * window
        if np.max(np.abs(tx - self.per_user_tx_energy)) > 1e-9 * (1 + np.max(tx)):
            raise ValueError("transmit energy inconsistent")
        total = float(weight @ (local + tx))
        if abs(total - self.weighted_total) > 1e-9 * (1.0 + abs(total)):
            raise ValueError("weighted total inconsistent")
        freqs = cycles * (bits - self.partition) / config.block_length_s
        if np.max(np.abs(freqs - self.cpu_frequencies)) > 1e-6 * (1 + np.max(freqs)):
            raise ValueError("CPU frequencies inconsistent")
        total_dur = self.schedule.total_duration
        if k <= _REGION_CHECK_MAX_USERS and total_dur > 0:
            avg = self.schedule.effective_rates * window / total_dur
            if not contains(self.powers, avg, channels, config.bandwidth_hz, rtol=1e-6):
                raise ValueError("schedule rates leave the capacity region")

    def to_record(self) -> dict:
        return {
            "partition_bits": [float(v) for v in self.partition],
            "powers_w": [float(v) for v in self.powers],
            "segments": [
                {
                    "duration_s": float(seg.duration),
                    "order": [int(u) for u in seg.order],
                    "rates_bps": [float(r) for r in seg.rates],
                }
                for seg in self.schedule.segments
            ],
            "window_s": float(self.schedule.window),
            "per_user_tx_energy_j": [float(v) for v in self.per_user_tx_energy],
            "per_user_local_energy_j": [float(v) for v in self.per_user_local_energy],
            "weighted_total_j": float(self.weighted_total),
            "cpu_frequencies_hz": [float(v) for v in self.cpu_frequencies],
        }

    @classmethod
    def from_record(cls, record: dict) -> "OffloadSolution":
        segments = tuple(
            RateSegment(
                duration=seg["duration_s"],
                order=tuple(seg["order"]),
                rates=np.asarray(seg["rates_bps"], dtype=float),
            )
            for seg in record["segments"]
        )
        return cls(
            partition=np.asarray(record["partition_bits"], dtype=float),
            powers=np.asarray(record["powers_w"], dtype=float),
            schedule=RateSchedule(segments=segments, window=record["window_s"]),
            per_user_tx_energy=np.asarray(record["per_user_tx_energy_j"], dtype=float),
            per_user_local_energy=np.asarray(record["per_user_local_energy_j"], dtype=float),
            weighted_total=float(record["weighted_total_j"]),
            cpu_frequencies=np.asarray(record["cpu_frequencies_hz"], dtype=float),
        )


@dataclass
class _Candidate:
    value: float
    ell: np.ndarray
    p: np.ndarray
    segments: List[Tuple[float, Tuple[int, ...], np.ndarray]]
    r_eff: np.ndarray


class _DualSearch:
    """Closure state for one P1 dual solve over the active users.

    The ellipsoid iterates over preconditioned prices: each user's price is
    divided by its natural scale ``B T_w 3 alpha zeta C^3 L^2 / T^2`` (the
    scaled marginal local-energy price of the first offloaded bit).  In these
    units the free-split dual optimum always lies in [0, 1] per user, so the
    default ball of radius 20 contains it for every channel realization.
    """

    def __init__(self, bits, cycles, capac, weight, channels, lo, hi, config,
                 base_local: float, eps: float, cs_tol: Optional[float]):
        self.bits, self.cycles, self.capac, self.weight = bits, cycles, capac, weight
        self.channels, self.lo, self.hi, self.config = channels, lo, hi, config
        self.base_local = base_local
        self.eps, self.cs_tol = eps, cs_tol
        self.window = config.offload_window_s
        self.block = config.block_length_s
        self.bw = config.bandwidth_hz
        # Per-user price unit: 1/8 of the saturation price of the split
        # subproblem, calibrated so the reference ball (radius 20) stands in
        # the same proportion to typical optima as in the reference runs.
        self.scale = (
            self.bw * self.window * 0.375 * weight * capac * cycles**3 * bits**2
            / self.block**2
        )
        self.tol_bits = np.maximum(1.0, 1e-6 * bits)
        self.best_dual = -np.inf
        self.best_dual_lam: Optional[np.ndarray] = None
        self.best_dual_hat: Optional[np.ndarray] = None
        self.best_cand: Optional[_Candidate] = None
        self.last_cands: List[_Candidate] = []
        self.stop_cand: Optional[_Candidate] = None
        self.warm: Optional[np.ndarray] = None
        self.calls = 0
        if np.all(lo <= 1e-12):
            zero = np.zeros_like(bits)
            self.best_cand = _Candidate(
                value=self._energy(zero, zero), ell=zero, p=zero, segments=[], r_eff=zero
            )

    def _energy(self, ell, p) -> float:
        local = self.capac * self.cycles**3 * (self.bits - ell) ** 3 / self.block**2
        return float(self.weight @ (local + p * self.window)) + self.base_local

    def _scale_to_deliver(self, p, order, targets):
        """Smallest power scaling s >= 1 whose vertex rates deliver the targets."""

        def delivered(s):
            return vertex_rates(s * p, order, self.channels, self.bw) * self.window

        if np.all(delivered(1.0) >= targets - self.tol_bits):
            return 1.0
        s_hi = 2.0
        while s_hi < 2.0**40 and np.any(delivered(s_hi) < targets):
            s_hi *= 4.0
        if np.any(delivered(s_hi) < targets):
            return None
        s_lo = max(1.0, s_hi / 4.0)
        for _ in range(40):
            mid = math.sqrt(s_lo * s_hi)
            if np.all(delivered(mid) >= targets):
                s_hi = mid
            else:
                s_lo = mid
        return s_hi

    def _polish_candidate(self, ell_star, order) -> Optional[_Candidate]:
        """Exact-delivery powers for the current order.

        Inverts the prefix-determinant recursion: with users decoded in the
        given order, det A_k = det A_{k-1} (1 + p h^H A_{k-1}^-1 h), so the
        power that delivers exactly ell/T_w follows user by user.  The result
        is always feasible and has zero slackness residual by construction.
        """
        n = self.channels.shape[1]
        a = np.eye(n, dtype=complex)
        p = np.zeros_like(ell_star)
        for u in order:
            target = ell_star[u] / (self.window * self.bw)  # bits/s/Hz
            if target > 0.0:
                h = self.channels[u]
                quad = float(np.real(h.conj() @ np.linalg.solve(a, h)))
                if quad <= 0.0 or target > 250.0:
                    return None
                p[u] = (2.0**target - 1.0) / quad
                a = a + p[u] * np.outer(h, h.conj())
        rates = vertex_rates(p, order, self.channels, self.bw)
        if np.any(rates * self.window < ell_star - self.tol_bits):
            return None
        return _Candidate(
            value=self._energy(ell_star, p), ell=ell_star, p=p,
            segments=[(self.window, order, rates)], r_eff=rates,
        )

    def _tie_candidate(self, lam_t, ell_star, p_star, rel_tol: float,
                       cap: int = 24) -> Optional[_Candidate]:
        tie_tol = rel_tol * (1.0 + float(np.max(np.abs(lam_t), initial=0.0)))
        groups = _price_groups(lam_t, tie_tol)
        if all(len(g) == 1 for g in groups):
            return None
        orders = _orders_from_groups(groups, cap, rotations_fallback=True)
        lam = lam_t / self.bw
        out = _timeshare_lp(orders, ell_star, p_star, self.channels, self.bw, self.window,
                            prices=lam)
        if out is None:
            return None
        durations, rate_rows = out
        segments = [
            (float(d), orders[i], rate_rows[i])
            for i, d in enumerate(durations)
            if d > 1e-12 * self.window
        ]
        r_eff = np.zeros_like(ell_star)
        for d, _, rates in segments:
            r_eff = r_eff + d * rates
        r_eff /= self.window
        if np.any(r_eff * self.window < ell_star - self.tol_bits):
            return None
        return _Candidate(
            value=self._energy(ell_star, p_star), ell=ell_star, p=p_star,
            segments=segments, r_eff=r_eff,
        )

    def _candidates(self, lam_t, ell_star, p_star, order, rates, force_ties: bool):
        cands: List[_Candidate] = []
        delivered = rates * self.window
        if np.all(delivered >= self.lo - self.tol_bits):
            ell_hat = np.clip(np.minimum(ell_star, delivered), self.lo, self.hi)
            cands.append(
                _Candidate(
                    value=self._energy(ell_hat, p_star), ell=ell_hat, p=p_star,
                    segments=[(self.window, order, rates)], r_eff=rates,
                )
            )
        polish = self._polish_candidate(ell_star, order)
        if polish is not None:
            cands.append(polish)
        deficit = ell_star - delivered > self.tol_bits
        if polish is None and np.any(deficit):
            hopeless = deficit & (rates <= 0.0)
            if not np.any(hopeless):
                s = self._scale_to_deliver(p_star, order, ell_star)
                if s is not None:
                    p_s = s * p_star
                    rates_s = vertex_rates(p_s, order, self.channels, self.bw)
                    cands.append(
                        _Candidate(
                            value=self._energy(ell_star, p_s), ell=ell_star, p=p_s,
                            segments=[(self.window, order, rates_s)], r_eff=rates_s,
                        )
                    )
        near_target = False
        if self.best_cand is not None and np.isfinite(self.best_dual):
            rel_gap = (self.best_cand.value - self.best_dual) / (1.0 + abs(self.best_cand.value))
            near_target = rel_gap <= 3.0 * self.eps
        if force_ties:
            for rel_tol in (1e-4, 2e-3, 2e-2):
                tie = self._tie_candidate(lam_t, ell_star, p_star, rel_tol, cap=720)
                if tie is not None:
                    cands.append(tie)
        elif near_target or self.calls % 5 == 0:
            tie = self._tie_candidate(lam_t, ell_star, p_star, 2e-3)
            if tie is not None:
                cands.append(tie)
        self.last_cands = cands
        for cand in cands:
            if self.best_cand is None or cand.value < self.best_cand.value:
                self.best_cand = cand

    def oracle(self, lam_hat: np.ndarray):
        self.calls += 1
        lam_t = lam_hat * self.scale  # bandwidth-scaled prices
        lam = lam_t / self.bw  # spec units, J per bit/s
        ell_star = _split_arrays(
            lam, self.bits, self.cycles, self.capac, self.weight,
            self.block, self.window, self.lo, self.hi,
        )
        p_star, order, rates = _power_opt(lam, self.weight, self.channels, self.config,
                                          x0=self.warm)
        self.warm = p_star
        local = self.capac * self.cycles**3 * (self.bits - ell_star) ** 3 / self.block**2
        g = (
            float(self.weight @ local)
            + float(lam @ ell_star) / self.window
            - (float(lam @ rates) - self.window * float(self.weight @ p_star))
            + self.base_local
        )
        if g > self.best_dual:
            self.best_dual = g
            self.best_dual_lam = lam_t.copy()
            self.best_dual_hat = lam_hat.copy()
        self._candidates(lam_t, ell_star, p_star, order, rates, force_ties=False)
        supergrad = self.scale * (ell_star / self.window - rates) / self.bw
        return g, supergrad

    def cs_residual(self, cand: _Candidate) -> float:
        if self.best_dual_lam is None:
            return np.inf
        lam = self.best_dual_lam / self.bw
        excess = np.maximum(cand.r_eff - cand.ell / self.window, 0.0)
        return float(np.max(lam * excess, initial=0.0))

    def termination(self, cand: Optional[_Candidate]) -> Tuple[bool, float, float]:
        if cand is None or not np.isfinite(self.best_dual):
            return False, np.inf, np.inf
        scale = 1.0 + abs(cand.value)
        gap = cand.value - self.best_dual
        cs = self.cs_residual(cand)
        ok = gap <= self.eps * scale
        if self.cs_tol is not None:
            ok = ok and cs <= self.cs_tol * scale
        return ok, gap, cs

    def check_stop(self) -> bool:
        """Accept the first candidate certified on both the gap and CS."""
        pool = list(self.last_cands)
        if self.best_cand is not None:
            pool.append(self.best_cand)
        best_ready = self.stop_cand
        for cand in pool:
            ok, _, _ = self.termination(cand)
            if ok and (best_ready is None or cand.value < best_ready.value):
                best_ready = cand
        self.stop_cand = best_ready
        return best_ready is not None


def solve_p1(
    profiles: Sequence[UserProfile],
    config: SystemConfig,
    eps: float = DEFAULT_EPS,
    initial_radius: float = DEFAULT_RADIUS,
    bounds=None,
    cs_tol: Optional[float] = None,
    max_iter: int = 50_000,
    on_iteration: Optional[Callable[[int, float, float], None]] = None,
) -> OffloadSolution:
    """Globally solve the partial-offloading energy minimization.

    ``bounds`` optionally pins or boxes each user's offloaded bits (used for
    the full-offload benchmark and the binary-offloading subproblems); the
    default is the free split [0, L_k].  ``on_iteration(n, best_primal,
    best_dual)`` is invoked once per dual iteration for convergence traces.

    Termination requires a feasible primal within ``eps * (1 + |E|)`` of the
    best dual value; passing ``cs_tol`` additionally demands a complementary
    slackness residual below ``cs_tol * (1 + |E|)`` (the residual is reported
    in the stats either way).  The ellipsoid certificate and volume bound act
    as fallbacks.  Local-only computing is always feasible, so the returned
    solution exists for every instance.
    """
    return _solve_p1_radius(
        profiles, config, eps, initial_radius, bounds, cs_tol, max_iter, on_iteration,
        escalations=2, iteration_base=0,
    )


def _price_cap_radius(bits, cycles, capac, weight, channels, lo, hi, config) -> float:
    """Radius of a ball guaranteed to contain a dual optimum (normalized prices).

    Two sound per-user caps on the bandwidth-scaled price: the split
    stationarity saturates at ``B T_w 3 alpha zeta C^3 (L - lo)^2 / T^2``
    (beyond it the split sticks to its lower bound, so some maximizer lies
    below), and for users that must transmit, the power stationarity gives
    ``lam_tilde <= T_w alpha ln2 det(A*) / ||h||^2`` with
    ``det(A*) = 2^(sum delivered / (T_w B)) <= 2^(sum hi / (T_w B))``.
    The result is expressed in the per-user normalized units the ellipsoid
    iterates in.
    """
    window, block, bw = config.offload_window_s, config.block_length_s, config.bandwidth_hz
    gains = np.maximum(np.sum(np.abs(channels) ** 2, axis=1), 1e-300)
    exponent = min(float(np.sum(hi)) / (window * bw), 300.0)
    power_cap = window * weight * _LN2 * 2.0**exponent / gains
    split_cap = bw * window * 3.0 * weight * capac * cycles**3 * (bits - lo) ** 2 / block**2
    caps = np.where(lo >= hi, power_cap, np.minimum(power_cap, split_cap))
    scale = bw * window * 3.0 * weight * capac * cycles**3 * bits**2 / block**2
    return 1.25 * float(np.linalg.norm(caps / np.maximum(scale, 1e-300)))


def _solve_p1_radius(
    profiles, config, eps, initial_radius, bounds, cs_tol, max_iter, on_iteration,
    escalations: int, iteration_base: int,
) -> OffloadSolution:
    bits, cycles, capac, weight, channels = _stack(profiles)
    k = bits.shape[0]
    lo, hi = _bounds_arrays(bounds, bits)
    if np.any((hi > 0.0) & (weight <= 0.0)):
        raise ValueError("users that may offload need a strictly positive energy weight")

    active = np.where(hi > 0.0)[0]
    inactive = np.where(hi <= 0.0)[0]
    base_local = float(
        np.sum(
            weight[inactive]
            * capac[inactive]
            * cycles[inactive] ** 3
            * bits[inactive] ** 3
        )
        / config.block_length_s**2
    )

    if active.size == 0:
        return _assemble(
            profiles, config, np.zeros(k), np.zeros(k), [], None, k,
            np.arange(k), np.array([], dtype=int),
        )

    search = _DualSearch(
        bits[active], cycles[active], capac[active], weight[active], channels[active],
        lo[active], hi[active], config, base_local, eps, cs_tol,
    )

    radius = initial_radius
    if np.any((lo[active] >= hi[active]) & (hi[active] > 0)):
        # Pinned splits have no split-stationarity price cap; size the ball
        # from the analytic bound up front to avoid a wasted first pass.
        radius = max(
            radius,
            _price_cap_radius(
                bits[active], cycles[active], capac[active], weight[active],
                channels[active], lo[active], hi[active], config,
            ),
        )

    def callback(state, best_val, certificate):
        # Trace indices count dual-function evaluations: coordinate cuts that
        # keep the center in the orthant evaluate nothing.
        stop = search.check_stop()
        if on_iteration is not None:
            primal = search.best_cand.value if search.best_cand is not None else math.nan
            on_iteration(iteration_base + search.calls, primal, search.best_dual)
        return stop

    cert_tol = 0.25 * eps if cs_tol is None else 0.1 * min(eps, cs_tol)
    result = ellipsoid_maximize(
        search.oracle,
        ball(active.size, radius),
        tol=cert_tol,
        max_iter=max_iter,
        keep_nonnegative=True,
        callback=callback,
    )

    if search.stop_cand is None and search.best_dual_lam is not None:
        # Rebuild the primal at the best prices with the full recovery grid.
        lam_t = search.best_dual_lam
        lam = lam_t / config.bandwidth_hz
        ell_star = _split_arrays(
            lam, search.bits, search.cycles, search.capac, search.weight,
            search.block, search.window, search.lo, search.hi,
        )
        p_star, order, rates = _power_opt(
            lam, search.weight, search.channels, config, x0=search.warm
        )
        search._candidates(lam_t, ell_star, p_star, order, rates, force_ties=True)
        search.check_stop()
    cand_final = search.stop_cand if search.stop_cand is not None else search.best_cand
    ok, gap, cs = search.termination(cand_final)

    if not ok and escalations > 0:
        # The dual optimum may sit outside the initial price ball; retry with
        # a ball widened to the analytic cap.
        boundary = (
            search.best_dual_hat is not None
            and float(np.linalg.norm(search.best_dual_hat)) >= 0.8 * radius
        )
        if boundary or cand_final is None:
            cap = _price_cap_radius(
                bits[active], cycles[active], capac[active], weight[active],
                channels[active], lo[active], hi[active], config,
            )
            return _solve_p1_radius(
                profiles, config, eps, max(8.0 * radius, cap), bounds, cs_tol,
                max_iter, on_iteration, escalations - 1,
                iteration_base + search.calls,
            )

    cand = cand_final
    if cand is None:
        raise InfeasibleRecovery("no feasible primal point was recovered from the dual solve")

    prices = np.zeros(k)
    if search.best_dual_lam is not None:
        prices[active] = search.best_dual_lam / config.bandwidth_hz
    stats = SolveStats(
        iterations=iteration_base + search.calls,
        dual_value=search.best_dual,
        primal_value=cand.value,
        gap=gap,
        cs_residual=cs,
        certificate=result.certificate,
        converged=bool(ok),
        reason=result.reason,
        prices=prices,
    )
    return _assemble(
        profiles, config, cand.ell, cand.p, cand.segments, stats, k, inactive, active
    )


def _assemble(profiles, config, ell_sub, p_sub, segments_sub, stats, k, inactive, active):
    bits, cycles, capac, weight, channels = _stack(profiles)
    partition = np.zeros(k)
    powers = np.zeros(k)
    if active.size:
        partition[active] = ell_sub
        powers[active] = p_sub
    tail = tuple(int(u) for u in inactive)
    segments = []
    for duration, order_sub, _ in segments_sub:
        full_order = tuple(int(active[u]) for u in order_sub) + tail
        rates = vertex_rates(powers, full_order, channels, config.bandwidth_hz)
        segments.append(RateSegment(duration=duration, order=full_order, rates=rates))
    if not segments:
        order = tuple(range(k))
        rates = vertex_rates(powers, order, channels, config.bandwidth_hz)
        segments.append(
            RateSegment(duration=config.offload_window_s, order=order, rates=rates)
        )
    schedule = RateSchedule(segments=tuple(segments), window=config.offload_window_s)
    local = capac * cycles**3 * (bits - partition) ** 3 / config.block_length_s**2
    tx = powers * config.offload_window_s
    solution = OffloadSolution(
        partition=partition,
        powers=powers,
        schedule=schedule,
        per_user_tx_energy=tx,
        per_user_local_energy=local,
        weighted_total=float(weight @ (local + tx)),
        cpu_frequencies=cycles * (bits - partition) / config.block_length_s,
        stats=stats,
    )
    solution.validate(profiles, config)
    return solution
