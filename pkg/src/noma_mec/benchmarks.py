"""Comparison schemes: local computing only, full offloading, and TDMA.

The TDMA (orthogonal access) schemes let each offloading user transmit alone
in its own slot, receiving the full array gain ``||h_k||^2`` (single-user
receive beamforming).  Delivering ``ell`` bits in a slot of length ``tau``
costs

    e(ell, tau) = tau * (2^(ell / (tau B)) - 1) / ||h||^2

joules, which is jointly convex in (ell, tau), decreasing in tau, and
continuously extended by e(0, 0) = 0 / e(ell>0, 0) = +inf.  The partial-
offloading variant prices the shared window with a scalar multiplier: for a
given time price the per-user problem has a closed-form split (the slot
length and transmit energy are linear in the offloaded bits once the optimal
per-Hz rate is known), and the price is driven by bisection until the slots
exactly fill the window.  The binary variant reuses the branch-and-bound
tree with these TDMA solvers injected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .binary import BinarySolution, DecisionSets, InnerSolvers, SolveCounter, solve_bnb, split_bounds
from .partial import OffloadSolution, SystemConfig, UserProfile, _bounds_arrays, _stack, solve_p1

_LN2 = math.log(2.0)


def local_only(profiles: Sequence[UserProfile], config: SystemConfig):
    """Closed-form weighted energy when every task is computed on-device.

    Returns ``(weighted_total, per_user_energy)``.
    """
    bits, cycles, capac, weight, _ = _stack(profiles)
    per_user = capac * cycles**3 * bits**3 / config.block_length_s**2
    return float(weight @ per_user), per_user


def full_offload(profiles: Sequence[UserProfile], config: SystemConfig,
                 eps: float = 0.01) -> OffloadSolution:
    """Pin every split at the full task size and optimize powers/rates."""
    bounds = [(u.task_bits, u.task_bits) for u in profiles]
    return solve_p1(profiles, config, eps=eps, bounds=bounds)


def tdma_energy(ell: float, tau: float, gain: float, bandwidth_hz: float) -> float:
    """Minimum transmit energy for ell bits in a slot of length tau."""
    if tau <= 0.0:
        return 0.0 if ell <= 0.0 else math.inf
    return tau * (2.0 ** (ell / (tau * bandwidth_hz)) - 1.0) / gain


@dataclass(frozen=True)
class OmaSolution:
    """A TDMA operating point: slots, splits, powers, and the energy bill."""

    slot_durations: np.ndarray
    partition: np.ndarray
    powers: np.ndarray
    per_user_tx_energy: np.ndarray
    per_user_local_energy: np.ndarray
    weighted_total: float
    time_price: float
    dual_value: float

    def validate(self, profiles: Sequence[UserProfile], config: SystemConfig) -> None:
        bits, cycles, capac, weight, channels = _stack(profiles)
        gains = np.sum(np.abs(channels) ** 2, axis=1)
        tol_bits = np.maximum(1.0, 1e-6 * bits)
        if np.any(self.slot_durations < -1e-12):
            raise ValueError("negative slot duration")
        if float(np.sum(self.slot_durations)) > config.offload_window_s * (1 + 1e-9):
            raise ValueError("slots exceed the offloading window")
        for k in range(bits.shape[0]):
            cap = self.slot_durations[k] * config.bandwidth_hz * math.log2(
                1.0 + self.powers[k] * gains[k]
            ) if self.slot_durations[k] > 0 else 0.0
            if self.partition[k] > cap + tol_bits[k]:
                raise ValueError("slot does not deliver the offloaded bits")
        local = capac * cycles**3 * (bits - self.partition) ** 3 / config.block_length_s**2
        total = float(weight @ (local + self.per_user_tx_energy))
        if abs(total - self.weighted_total) > 1e-9 * (1.0 + abs(total)):
            raise ValueError("weighted total inconsistent")


def _rate_exponent(a: float, mu: float) -> float:
    """Solve a (ln2 x 2^x - 2^x + 1) = mu for x >= 0 (per-Hz rate of one slot)."""
    if mu <= 0.0:
        return 0.0

    def f(x: float) -> float:
        try:
            ex = 2.0**x
        except OverflowError:
            return math.inf
        return a * (_LN2 * x * ex - ex + 1.0)

    hi = 1.0
    while f(hi) < mu and hi < 1e6:
        hi *= 2.0
    lo = 0.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if f(mid) < mu:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(hi, 1.0):
            break
    return 0.5 * (lo + hi)


def oma_partial(
    profiles: Sequence[UserProfile],
    config: SystemConfig,
    bounds=None,
    time_tol: float = 1e-9,
) -> OmaSolution:
    """Jointly optimal TDMA slots, splits, and powers.

    For a time price mu, each user's optimal per-Hz rate x solves
    ``(alpha/g)(ln2 x 2^x - 2^x + 1) = mu``; the marginal offload cost per
    bit is then ``c = (alpha (2^x - 1)/g + mu) / (B x)`` and the optimal
    split is the usual cubic stationarity clamped to its bounds, with slot
    ``tau = ell / (B x)``.  The price is bisected until the slots fill the
    window to within ``time_tol * T_w`` (monotone, so the bisection is
    exact); a zero price with empty slots means local-only is optimal.
    """
    bits, cycles, capac, weight, channels = _stack(profiles)
    k = bits.shape[0]
    lo, hi = _bounds_arrays(bounds, bits)
    gains = np.sum(np.abs(channels) ** 2, axis=1)
    if np.any((hi > 0) & (weight <= 0)):
        raise ValueError("users that may offload need a strictly positive energy weight")
    if np.any((hi > 0) & (gains <= 0)):
        raise ValueError("users that may offload need a nonzero channel")
    window = config.offload_window_s
    block = config.block_length_s
    bw = config.bandwidth_hz

    def evaluate(mu: float):
        ells = np.zeros(k)
        taus = np.zeros(k)
        exps = np.zeros(k)
        for i in range(k):
            if hi[i] <= 0:
                continue
            a = weight[i] / gains[i]
            x = _rate_exponent(a, mu)
            if x > 0:
                price = (weight[i] * (2.0**x - 1.0) / gains[i] + mu) / (bw * x)
            else:
                price = a * _LN2 / bw
            pull = block * math.sqrt(price / (3.0 * weight[i] * capac[i] * cycles[i] ** 3))
            ell = min(max(bits[i] - pull, lo[i]), hi[i])
            ells[i] = ell
            exps[i] = x
            if ell > 0:
                taus[i] = ell / (bw * x) if x > 0 else math.inf
        return ells, taus, exps

    ells, taus, exps = evaluate(0.0)
    mu = 0.0
    if float(np.sum(taus)) > window:
        mu_hi = 1e-9
        while True:
            ells, taus, exps = evaluate(mu_hi)
            if float(np.sum(taus)) <= window:
                break
            mu_hi *= 8.0
            if mu_hi > 1e30:
                raise RuntimeError("time-price bisection failed to bracket")
        mu_lo = 0.0
        for _ in range(120):
            slack = window - float(np.sum(taus))
            if 0.0 <= slack <= time_tol * window:
                break
            mid = 0.5 * (mu_lo + mu_hi)
            cand = evaluate(mid)
            if float(np.sum(cand[1])) > window:
                mu_lo = mid
            else:
                mu_hi = mid
                ells, taus, exps = cand
            if mu_hi - mu_lo <= 1e-15 * max(mu_hi, 1.0):
                break
        mu = mu_hi

    powers = np.where(exps > 0, (2.0**exps - 1.0) / np.where(gains > 0, gains, 1.0), 0.0)
    powers[ells <= 0] = 0.0
    taus[ells <= 0] = 0.0
    tx = powers * taus
    local = capac * cycles**3 * (bits - ells) ** 3 / block**2
    total = float(weight @ (local + tx))
    dual = total - mu * max(window - float(np.sum(taus)), 0.0)
    sol = OmaSolution(
        slot_durations=taus,
        partition=ells,
        powers=powers,
        per_user_tx_energy=tx,
        per_user_local_energy=local,
        weighted_total=total,
        time_price=mu,
        dual_value=dual,
    )
    sol.validate(profiles, config)
    return sol


def oma_inner(profiles: Sequence[UserProfile], config: SystemConfig) -> InnerSolvers:
    """TDMA physical layer for the branch-and-bound tree."""
    bits = np.array([u.task_bits for u in profiles])
    counter = SolveCounter()

    def relax(sets: DecisionSets):
        counter.relax_calls += 1
        sol = oma_partial(profiles, config, bounds=split_bounds(sets, bits))
        with np.errstate(invalid="ignore", divide="ignore"):
            xi = np.where(bits > 0, sol.partition / np.where(bits > 0, bits, 1.0), 0.0)
        return sol.dual_value, np.clip(xi, 0.0, 1.0), sol

    def exact(sets: DecisionSets):
        counter.exact_calls += 1
        sol = oma_partial(profiles, config, bounds=split_bounds(sets, bits))
        return sol.weighted_total, sol

    return InnerSolvers(relax=relax, exact=exact, counter=counter)


def oma_binary(profiles: Sequence[UserProfile], config: SystemConfig,
               eps_gap: float = 1e-3,
               trace: Optional[list] = None) -> BinarySolution:
    """Binary offloading under TDMA, solved exactly by the shared BnB tree."""
    return solve_bnb(
        profiles,
        config,
        eps_gap=eps_gap,
        inner=oma_inner(profiles, config),
        trace=trace,
        method="oma_binary",
    )
