"""The uplink multiple-access capacity region as a polymatroid.

For transmit powers ``p`` and (noise-normalized) channel vectors ``h_k``,
the achievable rate tuples are

    sum_{k in J} r_k  <=  B * log2 det(I + sum_{k in J} p_k h_k h_k^H)

for every user subset ``J``.  The set function on the right is normalized,
monotone and submodular, so the region is the polytope of a polymatroid;
its vertices are the MMSE-SIC rate tuples of the ``K!`` decoding orders and
every boundary point is reachable by time-sharing among them.

Log-determinants are evaluated through Cholesky factorizations of
``I + sum p_k h_k h_k^H`` (always Hermitian positive definite), never via a
plain determinant, because subset products span many orders of magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence, Tuple

import numpy as np

from .errors import CapabilityError

#: Default relative tolerance for region membership; dual solvers produce
#: rate tuples that sit numerically on the boundary.
MEMBERSHIP_RTOL = 1e-7

_MAX_ENUM_USERS = 20


def _logdet2(a: np.ndarray) -> float:
    """log2 det of a Hermitian positive-definite matrix via Cholesky."""
    chol = np.linalg.cholesky(a)
    return 2.0 * float(np.sum(np.log2(np.real(np.diag(chol)))))


def _check_instance(p: np.ndarray, channels: np.ndarray) -> None:
    if channels.ndim != 2:
        raise ValueError("channels must be a (users, antennas) matrix")
    if p.shape[0] != channels.shape[0]:
        raise ValueError(
            f"power vector has {p.shape[0]} entries for {channels.shape[0]} channel rows"
        )
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("powers must be finite and nonnegative")


def sumrate_bound(p, subset, channels, bandwidth_hz: float) -> float:
    """Sum-rate bound ``B log2 det(I + sum_{k in subset} p_k h_k h_k^H)`` in bits/sec.

    Returns 0 for the empty subset.  The determinant is evaluated on the
    smaller of the antenna-side and user-side Gram forms.
    """
    p = np.asarray(p, dtype=float)
    channels = np.asarray(channels)
    _check_instance(p, channels)
    idx = sorted(set(int(k) for k in subset))
    if not idx:
        return 0.0
    if idx[0] < 0 or idx[-1] >= channels.shape[0]:
        raise ValueError("subset contains out-of-range user indices")
    hs = channels[idx]
    ps = p[idx]
    m, n = hs.shape
    if m <= n:
        gram = hs.conj() @ hs.T
        root = np.sqrt(ps)
        a = np.eye(m, dtype=complex) + root[:, None] * gram * root[None, :]
    else:
        a = np.eye(n, dtype=complex) + (hs.T * ps) @ hs.conj()
    return bandwidth_hz * _logdet2(a)


def vertex_rates(p, order, channels, bandwidth_hz: float) -> np.ndarray:
    """MMSE-SIC rate tuple for one decoding order (a polymatroid vertex).

    ``order[0]`` is decoded last (interference-free) and ``order[-1]`` first;
    user ``order[j]`` gets the successive log-det ratio

        r = B * (log2 det A_{j+1} - log2 det A_j),
        A_j = I + sum_{i < j} p[order[i]] h h^H.

    Prefix factorizations make the telescoping sums tight: the rates of the
    first ``j`` users always add up to ``sumrate_bound`` over that prefix.
    """
    p = np.asarray(p, dtype=float)
    channels = np.asarray(channels)
    _check_instance(p, channels)
    k = channels.shape[0]
    if sorted(int(u) for u in order) != list(range(k)):
        raise ValueError("order must be a permutation of all user indices")
    n = channels.shape[1]
    a = np.eye(n, dtype=complex)
    rates = np.zeros(k)
    prev = 0.0
    for u in order:
        h = channels[u]
        a = a + p[u] * np.outer(h, h.conj())
        cur = _logdet2(a)
        rates[u] = bandwidth_hz * (cur - prev)
        prev = cur
    return np.maximum(rates, 0.0)


def contains(p, rates, channels, bandwidth_hz: float, rtol: float = MEMBERSHIP_RTOL) -> bool:
    """Exhaustive membership test: all ``2^K - 1`` subset constraints.

    True iff ``sum_{k in J} r_k <= (1 + rtol) * sumrate_bound(p, J)`` for
    every nonempty subset ``J``.  Subsets are enumerated by cardinality so
    the cheap single-user violations short-circuit first.
    """
    p = np.asarray(p, dtype=float)
    rates = np.asarray(rates, dtype=float)
    channels = np.asarray(channels)
    _check_instance(p, channels)
    k = channels.shape[0]
    if rates.shape[0] != k:
        raise ValueError("rate vector length mismatch")
    if k > _MAX_ENUM_USERS:
        raise CapabilityError(
            f"subset enumeration is limited to {_MAX_ENUM_USERS} users; "
            "certify membership through vertex decompositions instead"
        )
    if np.any(rates < -rtol * max(1.0, float(np.max(np.abs(rates), initial=0.0)))):
        return False
    for size in range(1, k + 1):
        for subset in combinations(range(k), size):
            total = float(np.sum(rates[list(subset)]))
            if total > (1.0 + rtol) * sumrate_bound(p, subset, channels, bandwidth_hz):
                return False
    return True


@dataclass(frozen=True)
class RateSegment:
    """One time-sharing slot: a duration, a decoding order, and its vertex rates."""

    duration: float
    order: Tuple[int, ...]
    rates: np.ndarray


@dataclass(frozen=True)
class RateSchedule:
    """A time-shared operating point of the region over the offloading window.

    ``effective_rates`` averages the segment rates over the whole window, so
    ``effective_rates * window`` is the bits delivered per user.
    """

    segments: Tuple[RateSegment, ...]
    window: float

    @property
    def total_duration(self) -> float:
        return float(sum(seg.duration for seg in self.segments))

    @property
    def n_users(self) -> int:
        return 0 if not self.segments else int(self.segments[0].rates.shape[0])

    @property
    def effective_rates(self) -> np.ndarray:
        if not self.segments:
            return np.zeros(0)
        acc = np.zeros_like(self.segments[0].rates)
        for seg in self.segments:
            acc = acc + seg.duration * seg.rates
        return acc / self.window

    def validate(self, p, channels, bandwidth_hz: float, rtol: float = 1e-9) -> None:
        """Raise if a segment is inconsistent with its own decoding order."""
        if self.window <= 0:
            raise ValueError("schedule window must be positive")
        total = 0.0
        for seg in self.segments:
            if seg.duration < -rtol * self.window:
                raise ValueError("segment durations must be nonnegative")
            total += max(seg.duration, 0.0)
            expected = vertex_rates(p, seg.order, channels, bandwidth_hz)
            scale = max(1.0, float(np.max(np.abs(expected))))
            if np.max(np.abs(seg.rates - expected)) > 1e-6 * scale:
                raise ValueError("segment rates do not match the vertex of their order")
        if total > self.window * (1.0 + 1e-9):
            raise ValueError("segment durations exceed the offloading window")


def single_segment_schedule(p, order, channels, bandwidth_hz: float, window: float) -> RateSchedule:
    """Schedule that uses one decoding order for the whole window."""
    rates = vertex_rates(p, order, channels, bandwidth_hz)
    seg = RateSegment(duration=window, order=tuple(int(u) for u in order), rates=rates)
    return RateSchedule(segments=(seg,), window=window)
