"""Central-cut ellipsoid method for nonsmooth concave maximization.

Maximizes a concave function over the nonnegative orthant from an oracle
that returns either a (value, supergradient) pair or a feasibility cut.
Both cases reduce to the same update: given a direction ``v`` such that the
maximizer satisfies ``v . (x - c) >= 0`` at the current center ``c``, the
ellipsoid is replaced by the minimum-volume ellipsoid containing the kept
half.  Classic central cuts only - no deep cuts - so the behavior is
auditable against the textbook iteration bound.

Termination is either by the subgradient certificate
``sqrt(v' P v) <= tol * (1 + |best|)``, by the volume argument after
``2 n^2 ln(R G / tol_abs)`` iterations (R = initial radius, G = running
Lipschitz estimate), by the caller's callback, or by ``max_iter``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import NumericalFailure


@dataclass
class EllipsoidState:
    """Ellipsoid {x : (x - center)' shape^-1 (x - center) <= 1}."""

    center: np.ndarray
    shape: np.ndarray
    iteration: int = 0

    def radius(self) -> float:
        return float(np.sqrt(np.max(np.linalg.eigvalsh(self.shape))))


def ball(dim: int, radius: float, center=None) -> EllipsoidState:
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float).copy()
    return EllipsoidState(center=c, shape=np.eye(dim) * radius**2)


@dataclass
class EllipsoidResult:
    x: np.ndarray
    value: float
    iterations: int
    certificate: float
    converged: bool
    reason: str
    trace: List[Tuple[int, float]] = field(default_factory=list)


def ellipsoid_maximize(
    oracle: Callable[[np.ndarray], Tuple[Optional[float], np.ndarray]],
    initial: EllipsoidState,
    tol: float = 1e-3,
    max_iter: int = 50_000,
    keep_nonnegative: bool = True,
    callback: Optional[Callable[[EllipsoidState, float, float], bool]] = None,
    record_trace: bool = False,
) -> EllipsoidResult:
    """Maximize a concave function given by a cut oracle.

    ``oracle(x)`` returns ``(value, supergradient)`` at feasible points, or
    ``(None, a)`` for a feasibility cut keeping ``{y : a . (y - x) >= 0}``.
    When ``keep_nonnegative`` is set, centers with negative coordinates are
    handled internally with coordinate cuts and the oracle only ever sees
    nonnegative points.  ``callback(state, best_value, certificate)`` may
    return True to stop early (used by solvers that monitor a duality gap).

    The initial ellipsoid must contain a maximizer.
    """
    center = np.asarray(initial.center, dtype=float).copy()
    shape = np.asarray(initial.shape, dtype=float).copy()
    dim = center.shape[0]
    if shape.shape != (dim, dim):
        raise ValueError("shape matrix dimension mismatch")
    try:
        np.linalg.cholesky(shape)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("initial shape matrix is not positive definite") from exc

    radius0 = EllipsoidState(center, shape).radius()
    best_x = center.copy()
    best_val = -np.inf
    grad_max = 0.0
    certificate = np.inf
    trace: List[Tuple[int, float]] = []
    reason = "max_iter"
    converged = False

    it = 0
    while it < max_iter:
        it += 1
        if keep_nonnegative and float(np.min(center)) < 0.0:
            v = np.zeros(dim)
            v[int(np.argmin(center))] = 1.0
        else:
            value, v = oracle(center)
            v = np.asarray(v, dtype=float)
            if value is not None:
                if not np.isfinite(value) or not np.all(np.isfinite(v)):
                    raise NumericalFailure(f"oracle returned non-finite data at iteration {it}")
                if value > best_val:
                    best_val = float(value)
                    best_x = center.copy()
                grad_max = max(grad_max, float(np.linalg.norm(v)))
                certificate = float(np.sqrt(max(v @ shape @ v, 0.0)))
                if record_trace:
                    trace.append((it, best_val))
                tol_abs = tol * (1.0 + abs(best_val))
                if certificate <= tol_abs:
                    reason, converged = "certificate", True
                    break
                if grad_max > 0.0:
                    horizon = 2.0 * dim * dim * math.log(max(radius0 * grad_max / tol_abs, math.e))
                    if it >= horizon:
                        reason, converged = "volume_bound", True
                        break
        if callback is not None and callback(
            EllipsoidState(center, shape, it), best_val, certificate
        ):
            reason, converged = "callback", True
            break

        quad = float(v @ shape @ v)
        if not np.isfinite(quad) or quad <= 0.0:
            raise NumericalFailure(
                f"shape matrix lost positive definiteness at iteration {it} "
                f"(cut quadratic form {quad!r})"
            )
        push = (shape @ v) / math.sqrt(quad)
        if dim == 1:
            center = center + push / 2.0
            shape = shape / 4.0
        else:
            center = center + push / (dim + 1.0)
            shape = (dim * dim) / (dim * dim - 1.0) * (
                shape - (2.0 / (dim + 1.0)) * np.outer(push, push)
            )
            shape = 0.5 * (shape + shape.T)
        try:
            np.linalg.cholesky(shape)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(
                f"shape matrix lost positive definiteness at iteration {it}"
            ) from exc

    if not np.isfinite(best_val):
        raise NumericalFailure("ellipsoid terminated without a single objective evaluation")
    return EllipsoidResult(
        x=best_x,
        value=best_val,
        iterations=it,
        certificate=certificate,
        converged=converged,
        reason=reason,
        trace=trace,
    )
