"""Smooth concave maximization over the nonnegative orthant.

Projected ascent with Armijo backtracking; when a curvature oracle is
supplied, a Newton step restricted to the free (inactive-bound) coordinates
is tried first, which gives quadratic local convergence on the problems this
package generates (weighted log-det power allocations).

The first-order optimality residual is, per coordinate,

    r_i = g_i          if x_i > 0
    r_i = max(g_i, 0)  if x_i = 0

and the solver stops when ``||r||_inf <= tol``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import NumericalFailure

_ARMIJO = 1e-4
_MAX_BACKTRACKS = 60


def kkt_residual(x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, grad, np.maximum(grad, 0.0))


@dataclass
class OrthantResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    residual: float
    iterations: int
    converged: bool


def maximize_concave_orthant(
    value_and_grad: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    dim: int,
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    x0=None,
    tol: float = 1e-8,
    max_iter: int = 300,
) -> OrthantResult:
    """Maximize a smooth concave function over ``x >= 0``.

    ``value_and_grad(x) -> (f, grad)`` must be finite on the orthant and the
    gradient Lipschitz on the level set of the start point; ``hessian(x)``
    (optional) returns the negative-semidefinite Hessian used for Newton
    acceleration on the current free set.
    """
    x = np.zeros(dim) if x0 is None else np.maximum(np.asarray(x0, dtype=float).copy(), 0.0)
    f, g = value_and_grad(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericalFailure("non-finite objective or gradient at the start point")

    step = 1.0
    it = 0
    while it < max_iter:
        it += 1
        res = kkt_residual(x, g)
        res_norm = float(np.max(np.abs(res), initial=0.0))
        if res_norm <= tol:
            return OrthantResult(x, f, g, res_norm, it, True)

        direction = None
        newton = False
        if hessian is not None:
            free = (x > 0.0) | (g > 0.0)
            if np.any(free):
                h = np.asarray(hessian(x), dtype=float)
                hff = -h[np.ix_(free, free)]
                ridge = 1e-12 * max(1.0, float(np.max(np.abs(np.diag(hff)), initial=0.0)))
                hff = hff + ridge * np.eye(hff.shape[0])
                try:
                    d_free = np.linalg.solve(hff, g[free])
                except np.linalg.LinAlgError:
                    d_free = None
                if d_free is not None and np.all(np.isfinite(d_free)):
                    d = np.zeros(dim)
                    d[free] = d_free
                    if float(g @ d) > 0.0:
                        direction = d
                        newton = True
        if direction is None:
            direction = res

        t = 1.0 if newton else step
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            x_new = np.maximum(x + t * direction, 0.0)
            move = x_new - x
            if float(np.max(np.abs(move), initial=0.0)) == 0.0:
                break
            f_new, g_new = value_and_grad(x_new)
            if not np.isfinite(f_new) or not np.all(np.isfinite(g_new)):
                raise NumericalFailure("non-finite objective or gradient during line search")
            if f_new >= f + _ARMIJO * float(g @ move):
                x, f, g = x_new, f_new, g_new
                accepted = True
                if not newton:
                    step = min(t * 2.0, 1e12)
                break
            t *= 0.5
        if not accepted:
            # Line search exhausted: the iterate is at numerical stationarity.
            res_norm = float(np.max(np.abs(kkt_residual(x, g)), initial=0.0))
            return OrthantResult(x, f, g, res_norm, it, res_norm <= tol)

    res_norm = float(np.max(np.abs(kkt_residual(x, g)), initial=0.0))
    return OrthantResult(x, f, g, res_norm, it, res_norm <= tol)
