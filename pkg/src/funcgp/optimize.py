"""Quasi-Newton minimizer used for all marginal-likelihood fits.

BFGS with a backtracking (Armijo) line search on an unconstrained vector.
Convergence is declared when the gradient norm falls below
``grad_tol * (1 + |f|)`` or the objective changes by less than
``f_tol * (1 + |f|)`` between accepted steps.  Callers maximize by negating
their objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

GRAD_TOL = 1e-6
F_TOL = 1e-10
MAX_ITER = 500
_ARMIJO_C1 = 1e-4
_BACKTRACK = 0.5
_MAX_BACKTRACKS = 40


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    converged: bool
    message: str
    n_fev: int = 0


def finite_difference_gradient(fun, x, step=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        g[j] = (fun(xp) - fun(xm)) / (2.0 * step)
    return g


def _safe_eval(fun, x):
    try:
        with np.errstate(all="ignore"):
            f = float(fun(x))
    except (ArithmeticError, np.linalg.LinAlgError, NumericalError):
        return np.inf
    return f if np.isfinite(f) else np.inf


def minimize_bfgs(fun, x0, grad=None, max_iter=MAX_ITER, grad_tol=GRAD_TOL,
                  f_tol=F_TOL, fd_step=1e-6):
    """Minimize ``fun`` from ``x0``; ``grad=None`` uses finite differences.

    Non-finite objective values are treated as rejected points by the line
    search, so the iterate never leaves the finite region it started in.
    Returns an :class:`OptimResult`; ``converged`` reflects the stated
    gradient / objective-change criteria.
    """
    x = np.asarray(x0, dtype=float).copy()
    n_fev = [0]

    def f_at(z):
        n_fev[0] += 1
        return _safe_eval(fun, z)

    def g_at(z):
        if grad is None:
            return finite_difference_gradient(f_at, z, fd_step)
        try:
            with np.errstate(all="ignore"):
                return np.asarray(grad(z), dtype=float)
        except (ArithmeticError, np.linalg.LinAlgError, NumericalError):
            return np.full(z.size, np.nan)

    f = f_at(x)
    if not np.isfinite(f):
        return OptimResult(x, np.inf, np.inf, 0, False, "objective not finite at start", n_fev[0])
    g = g_at(x)
    if not np.all(np.isfinite(g)):
        return OptimResult(x, f, np.inf, 0, False, "gradient not finite at start", n_fev[0])

    H = np.eye(x.size)
    message = "iteration limit reached"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = np.linalg.norm(g)
        if gnorm < grad_tol * (1.0 + abs(f)):
            converged, message = True, "gradient tolerance reached"
            break
        direction = -H @ g
        slope = float(direction @ g)
        if slope >= 0:  # safeguard against a corrupted Hessian approximation
            H = np.eye(x.size)
            direction = -g
            slope = -float(g @ g)
        step = 1.0
        f_new = np.inf
        g_new = None
        for _ in range(_MAX_BACKTRACKS):
            x_new = x + step * direction
            f_new = f_at(x_new)
            if f_new <= f + _ARMIJO_C1 * step * slope:
                g_new = g_at(x_new)
                if np.all(np.isfinite(g_new)):
                    break
                g_new = None  # treat a non-finite gradient as a rejected step
            step *= _BACKTRACK
        if g_new is None:
            # no acceptable step exists at line-search resolution, so the
            # achievable objective change is below the tolerance
            converged = np.isfinite(f)
            message = "line search stalled"
            break
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            I = np.eye(x.size)
            V = I - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        f_prev, x, g = f, x_new, g_new
        f = f_new
        if abs(f_prev - f) < f_tol * (1.0 + abs(f)):
            converged, message = True, "objective change tolerance reached"
            break

    return OptimResult(x, f, float(np.linalg.norm(g)), it, converged, message, n_fev[0])
