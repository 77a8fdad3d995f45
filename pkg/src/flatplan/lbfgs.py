"""Limited-memory quasi-Newton minimizer with a weak-Wolfe line search.

Kept in-package (rather than delegating to a library routine) so the
solver can log every accepted iterate for descent audits, terminate on
the gradient max-norm, and surface line-search failures together with
the best iterate seen.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import LineSearchFailure


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    status: str  # gradient | stagnation | max_iterations
    trace: list = field(default_factory=list)  # (objective, grad_max_norm, step) per accepted iterate


def _line_search(fun, x, f0, g0, direction, c1, c2, max_evals=60):
    """Weak Wolfe bisection with an Armijo backtracking fallback.

    Returns (alpha, f, g) or None. The fallback accepts plain sufficient
    decrease when no step also satisfies the curvature condition, which
    keeps the descent alive against the near-singular penalty walls.
    """
    d_dot_g0 = float(g0 @ direction)
    lo, hi = 0.0, np.inf
    alpha = 1.0
    for _ in range(max_evals):
        f, g = fun(x + alpha * direction)
        if not np.isfinite(f) or f > f0 + c1 * alpha * d_dot_g0:
            hi = alpha
            alpha = 0.5 * (lo + hi)
        elif float(g @ direction) < c2 * d_dot_g0:
            lo = alpha
            alpha = 2.0 * lo if np.isinf(hi) else 0.5 * (lo + hi)
        else:
            return alpha, f, g
        if np.isfinite(hi) and hi - lo < 1e-16:
            break
    alpha = 1.0
    for _ in range(48):
        f, g = fun(x + alpha * direction)
        if np.isfinite(f) and f <= f0 + c1 * alpha * d_dot_g0:
            return alpha, f, g
        alpha *= 0.5
    return None


def minimize(
    fun,
    x0: np.ndarray,
    tolerance: float = 1e-4,
    memory: int = 8,
    max_iterations: int = 3000,
    c1: float = 1e-4,
    c2: float = 0.9,
    stagnation_tol: float = 2e-14,
    stagnation_patience: int = 8,
) -> MinimizeResult:
    """Minimize fun(x) -> (value, gradient) from x0.

    Terminates when the gradient max-norm reaches the tolerance, the
    objective stagnates, or the iteration cap is hit. Raises
    LineSearchFailure (carrying the best iterate) when no acceptable
    step exists even along steepest descent.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun(x)
    if not np.isfinite(f):
        raise ValueError("objective not finite at the initial point")
    trace = [(f, float(np.abs(g).max()), 0.0)]
    s_hist: deque = deque(maxlen=memory)
    y_hist: deque = deque(maxlen=memory)
    rho_hist: deque = deque(maxlen=memory)
    gamma = 1.0
    stagnant = 0
    iteration = 0

    while iteration < max_iterations:
        gnorm = float(np.abs(g).max())
        if gnorm <= tolerance:
            return MinimizeResult(x, f, g, iteration, "gradient", trace)

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * float(s @ q)
            alphas.append(a)
            q -= a * y
        q *= gamma
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * float(y @ q)
            q += (a - b) * s
        direction = -q

        if float(g @ direction) >= 0.0:
            s_hist.clear()
            y_hist.clear()
            rho_hist.clear()
            gamma = 1.0
            direction = -g

        result = _line_search(fun, x, f, g, direction, c1, c2)
        if result is None and s_hist:
            # quasi-Newton step rejected: fall back to steepest descent once
            s_hist.clear()
            y_hist.clear()
            rho_hist.clear()
            gamma = 1.0
            direction = -g
            result = _line_search(fun, x, f, g, direction, c1, c2)
        if result is None:
            raise LineSearchFailure(x, f, iteration)

        alpha, f_new, g_new = result
        step = alpha * direction
        s = step
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-16 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)) and sy > 0:
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            gamma = sy / float(y @ y)

        x = x + step
        if abs(f - f_new) <= stagnation_tol * max(1.0, abs(f)):
            stagnant += 1
        else:
            stagnant = 0
        f, g = f_new, g_new
        iteration += 1
        trace.append((f, float(np.abs(g).max()), float(alpha)))
        if stagnant >= stagnation_patience:
            return MinimizeResult(x, f, g, iteration, "stagnation", trace)

    return MinimizeResult(x, f, g, iteration, "max_iterations", trace)
