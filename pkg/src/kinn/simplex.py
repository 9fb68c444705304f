"""Nelder-Mead downhill simplex minimizer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool
    trace: list[float] = field(default_factory=list)  # best value after each iteration


def nelder_mead(f: Callable[[np.ndarray], float], x0: Sequence[float],
                step: float | Sequence[float] = 0.1, max_iter: int = 2000, ftol: float = 1e-8,
                alpha: float = 1.0, gamma: float = 2.0, rho: float = 0.5,
                sigma: float = 0.5) -> SimplexResult:
    """Minimize ``f`` starting from a right-angled simplex around ``x0``.

    Stops when the spread of function values over the simplex falls to
    ``ftol * (1 + |f_best|)`` or after ``max_iter`` iterations. Infinite
    values are allowed and simply lose every comparison.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    n = x0.size
    steps = np.broadcast_to(np.asarray(step, dtype=np.float64), (n,))
    simplex = np.tile(x0, (n + 1, 1))
    for i in range(n):
        simplex[i + 1, i] += steps[i]
    fvals = np.array([f(v) for v in simplex])
    n_eval = n + 1
    trace: list[float] = []
    converged = False
    it = 0

    while it < max_iter:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        best, worst = fvals[0], fvals[-1]
        if np.isfinite(worst) and worst - best <= ftol * (1.0 + abs(best)):
            converged = True
            break
        it += 1
        centroid = simplex[:-1].mean(axis=0)
        xr = centroid + alpha * (centroid - simplex[-1])
        fr = f(xr)
        n_eval += 1
        if fr < fvals[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = f(xe)
            n_eval += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = centroid + rho * (xr - centroid)
            else:
                xc = centroid + rho * (simplex[-1] - centroid)
            fc = f(xc)
            n_eval += 1
            if fc < min(fr, fvals[-1]):
                simplex[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + sigma * (simplex[i] - simplex[0])
                    fvals[i] = f(simplex[i])
                n_eval += n
        trace.append(float(fvals.min()))

    i_best = int(np.argmin(fvals))
    return SimplexResult(simplex[i_best].copy(), float(fvals[i_best]), it, n_eval, converged, trace)
