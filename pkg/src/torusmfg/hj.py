"""Ergodic Hamilton-Jacobi solver: u = (Lax u) - tau G - tau alpha.

Relative value iteration: the smoothing kernel is strictly positive, so each
Bellman sweep contracts the span seminorm and the increments converge to the
constant tau * alpha.  The ergodic constant is read off as the midpoint of
the final increment; the value function is normalized afterwards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InvariantViolation
from .grid import GridFunction
from .kernel import HeatKernel, smooth
from .lax import ControlField, LaxResult, lax
from .models import ModelSpec

logger = logging.getLogger(__name__)

_MAX_SWEEPS = 100_000


@dataclass
class ErgodicHJSolution:
    alpha: float
    u: GridFunction
    V: ControlField
    iterations: int
    span_residual: float
    residual_history: list = field(default_factory=list)


def normalize(model: ModelSpec, u: GridFunction, kernel: HeatKernel | None = None) -> GridFunction:
    """Fix the additive constant: u = 0 at the origin node, or max of the
    smoothed field = 0, per the model's convention."""
    if model.normalization == "point":
        origin = u.values[(0,) * model.grid.dim]
        return GridFunction(u.grid, u.values - origin)
    if kernel is None:
        kernel = model.heat_kernel()
    smoothed = smooth(kernel, u)
    return GridFunction(u.grid, u.values - float(np.max(smoothed.values)))


def ergodic_bracket(model: ModelSpec, G: GridFunction | None = None) -> tuple[float, float]:
    """Admissible interval [lo, hi] for -alpha given the source G.

    With the quadratic kinetic energy, min_q L(x, q) = L(x, 0) = -U(x), so
    -alpha lies between the min and max over x of G(x) - U(x).
    """
    u_pot = model.lagrangian.potential.on_grid(model.grid).values
    g_vals = G.values if G is not None else 0.0
    eff = g_vals - u_pot
    return float(np.min(eff)), float(np.max(eff))


def solve_hj(model: ModelSpec, G: GridFunction, u0: GridFunction | None = None,
             kernel: HeatKernel | None = None,
             max_sweeps: int = _MAX_SWEEPS) -> ErgodicHJSolution:
    """Solve the discrete ergodic HJ equation with source G.

    Sweeps w <- (Lax w) - tau G until the span of the increment drops below
    hj_tol * tau; alpha is the midpoint of the increment over tau.  The span
    stopping rule makes the sup-norm equation residual at the returned u at
    most hj_tol * tau / 2.
    """
    grid = model.grid
    tau = model.tau
    tol = model.tol.hj_tol
    if kernel is None:
        kernel = model.heat_kernel()
    w = u0 if u0 is not None else GridFunction.constant(grid, 0.0)
    history: list[float] = []
    origin = (0,) * grid.dim

    for sweep in range(1, max_sweeps + 1):
        result: LaxResult = lax(model, w, kernel=kernel)
        delta = result.Lu.values - tau * G.values - w.values
        dmax = float(np.max(delta))
        dmin = float(np.min(delta))
        span = dmax - dmin
        history.append(span)
        alpha = (dmax + dmin) / (2.0 * tau)
        if span < tol * tau:
            u = normalize(model, w, kernel=kernel)
            lo, hi = ergodic_bracket(model, G)
            slack = 1e-8
            if not lo - slack <= -alpha <= hi + slack:
                raise InvariantViolation(
                    f"ergodic constant out of bracket: -alpha={-alpha!r} "
                    f"not in [{lo!r}, {hi!r}]"
                )
            logger.debug("HJ solve: %d sweeps, span %.3e", sweep, span)
            return ErgodicHJSolution(
                alpha=alpha,
                u=u,
                V=result.V,
                iterations=sweep,
                span_residual=span,
                residual_history=history,
            )
        # anchor at the origin node to keep the iterates bounded
        new_vals = result.Lu.values - tau * G.values
        w = GridFunction(grid, new_vals - new_vals[origin])

    raise ConvergenceError(
        f"ergodic HJ iteration did not reach span {tol * tau:g} in {max_sweeps} sweeps "
        f"(last span {history[-1]:g})",
        history=history,
    )


def minmax_upper(model: ModelSpec, G: GridFunction, phi: GridFunction) -> float:
    """max over nodes of (Lax phi - phi)/tau - G; an upper bound for alpha,
    tight when phi solves the ergodic equation."""
    result = lax(model, phi)
    vals = (result.Lu.values - phi.values) / model.tau - G.values
    return float(np.max(vals))
