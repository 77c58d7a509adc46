"""Stationary player distributions: transport by x + tau V(x), then smooth.

The projected-measure operator deposits each node's mass at its transported
position (adjoint trigonometric interpolation, i.e. exact Fourier moments of
the transported point masses on the retained modes) and then applies the heat
kernel spectrally.  Its fixed point is the stationary density of the
controlled chain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .grid import TWO_PI, Grid, GridFunction, eval_interpolant, gradient, integrate, laplacian
from .kernel import HeatKernel, smooth_spectral
from .lax import ControlField, lax
from .models import ModelSpec

logger = logging.getLogger(__name__)

_MAX_POWER_ITERS = 100_000


@dataclass(frozen=True)
class Density(GridFunction):
    """Nonnegative GridFunction with unit integral (a probability density)."""

    def __post_init__(self):
        super().__post_init__()
        if np.min(self.values) < -1e-12:
            node = np.unravel_index(int(np.argmin(self.values)), self.grid.shape)
            raise ValueError(f"density is negative at node {node}: {self.values[node]}")
        mass = integrate(self)
        if abs(mass - 1.0) > 1e-10:
            raise ValueError(f"density mass {mass!r} is not 1 within 1e-10")

    @classmethod
    def uniform(cls, grid: Grid) -> "Density":
        return cls(grid, np.ones(grid.shape))

    @classmethod
    def normalized(cls, grid: Grid, values: np.ndarray) -> "Density":
        vals = np.maximum(np.asarray(values, dtype=float), 0.0)
        mass = float(np.sum(vals)) * grid.h**grid.dim
        if mass <= 0:
            raise ValueError("cannot normalize a nonpositive density")
        return cls(grid, vals / mass)


def density_upper_bound(model: ModelSpec) -> float:
    """The (4 pi tau)^{-d/2} ceiling for transported-and-smoothed densities."""
    return float((4.0 * np.pi * model.tau) ** (-model.grid.dim / 2.0))


def transported_moments(grid: Grid, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Fourier moments sum_i w_i exp(-2 pi i k . y_i) on the grid's modes."""
    k = grid.wavenumbers()
    if grid.dim == 1:
        E = np.exp(-TWO_PI * 1j * np.outer(k, points[:, 0]))
        return E @ weights
    E1 = np.exp(-TWO_PI * 1j * np.outer(k, points[:, 0]))
    E2 = np.exp(-TWO_PI * 1j * np.outer(k, points[:, 1]))
    return (E1 * weights[None, :]) @ E2.T


def push_smooth(model: ModelSpec, V: ControlField, m: GridFunction,
                kernel: HeatKernel | None = None) -> Density:
    """One application of the projected-measure operator T_V."""
    grid = model.grid
    if kernel is None:
        kernel = model.heat_kernel()
    y = grid.nodes() + model.tau * V.q
    weights = m.values.ravel() * grid.h**grid.dim
    moments = transported_moments(grid, y, weights)
    vals = np.fft.ifftn(moments * kernel.multipliers * grid.num_nodes).real
    # the smoothed transported measure is strictly positive; clip the
    # rounding-level negatives the truncated series can introduce
    vals = np.maximum(vals, 0.0)
    return Density(grid, vals)


def stationary(model: ModelSpec, V: ControlField, m0: Density | None = None,
               kernel: HeatKernel | None = None,
               max_iters: int = _MAX_POWER_ITERS) -> Density:
    """Fixed point of T_V by power iteration, to L1 tolerance fp_tol."""
    grid = model.grid
    if kernel is None:
        kernel = model.heat_kernel()
    m = m0 if m0 is not None else Density.uniform(grid)
    tol = model.tol.fp_tol
    history: list[float] = []
    for it in range(1, max_iters + 1):
        m_next = push_smooth(model, V, m, kernel=kernel)
        gap = float(np.sum(np.abs(m_next.values - m.values))) * grid.h**grid.dim
        history.append(gap)
        m = m_next
        if gap <= tol:
            logger.debug("stationary measure: %d sweeps, L1 gap %.3e", it, gap)
            return m
    raise ConvergenceError(
        f"measure iteration did not reach L1 gap {tol:g} in {max_iters} sweeps",
        history=history,
    )


def holonomic_residual(model: ModelSpec, V: ControlField, m: GridFunction,
                       f: GridFunction, kernel: HeatKernel | None = None) -> float:
    """Quadrature of int [ (eta * f)(x + tau V(x)) - f(x) ] dm(x).

    Vanishes (to the fixed-point tolerance) when m is stationary for V.
    """
    grid = model.grid
    if kernel is None:
        kernel = model.heat_kernel()
    fs = smooth_spectral(kernel, f)
    y = grid.nodes() + model.tau * V.q
    smoothed_at, _, _ = eval_interpolant(fs, y, order=0)
    diff = smoothed_at - f.values.ravel()
    return float(np.sum(diff * m.values.ravel())) * grid.h**grid.dim


def fp_consistency(model: ModelSpec, phi: GridFunction, m: Density,
                   kernel: HeatKernel | None = None) -> float:
    """sup-norm defect of (T_V m - m)/tau against Delta m - div(m D_p H(x, D phi)),
    where V is the argmax control field for phi."""
    grid = model.grid
    if kernel is None:
        kernel = model.heat_kernel()
    v_phi = lax(model, phi, kernel=kernel).V
    pushed = push_smooth(model, v_phi, m, kernel=kernel)
    lhs = (pushed.values - m.values) / model.tau

    dphi = gradient(phi)
    div = np.zeros(grid.shape)
    for axis in range(grid.dim):
        flux = GridFunction(grid, m.values * dphi[axis].values)
        div += gradient(flux)[axis].values
    rhs = laplacian(GridFunction(grid, m.values)).values - div
    return float(np.max(np.abs(lhs - rhs)))
