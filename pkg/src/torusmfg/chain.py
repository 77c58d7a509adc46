"""Monte Carlo simulation of the controlled chain x' = x + tau V(x) + noise.

Validates the solved ergodic constant as the negative long-run average cost
and the solved density as the occupation measure.  The noise is Gaussian
with per-coordinate variance 2 tau (the variance of the smoothing kernel);
the control and the running-cost field are evaluated between nodes by
trigonometric interpolation inside a compiled inner loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .grid import TWO_PI
from .lax import ControlField
from .measure import Density
from .mfg import coupling_field
from .models import ModelSpec


@dataclass(frozen=True)
class ChainConfig:
    """A simulation request: the model, its solved control and density.

    The solved density enters the one-stage cost through the coupling term.
    ``steps`` counts total transitions; statistics use steps after
    ``burn_in``.
    """

    model: ModelSpec
    V: ControlField
    m: Density
    steps: int
    burn_in: int
    seed: int

    def __post_init__(self):
        if not self.steps > self.burn_in >= 0:
            raise ValueError("need steps > burn_in >= 0")


@dataclass
class ChainResult:
    avg_cost: float
    occupation: Density
    stderr: float
    noise_variance: np.ndarray  # empirical, per coordinate
    positions_used: int


def _half_spectrum(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients d_k with f(x) = Re(sum_k d_k z^k), z = exp(2 pi i x)."""
    n = len(values)
    c = np.fft.fft(values) / n
    d = np.zeros(n // 2 + 1, dtype=complex)
    d[0] = c[0].real
    d[1 : n // 2] = 2.0 * c[1 : n // 2]
    d[n // 2] = c[n // 2].real
    return np.ascontiguousarray(d.real), np.ascontiguousarray(d.imag)


@njit(cache=True)
def _walk_1d(x0, tau, dr_v, di_v, dr_c, di_c, noise, xs, costs):
    nmodes = dr_v.shape[0]
    x = x0
    for i in range(noise.shape[0]):
        zr = np.cos(TWO_PI * x)
        zi = np.sin(TWO_PI * x)
        wr = 1.0
        wi = 0.0
        v = dr_v[0]
        c = dr_c[0]
        for k in range(1, nmodes):
            wr, wi = wr * zr - wi * zi, wr * zi + wi * zr
            v += dr_v[k] * wr - di_v[k] * wi
            c += dr_c[k] * wr - di_c[k] * wi
        xs[i] = x
        costs[i] = 0.5 * v * v + c
        x = (x + tau * v + noise[i]) % 1.0


@njit(cache=True)
def _fill_powers(x, n, pr, pi):
    # e^(2 pi i k x) for k in FFT layout (0..n/2-1, -n/2..-1)
    zr = np.cos(TWO_PI * x)
    zi = np.sin(TWO_PI * x)
    pr[0] = 1.0
    pi[0] = 0.0
    for j in range(1, n // 2 + 1):
        pr[j] = pr[j - 1] * zr - pi[j - 1] * zi
        pi[j] = pr[j - 1] * zi + pi[j - 1] * zr
    for j in range(n // 2 + 1, n):
        pr[j] = pr[n - j]
        pi[j] = -pi[n - j]


@njit(cache=True)
def _eval_2d(cr, ci, p1r, p1i, p2r, p2i, n):
    acc = 0.0
    for j in range(n):
        tr = 0.0
        ti = 0.0
        for l in range(n):
            tr += cr[j, l] * p2r[l] - ci[j, l] * p2i[l]
            ti += cr[j, l] * p2i[l] + ci[j, l] * p2r[l]
        acc += tr * p1r[j] - ti * p1i[j]
    return acc


@njit(cache=True)
def _walk_2d(x0, tau, c1r, c1i, c2r, c2i, ccr, cci, noise, xs, costs):
    n = c1r.shape[0]
    p1r = np.empty(n)
    p1i = np.empty(n)
    p2r = np.empty(n)
    p2i = np.empty(n)
    x1 = x0[0]
    x2 = x0[1]
    for i in range(noise.shape[0]):
        _fill_powers(x1, n, p1r, p1i)
        _fill_powers(x2, n, p2r, p2i)
        v1 = _eval_2d(c1r, c1i, p1r, p1i, p2r, p2i, n)
        v2 = _eval_2d(c2r, c2i, p1r, p1i, p2r, p2i, n)
        c = _eval_2d(ccr, cci, p1r, p1i, p2r, p2i, n)
        xs[i, 0] = x1
        xs[i, 1] = x2
        costs[i] = 0.5 * (v1 * v1 + v2 * v2) + c
        x1 = (x1 + tau * v1 + noise[i, 0]) % 1.0
        x2 = (x2 + tau * v2 + noise[i, 1]) % 1.0


def simulate(cfg: ChainConfig) -> ChainResult:
    """Run the chain; returns the average cost, occupation density and the
    batch-means standard error of the cost."""
    model = cfg.model
    grid = model.grid
    tau = model.tau
    rng = np.random.default_rng(cfg.seed)
    noise = rng.normal(0.0, np.sqrt(2.0 * tau), size=(cfg.steps, grid.dim))

    # running-cost field without the kinetic part: -U(x) + F(x, m)
    f_vals, _ = coupling_field(model, cfg.m)
    cost_field = f_vals.values - model.lagrangian.potential.on_grid(grid).values

    xs = np.empty((cfg.steps, grid.dim))
    costs = np.empty(cfg.steps)
    if grid.dim == 1:
        dr_v, di_v = _half_spectrum(cfg.V.q[:, 0])
        dr_c, di_c = _half_spectrum(cost_field)
        _walk_1d(0.5, tau, dr_v, di_v, dr_c, di_c, noise[:, 0],
                 xs[:, 0], costs)
    else:
        c1 = np.fft.fftn(cfg.V.component(0).values) / grid.num_nodes
        c2 = np.fft.fftn(cfg.V.component(1).values) / grid.num_nodes
        cc = np.fft.fftn(cost_field) / grid.num_nodes
        _walk_2d(
            np.array([0.5, 0.5]), tau,
            np.ascontiguousarray(c1.real), np.ascontiguousarray(c1.imag),
            np.ascontiguousarray(c2.real), np.ascontiguousarray(c2.imag),
            np.ascontiguousarray(cc.real), np.ascontiguousarray(cc.imag),
            noise, xs, costs,
        )

    post_x = xs[cfg.burn_in :]
    post_cost = costs[cfg.burn_in :]
    avg_cost = float(np.mean(post_cost))
    stderr = _batch_means_stderr(post_cost)
    occupation = _histogram_density(model, post_x)
    noise_var = np.var(noise, axis=0, ddof=1)
    return ChainResult(
        avg_cost=avg_cost,
        occupation=occupation,
        stderr=stderr,
        noise_variance=noise_var,
        positions_used=post_x.shape[0],
    )


def _batch_means_stderr(samples: np.ndarray, nbatches: int = 100) -> float:
    size = len(samples) // nbatches
    if size == 0:
        return float(np.std(samples, ddof=1) / np.sqrt(len(samples)))
    trimmed = samples[: size * nbatches].reshape(nbatches, size)
    means = trimmed.mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(nbatches))


def _histogram_density(model: ModelSpec, positions: np.ndarray) -> Density:
    grid = model.grid
    n = grid.n
    idx = np.floor(positions * n).astype(np.int64) % n
    if grid.dim == 1:
        counts = np.bincount(idx[:, 0], minlength=n).astype(float)
    else:
        flat = idx[:, 0] * n + idx[:, 1]
        counts = np.bincount(flat, minlength=n * n).astype(float).reshape(n, n)
    vals = counts / (positions.shape[0] * grid.h**grid.dim)
    return Density(grid, vals)


def noise_variance_bound(tau: float, nsamples: int) -> float:
    """3-sigma band for the sample variance of N(0, 2 tau) draws."""
    return 3.0 * np.sqrt(2.0 / (nsamples - 1)) * 2.0 * tau
