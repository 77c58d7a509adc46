"""Periodic heat kernel on the torus and the associated smoothing operator.

The kernel has two equivalent forms: a wrapped-Gaussian image sum and a
Fourier series with multipliers exp(-tau |2 pi k|^2).  Smoothing is done
spectrally, which is exact convolution for the trigonometric interpolant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid, GridFunction, SpectralField, TWO_PI

_TERM_CUTOFF = 1e-16


@dataclass(frozen=True)
class HeatKernel:
    """Spectral multipliers of the heat kernel at time tau on a grid.

    Invariants: the k = 0 multiplier is exactly 1 (mass conservation) and all
    multipliers lie in (0, 1].
    """

    tau: float
    grid: Grid
    multipliers: np.ndarray

    @classmethod
    def create(cls, grid: Grid, tau: float) -> "HeatKernel":
        if tau <= 0:
            raise ValueError(f"tau must be positive, got {tau}")
        mult = np.exp(-tau * TWO_PI**2 * grid.mode_magnitudes_sq())
        return cls(tau=float(tau), grid=grid, multipliers=mult)


def _image_sum(tau: float, z: np.ndarray) -> float:
    """Wrapped Gaussian: (4 pi tau)^{-d/2} sum_k exp(-|z+k|^2 / 4 tau)."""
    d = z.size
    radius = 6.0 * math.sqrt(2.0 * tau) + 1.0
    kmax = int(math.ceil(radius + 1))
    offsets = np.arange(-kmax, kmax + 1, dtype=float)
    total = 0.0
    norm = (4.0 * math.pi * tau) ** (-d / 2.0)
    if d == 1:
        r2 = (z[0] + offsets) ** 2
    else:
        r2 = (z[0] + offsets[:, None]) ** 2 + (z[1] + offsets[None, :]) ** 2
    terms = norm * np.exp(-r2 / (4.0 * tau))
    total = float(np.sum(terms[terms >= _TERM_CUTOFF]))
    return total


def _fourier_sum(tau: float, z: np.ndarray) -> float:
    """Fourier form: sum_k exp(-tau |2 pi k|^2) cos(2 pi k . z)."""
    d = z.size
    # terms below the cutoff satisfy exp(-4 pi^2 tau k^2) < 1e-16
    kmax = int(math.ceil(math.sqrt(-math.log(_TERM_CUTOFF) / (4.0 * math.pi**2 * tau)))) + 1
    ks = np.arange(-kmax, kmax + 1, dtype=float)
    if d == 1:
        amp = np.exp(-tau * (TWO_PI * ks) ** 2)
        keep = amp >= _TERM_CUTOFF
        return float(np.sum(amp[keep] * np.cos(TWO_PI * ks[keep] * z[0])))
    K1, K2 = np.meshgrid(ks, ks, indexing="ij")
    amp = np.exp(-tau * TWO_PI**2 * (K1**2 + K2**2))
    keep = amp >= _TERM_CUTOFF
    phase = np.cos(TWO_PI * (K1 * z[0] + K2 * z[1]))
    return float(np.sum(amp[keep] * phase[keep]))


def kernel_value(tau: float, z, dim: int | None = None) -> float:
    """Pointwise kernel value by the truncated image sum.

    The value is cross-checked against the identically truncated Fourier sum;
    the two forms must agree to 1e-12, otherwise the truncation parameters
    are wrong and a ValueError is raised.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    if dim is not None and z_arr.size != dim:
        raise ValueError(f"point has {z_arr.size} coordinates, expected {dim}")
    gauss = _image_sum(tau, z_arr)
    fourier = _fourier_sum(tau, z_arr)
    if abs(gauss - fourier) > 1e-12 * max(1.0, abs(gauss)):
        raise ValueError(
            f"heat kernel forms disagree at tau={tau}, z={z_arr}: "
            f"image={gauss!r} fourier={fourier!r}"
        )
    return gauss


def peak_value(tau: float, dim: int) -> float:
    """sup of the periodic kernel, attained at z = 0."""
    return kernel_value(tau, np.zeros(dim))


def smooth(kernel: HeatKernel, u: GridFunction) -> GridFunction:
    """Heat smoothing of u: spectral multiplication by the kernel multipliers."""
    c = np.fft.fftn(u.values) * kernel.multipliers
    return GridFunction(u.grid, np.fft.ifftn(c).real)


def smooth_spectral(kernel: HeatKernel, u: GridFunction) -> SpectralField:
    """Smoothed field in spectral form (for off-grid evaluation)."""
    c = np.fft.fftn(u.values) / u.grid.num_nodes * kernel.multipliers
    return SpectralField(u.grid, c)
