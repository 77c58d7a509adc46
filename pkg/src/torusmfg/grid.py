"""Uniform periodic grids on the flat torus [0,1)^d and their spectral calculus.

Functions are represented by their values on a uniform n^d grid (d = 1 or 2)
and, when needed, by the Fourier coefficients of the trigonometric interpolant.
All differentiation, smoothing and off-grid evaluation go through that
interpolant, so band-limited data is handled exactly (up to rounding).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * np.pi


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with n nodes per axis on [0,1)^d.

    Attributes:
        dim: spatial dimension, 1 or 2.
        n: nodes per axis; a power of two, at least 8.
    """

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8 or not _is_power_of_two(self.n):
            raise ConfigError(f"n must be a power of two >= 8, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def num_nodes(self) -> int:
        return self.n**self.dim

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis."""
        return np.arange(self.n) / self.n

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (num_nodes, dim), row-major order."""
        x = self.axis()
        if self.dim == 1:
            return x[:, None]
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([X1.ravel(), X2.ravel()])

    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers along one axis in FFT layout (Nyquist at -n/2)."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n)

    def mode_magnitudes_sq(self) -> np.ndarray:
        """|k|^2 on the full FFT-layout mode lattice, shape grid.shape."""
        k = self.wavenumbers()
        if self.dim == 1:
            return k**2
        return k[:, None] ** 2 + k[None, :] ** 2


@dataclass(frozen=True)
class GridFunction:
    """Real function sampled at the nodes of a Grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("GridFunction values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: Grid, c: float = 0.0) -> "GridFunction":
        return cls(grid, np.full(grid.shape, float(c)))

    def __add__(self, other):
        other_vals = other.values if isinstance(other, GridFunction) else other
        return GridFunction(self.grid, self.values + other_vals)

    def __sub__(self, other):
        other_vals = other.values if isinstance(other, GridFunction) else other
        return GridFunction(self.grid, self.values - other_vals)

    def __mul__(self, scalar):
        return GridFunction(self.grid, self.values * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of the trigonometric interpolant of a GridFunction.

    Coefficients are stored in numpy FFT layout, normalized so that
    ``coeffs[k] = (1/n^d) sum_j f_j exp(-2 pi i k.x_j)``; the k = 0 entry is
    the mean of the function.
    """

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.grid.shape:
            raise ValueError(f"coeffs shape {c.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "coeffs", c)


def to_spectral(f: GridFunction) -> SpectralField:
    """Fourier coefficients of the trigonometric interpolant of f."""
    return SpectralField(f.grid, np.fft.fftn(f.values) / f.grid.num_nodes)


def from_spectral(s: SpectralField) -> GridFunction:
    """Inverse transform back to node values."""
    vals = np.fft.ifftn(s.coeffs * s.grid.num_nodes).real
    return GridFunction(s.grid, vals)


def integrate(f: GridFunction) -> float:
    """Rectangle-rule integral h^d * sum(values); exact for the interpolant."""
    return float(np.sum(f.values)) * f.grid.h**f.grid.dim


def inner(f: GridFunction, g: GridFunction) -> float:
    """L2 inner product by quadrature."""
    return float(np.sum(f.values * g.values)) * f.grid.h**f.grid.dim


def norm_inf(f: GridFunction) -> float:
    return float(np.max(np.abs(f.values)))


def norm_l1(f: GridFunction) -> float:
    return float(np.sum(np.abs(f.values))) * f.grid.h**f.grid.dim


def norm_lr(f: GridFunction, r: float) -> float:
    """L^r norm by quadrature."""
    return float(np.sum(np.abs(f.values) ** r) * f.grid.h**f.grid.dim) ** (1.0 / r)


def gradient(f: GridFunction) -> tuple[GridFunction, ...]:
    """Spectral gradient, one GridFunction per axis.

    The Nyquist mode is zeroed for odd derivatives so the result stays the
    derivative of a real interpolant; differentiation is exact for modes
    |k| <= n/2 - 1.
    """
    grid = f.grid
    c = np.fft.fftn(f.values)
    k = grid.wavenumbers()
    ik = TWO_PI * 1j * k
    ik[grid.n // 2] = 0.0
    out = []
    if grid.dim == 1:
        out.append(GridFunction(grid, np.fft.ifft(c * ik).real))
    else:
        out.append(GridFunction(grid, np.fft.ifftn(c * ik[:, None]).real))
        out.append(GridFunction(grid, np.fft.ifftn(c * ik[None, :]).real))
    return tuple(out)


def laplacian(f: GridFunction) -> GridFunction:
    """Spectral Laplacian (multipliers -|2 pi k|^2)."""
    grid = f.grid
    c = np.fft.fftn(f.values)
    mult = -(TWO_PI**2) * grid.mode_magnitudes_sq()
    return GridFunction(grid, np.fft.ifftn(c * mult).real)


# ---------------------------------------------------------------------------
# Off-grid evaluation of the interpolant.
#
# For even FFT sizes the Nyquist coefficient is split across k = +-n/2 so the
# interpolant is the real cosine form; node values, derivatives and evenness
# are then all consistent off the grid.
# ---------------------------------------------------------------------------


def _extended_axis_modes(n: int) -> np.ndarray:
    return np.arange(-(n // 2), n // 2 + 1, dtype=float)


def _extend_coeffs_axis(c: np.ndarray, axis: int) -> np.ndarray:
    n = c.shape[axis]
    half = np.take(c, [n // 2], axis=axis) / 2.0
    neg = np.take(c, range(n // 2 + 1, n), axis=axis)
    pos = np.take(c, range(0, n // 2), axis=axis)
    return np.concatenate([half, neg, pos, half], axis=axis)


def _extended_coeffs(s: SpectralField) -> np.ndarray:
    ext = _extend_coeffs_axis(s.coeffs, 0)
    if s.grid.dim == 2:
        ext = _extend_coeffs_axis(ext, 1)
    return ext


def eval_offgrid(s: SpectralField, y) -> np.ndarray | float:
    """Exact value of the trigonometric interpolant at arbitrary points.

    Args:
        s: spectral field.
        y: a single point (length-d sequence) or an array of shape (P, d).
           Coordinates are taken mod 1.

    Returns:
        float for a single point, else array of shape (P,).
    """
    y_arr = np.atleast_2d(np.asarray(y, dtype=float))
    vals, _, _ = eval_interpolant(s, y_arr, order=0)
    if np.ndim(y) == 1 or (s.grid.dim == 1 and np.ndim(y) == 0):
        return float(vals[0])
    return vals


def eval_interpolant(s: SpectralField, y: np.ndarray, order: int = 0):
    """Evaluate the interpolant and optionally its derivatives at points y.

    Args:
        s: spectral field.
        y: points, shape (P, d).
        order: 0 for values only, 1 adds the gradient, 2 adds the Hessian.

    Returns:
        (val, grad, hess): val has shape (P,); grad (P, d) or None;
        hess (P, d, d) or None.
    """
    grid = s.grid
    n = grid.n
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[1] != grid.dim:
        raise ValueError(f"points must have shape (P, {grid.dim})")
    kx = _extended_axis_modes(n)
    ik = TWO_PI * 1j * kx
    cext = _extended_coeffs(s)

    if grid.dim == 1:
        E = np.exp(TWO_PI * 1j * np.outer(y[:, 0], kx))
        val = (E @ cext).real
        grad = hess = None
        if order >= 1:
            grad = (E @ (ik * cext)).real[:, None]
        if order >= 2:
            hess = (E @ (ik * ik * cext)).real[:, None, None]
        return val, grad, hess

    E1 = np.exp(TWO_PI * 1j * np.outer(y[:, 0], kx))
    E2 = np.exp(TWO_PI * 1j * np.outer(y[:, 1], kx))
    T0 = E1 @ cext
    val = np.einsum("pk,pk->p", T0, E2).real
    grad = hess = None
    if order >= 1:
        T1 = E1 @ (ik[:, None] * cext)
        E2k = E2 * ik[None, :]
        g1 = np.einsum("pk,pk->p", T1, E2).real
        g2 = np.einsum("pk,pk->p", T0, E2k).real
        grad = np.column_stack([g1, g2])
        if order >= 2:
            T2 = E1 @ (ik[:, None] ** 2 * cext)
            h11 = np.einsum("pk,pk->p", T2, E2).real
            h12 = np.einsum("pk,pk->p", T1, E2k).real
            h22 = np.einsum("pk,pk->p", T0, E2 * ik[None, :] ** 2).real
            hess = np.empty((y.shape[0], 2, 2))
            hess[:, 0, 0] = h11
            hess[:, 0, 1] = hess[:, 1, 0] = h12
            hess[:, 1, 1] = h22
    return val, grad, hess


def shifted_values(s: SpectralField, shift) -> np.ndarray:
    """Values of the interpolant on the grid translated by a constant shift.

    Equivalent to evaluating at every node x + shift via one phase-modulated
    inverse FFT.
    """
    grid = s.grid
    shift = np.atleast_1d(np.asarray(shift, dtype=float))
    k = grid.wavenumbers()
    if grid.dim == 1:
        phase = np.exp(TWO_PI * 1j * k * shift[0])
    else:
        phase = np.exp(TWO_PI * 1j * k * shift[0])[:, None] * np.exp(
            TWO_PI * 1j * k * shift[1]
        )[None, :]
    return np.fft.ifftn(s.coeffs * phase * grid.num_nodes).real


def refine_values(s: SpectralField, factor: int) -> np.ndarray:
    """Sample the interpolant on a grid refined by an integer factor.

    Used for sharp max/min estimation of band-limited fields.
    """
    grid = s.grid
    n, m = grid.n, grid.n * factor
    big = np.zeros((m,) * grid.dim, dtype=complex)
    if grid.dim == 1:
        big[: n // 2] = s.coeffs[: n // 2]
        big[-(n // 2) :] = s.coeffs[n // 2 :]
        # split the Nyquist mode to keep the refined samples real
        big[n // 2] = s.coeffs[n // 2] / 2.0
        big[m - n // 2] += s.coeffs[n // 2] / 2.0
    else:
        idx = np.r_[0 : n // 2, m - n // 2 : m]
        src = np.r_[0 : n // 2, n // 2 : n]
        for a, ia in zip(src, idx):
            for b, ib in zip(src, idx):
                big[ia, ib] = s.coeffs[a, b]
        # Nyquist splitting in 2D is omitted; refine is only used on smoothed
        # fields whose Nyquist content is negligible.
    return np.fft.ifftn(big * m**grid.dim).real


def random_smooth(grid: Grid, rng: np.random.Generator, kmax: int = 3,
                  amplitude: float = 0.1) -> GridFunction:
    """Random band-limited test function with modes |k| <= kmax."""
    x = grid.axis()
    vals = np.zeros(grid.shape)
    if grid.dim == 1:
        for k in range(1, kmax + 1):
            a, b = rng.normal(size=2)
            vals += a * np.cos(TWO_PI * k * x) + b * np.sin(TWO_PI * k * x)
    else:
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        for k1 in range(0, kmax + 1):
            for k2 in range(-kmax, kmax + 1):
                if k1 == 0 and k2 <= 0:
                    continue
                a, b = rng.normal(size=2)
                phase = TWO_PI * (k1 * X1 + k2 * X2)
                vals += a * np.cos(phase) + b * np.sin(phase)
    peak = np.max(np.abs(vals))
    if peak > 0:
        vals *= amplitude / peak
    return GridFunction(grid, vals)


# ---------------------------------------------------------------------------
# Serialization: CSV with a `# dim=<d> n=<n>` header, one value per line in
# row-major order.
# ---------------------------------------------------------------------------


def write_gridfunction_csv(f: GridFunction, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# dim={f.grid.dim} n={f.grid.n}\n")
        for v in f.values.ravel():
            fh.write(f"{float(v)!r}\n")


def _parse_csv_header(line: str, path) -> Grid:
    try:
        parts = dict(tok.split("=") for tok in line.lstrip("#").split())
        return Grid(dim=int(parts["dim"]), n=int(parts["n"]))
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad CSV header in {path}: {line.strip()!r}") from exc


def read_gridfunction_csv(path) -> GridFunction:
    with open(path) as fh:
        header = fh.readline()
        grid = _parse_csv_header(header, path)
        vals = np.array([float(line) for line in fh if line.strip()])
    return GridFunction(grid, vals.reshape(grid.shape))
