"""Problem data: separable quadratic Lagrangians, couplings, and model specs.

The built-in Lagrangian is L(x,q) = |q|^2/2 - U(x) with U a trigonometric
polynomial, which keeps the Legendre transform explicit (H(x,p) = |p|^2/2 +
U(x), D_pH = p) and makes the standard convexity/semiconcavity constants
computable.  Couplings are strictly increasing local laws (power, log) or
convolution with a positive-definite trigonometric kernel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError
from .grid import TWO_PI, Grid, GridFunction, eval_offgrid, integrate, to_spectral
from .kernel import HeatKernel

_FINE_SAMPLES_1D = 4096
_FINE_SAMPLES_2D = 512


@dataclass(frozen=True)
class TrigPoly:
    """Real trigonometric polynomial sum_k a_k cos(2 pi k.x) + b_k sin(2 pi k.x).

    ``terms`` maps integer mode vectors (length dim tuples) to (cos, sin)
    amplitude pairs.  The zero polynomial is ``TrigPoly(dim, ())``.
    """

    dim: int
    terms: tuple[tuple[tuple[int, ...], float, float], ...]

    @classmethod
    def from_terms(cls, dim: int, terms) -> "TrigPoly":
        norm = []
        for k, a, b in terms:
            kt = (int(k),) if np.isscalar(k) else tuple(int(v) for v in k)
            if len(kt) != dim:
                raise ConfigError(f"mode {kt} has wrong dimension for dim={dim}")
            norm.append((kt, float(a), float(b)))
        return cls(dim, tuple(norm))

    @classmethod
    def zero(cls, dim: int) -> "TrigPoly":
        return cls(dim, ())

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        scalar_in = pts.ndim <= 1 and self.dim == 1 and pts.size <= 1
        pts = pts.reshape(-1, self.dim) if pts.ndim != 2 else pts
        out = np.zeros(pts.shape[0])
        for k, a, b in self.terms:
            phase = TWO_PI * (pts @ np.asarray(k, dtype=float))
            out += a * np.cos(phase) + b * np.sin(phase)
        return float(out[0]) if scalar_in else out

    def max_mode(self) -> int:
        return max((max(abs(v) for v in k) for k, _, _ in self.terms), default=0)

    def on_grid(self, grid: Grid) -> GridFunction:
        if self.max_mode() >= grid.n // 2:
            raise ConfigError(
                f"mode {self.max_mode()} does not fit on an n={grid.n} grid"
            )
        return GridFunction(grid, self(grid.nodes()).reshape(grid.shape))

    def _fine_points(self) -> np.ndarray:
        m = _FINE_SAMPLES_1D if self.dim == 1 else _FINE_SAMPLES_2D
        x = np.arange(m) / m
        if self.dim == 1:
            return x[:, None]
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([X1.ravel(), X2.ravel()])

    def max_value(self) -> float:
        vals = self(self._fine_points())
        return float(np.max(vals)) if vals.size else 0.0

    def min_value(self) -> float:
        vals = self(self._fine_points())
        return float(np.min(vals)) if vals.size else 0.0

    def hessian_bound(self) -> float:
        """sup_x of the spectral norm of the Hessian, by fine sampling."""
        if not self.terms:
            return 0.0
        pts = self._fine_points()
        if self.dim == 1:
            acc = np.zeros(pts.shape[0])
            for k, a, b in self.terms:
                phase = TWO_PI * k[0] * pts[:, 0]
                acc += (TWO_PI * k[0]) ** 2 * (-a * np.cos(phase) - b * np.sin(phase))
            return float(np.max(np.abs(acc)))
        h11 = np.zeros(pts.shape[0])
        h12 = np.zeros(pts.shape[0])
        h22 = np.zeros(pts.shape[0])
        for k, a, b in self.terms:
            kv = np.asarray(k, dtype=float)
            phase = TWO_PI * (pts @ kv)
            second = -a * np.cos(phase) - b * np.sin(phase)
            h11 += TWO_PI**2 * kv[0] * kv[0] * second
            h12 += TWO_PI**2 * kv[0] * kv[1] * second
            h22 += TWO_PI**2 * kv[1] * kv[1] * second
        half_tr = (h11 + h22) / 2.0
        disc = np.sqrt(((h11 - h22) / 2.0) ** 2 + h12**2)
        return float(np.max(np.maximum(np.abs(half_tr + disc), np.abs(half_tr - disc))))

    def spectral_on_grid(self, grid: Grid) -> np.ndarray:
        """Fourier coefficients in FFT layout (mode k gets (a - i b)/2)."""
        if self.max_mode() >= grid.n // 2:
            raise ConfigError(
                f"mode {self.max_mode()} does not fit on an n={grid.n} grid"
            )
        c = np.zeros(grid.shape, dtype=complex)
        for k, a, b in self.terms:
            idx_pos = tuple(v % grid.n for v in k)
            idx_neg = tuple((-v) % grid.n for v in k)
            if idx_pos == idx_neg:
                c[idx_pos] += a
            else:
                c[idx_pos] += (a - 1j * b) / 2.0
                c[idx_neg] += (a + 1j * b) / 2.0
        return c


@dataclass(frozen=True)
class Lagrangian:
    """Separable Tonelli Lagrangian L(x,q) = |q|^2/2 - U(x)."""

    potential: TrigPoly
    kind: str = "separable_quadratic"

    def kinetic(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return 0.5 * np.sum(q * q, axis=-1)

    def grad_kinetic(self, q: np.ndarray) -> np.ndarray:
        return np.asarray(q, dtype=float)

    def hess_kinetic_diag(self) -> float:
        # D^2_qq K = I for the quadratic kinetic energy
        return 1.0

    def eval(self, x, q) -> np.ndarray:
        """L(x,q) at arbitrary points; x shape (P,d), q shape (P,d)."""
        return self.kinetic(q) - self.potential(x)

    def potential_values(self, grid: Grid) -> GridFunction:
        return self.potential.on_grid(grid)

    def constants(self) -> dict[str, float]:
        """Convexity and semiconcavity constants used by bounds and moduli.

        c0: lower bound on D^2_qq L; (c1, c2): coercivity |q|^2 <= c1 L + c2;
        (k1, k2): second-difference constants of L in (x, q).
        """
        max_u = self.potential.max_value()
        return {
            "c0": 1.0,
            "c1": 2.0,
            "c2": 2.0 * max_u,
            "k1": self.potential.hessian_bound(),
            "k2": 1.0,
        }


@dataclass(frozen=True)
class Hamiltonian:
    """Legendre transform of the quadratic-kinetic Lagrangian."""

    potential: TrigPoly

    def eval(self, x, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return 0.5 * np.sum(p * p, axis=-1) + self.potential(x)

    def grad_p(self, x, p) -> np.ndarray:
        return np.asarray(p, dtype=float)


# ---------------------------------------------------------------------------
# Couplings
# ---------------------------------------------------------------------------


class Coupling:
    """Interface for the population-coupling term F(x, m)."""

    kind: str
    is_local: bool

    def field(self, m: GridFunction) -> GridFunction:
        """F(., m) sampled on the grid of m."""
        raise NotImplementedError

    def eval_at(self, points, m: GridFunction) -> np.ndarray:
        """F(x, m) at arbitrary points, via the trigonometric interpolant."""
        raise NotImplementedError

    def bounds(self) -> tuple[float, float]:
        """(a_F, b_F): min and max of the coupling over probability measures."""
        raise NotImplementedError

    def semiconcavity_constant(self) -> float:
        """k0 of the x-semiconcavity bound; 0 for local couplings."""
        return 0.0

    def monotonicity_pairing(self, m1: GridFunction, m2: GridFunction) -> float:
        """Quadrature value of the monotonicity pairing between two densities."""
        f1 = self.field(m1)
        f2 = self.field(m2)
        diff = GridFunction(m1.grid, (f1.values - f2.values) * (m1.values - m2.values))
        return integrate(diff)


class PowerCoupling(Coupling):
    """Local coupling F(m) = m^a with exponent a in (0, 1)."""

    is_local = True

    def __init__(self, exponent: float):
        if not 0.0 < exponent < 1.0:
            raise ConfigError(f"power exponent must be in (0,1), got {exponent}")
        self.exponent = float(exponent)
        self.kind = "power"

    def scalar(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) ** self.exponent

    def field(self, m: GridFunction) -> GridFunction:
        if np.any(m.values < 0):
            node = tuple(int(i) for i in np.unravel_index(int(np.argmin(m.values)), m.grid.shape))
            raise DomainError(f"power coupling needs m >= 0; m{node} = {m.values[node]}")
        return GridFunction(m.grid, self.scalar(m.values))

    def eval_at(self, points, m: GridFunction) -> np.ndarray:
        vals = eval_offgrid(to_spectral(m), np.atleast_2d(points))
        return self.scalar(np.maximum(vals, 0.0))

    def bounds(self) -> tuple[float, float]:
        # a_F = min F = 0, b_F = F(1) = 1
        return 0.0, 1.0


class LogCoupling(Coupling):
    """Local coupling F(m) = log m (entropic)."""

    is_local = True

    def __init__(self):
        self.kind = "log"

    def scalar(self, v: np.ndarray) -> np.ndarray:
        return np.log(v)

    def field(self, m: GridFunction) -> GridFunction:
        if np.any(m.values <= 0):
            node = tuple(int(i) for i in np.unravel_index(int(np.argmin(m.values)), m.grid.shape))
            raise DomainError(
                f"log coupling needs m > 0 everywhere; m{node} = {m.values[node]}"
            )
        return GridFunction(m.grid, np.log(m.values))

    def eval_at(self, points, m: GridFunction) -> np.ndarray:
        vals = eval_offgrid(to_spectral(m), np.atleast_2d(points))
        if np.any(vals <= 0):
            raise DomainError("log coupling evaluated where interpolated m <= 0")
        return np.log(vals)

    def bounds(self) -> tuple[float, float]:
        # by convention a_F = 0 for the log law; b_F = F(1) = 0
        return 0.0, 0.0


class ConvolutionCoupling(Coupling):
    """Nonlocal coupling F(x, m) = (psi * m)(x) with positive-definite psi."""

    is_local = False

    def __init__(self, psi: TrigPoly):
        for k, a, b in psi.terms:
            if b != 0.0:
                raise ConfigError("convolution kernel must be even (no sin terms)")
            if a <= 0.0:
                raise ConfigError(
                    f"convolution kernel coefficient for mode {k} must be positive"
                )
        self.psi = psi
        self.kind = "nonlocal"

    def field(self, m: GridFunction) -> GridFunction:
        psi_hat = self.psi.spectral_on_grid(m.grid)
        c = np.fft.fftn(m.values) * psi_hat
        return GridFunction(m.grid, np.fft.ifftn(c).real)

    def eval_at(self, points, m: GridFunction) -> np.ndarray:
        psi_hat = self.psi.spectral_on_grid(m.grid)
        conv = np.fft.fftn(m.values) / m.grid.num_nodes * psi_hat
        from .grid import SpectralField

        return eval_offgrid(SpectralField(m.grid, conv), np.atleast_2d(points))

    def bounds(self) -> tuple[float, float]:
        # extremes over Dirac-like measures: min/max of psi itself
        return self.psi.min_value(), self.psi.max_value()

    def semiconcavity_constant(self) -> float:
        # second differences of x -> (psi*m)(x) are bounded by max|psi''| * mass
        return self.psi.hessian_bound()

    def spectral_pairing(self, m1: GridFunction, m2: GridFunction) -> float:
        """Monotonicity pairing in spectral form: sum_k psi_hat(k)|dm_hat(k)|^2."""
        psi_hat = self.psi.spectral_on_grid(m1.grid)
        dm = np.fft.fftn(m1.values - m2.values) / m1.grid.num_nodes
        return float(np.sum(psi_hat.real * np.abs(dm) ** 2))


def monotonicity_selfcheck(coupling: Coupling, m1: GridFunction, m2: GridFunction) -> float:
    """The pairing int (F(m1)-F(m2)) d(m1-m2); nonnegative for monotone F."""
    return coupling.monotonicity_pairing(m1, m2)


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------

NORMALIZATIONS = ("point", "max_smooth")


@dataclass(frozen=True)
class Tolerances:
    hj_tol: float = 1e-9
    fp_tol: float = 1e-10
    mfg_tol: float = 1e-7
    opt_tol: float = 1e-8
    ref_tol: float = 1e-10


@dataclass(frozen=True)
class ModelSpec:
    """Full description of one tau-discrete MFG problem."""

    grid: Grid
    tau: float
    lagrangian: Lagrangian
    coupling: Coupling
    normalization: str = ""
    tol: Tolerances = field(default_factory=Tolerances)
    damping: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.normalization == "":
            # local couplings follow the smoothed-max convention, nonlocal
            # ones are pinned at the origin node
            default = "max_smooth" if self.coupling.is_local else "point"
            object.__setattr__(self, "normalization", default)
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if self.coupling.kind == "log":
            c1 = self.lagrangian.constants()["c1"]
            if self.tau >= 2.0 / c1:
                warnings.warn(
                    f"log coupling with tau={self.tau} >= {2.0 / c1}: outside the "
                    "guaranteed existence range, attempting anyway",
                    stacklevel=2,
                )

    def heat_kernel(self) -> HeatKernel:
        return HeatKernel.create(self.grid, self.tau)

    def hamiltonian(self) -> Hamiltonian:
        return Hamiltonian(self.lagrangian.potential)

    def with_tau(self, tau: float) -> "ModelSpec":
        return ModelSpec(
            grid=self.grid,
            tau=tau,
            lagrangian=self.lagrangian,
            coupling=self.coupling,
            normalization=self.normalization,
            tol=self.tol,
            damping=self.damping,
            seed=self.seed,
        )

    def coupling_bounds(self) -> tuple[float, float]:
        return self.coupling.bounds()

    def ergodic_constant_bracket(self) -> tuple[float, float]:
        """Admissible interval for -rho: [min L + a_F, max_x L(x,0) + b_F]."""
        a_f, b_f = self.coupling.bounds()
        lo = -self.lagrangian.potential.max_value() + a_f
        hi = -self.lagrangian.potential.min_value() + b_f
        return lo, hi

    def semiconvexity_limit(self, tau: float | None = None) -> float:
        """The modulus Lambda(tau) from the model constants."""
        c = self.lagrangian.constants()
        k1 = c["k1"]
        k2 = c["k2"]
        k0 = self.coupling.semiconcavity_constant()
        t = self.tau if tau is None else tau
        s = (k1 + k0) * t
        return 0.5 * (s + np.sqrt(s * s + 4.0 * k1 * k2))


def eval_L(model: ModelSpec, x, q) -> np.ndarray:
    """Lagrangian value L(x, q) at arbitrary points."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    return model.lagrangian.eval(x, q)


def eval_F(model: ModelSpec, x, m: GridFunction) -> np.ndarray:
    """Coupling value F(x, m) at arbitrary points."""
    return model.coupling.eval_at(x, m)
