"""Continuum reference solver for the 1D stationary MFG system.

With the quadratic Hamiltonian the stationary Fokker-Planck equation is
solved exactly by m proportional to exp(v), which reduces the coupled system
to one scalar ergodic HJB equation

    v'' + (v')^2 / 2 + U = rho + F(e^v / Z),

solved by Newton with dense spectral differentiation matrices, the zero-mean
normalization, and rho as the solvability multiplier.  The result serves as
the machine-precision oracle for the small-tau behavior of the discrete
scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError
from .grid import TWO_PI, Grid, GridFunction, gradient, laplacian, norm_l1
from .kernel import smooth
from .measure import Density
from .mfg import DiscreteSolution, UsageError, solve_mfg
from .models import ModelSpec, TrigPoly

_NEWTON_CAP = 60
_NONLOCAL_OUTER_CAP = 400


@dataclass
class ContinuumSolution:
    rho: float
    v: GridFunction
    m: Density
    newton_iters: int
    residual: float


def _diff_matrices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense spectral d/dx and d^2/dx^2 matrices on n periodic nodes."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    ik = TWO_PI * 1j * k
    ik1 = ik.copy()
    ik1[n // 2] = 0.0
    eye_hat = np.fft.fft(np.eye(n), axis=0)
    d1 = np.fft.ifft(eye_hat * ik1[:, None], axis=0).real
    d2 = np.fft.ifft(eye_hat * (ik**2)[:, None], axis=0).real
    return d1, d2


def _newton_hjb(u_vals, d1, d2, source_fn, jac_fn, ref_tol, v0=None):
    """Newton with line search on S(v) = (I - P0) R(v) + P0 v.

    ``source_fn(v, m)`` returns the coupling contribution F(., m) and
    ``jac_fn(v, m)`` its Jacobian (possibly zero for frozen sources).
    """
    n = len(u_vals)
    h = 1.0 / n
    v = np.zeros(n) if v0 is None else v0.copy()

    def residual(v):
        m = np.exp(v)
        m /= np.sum(m) * h
        r = d2 @ v + 0.5 * (d1 @ v) ** 2 + u_vals - source_fn(v, m)
        return r, m

    # the stopping level sits above the rounding floor of the spectral
    # second derivative, ~ (pi n)^2 * eps
    stop = max(ref_tol / 5.0, (np.pi * n) ** 2 * 2e-16)
    total = 0
    for _ in range(_NEWTON_CAP):
        r, m = residual(v)
        s = r - np.mean(r) + np.mean(v)
        if np.max(np.abs(s)) <= stop:
            return v, total, float(np.max(np.abs(r - np.mean(r))))
        jr = d2 + np.diag(d1 @ v) @ d1 - jac_fn(v, m)
        js = jr - np.ones((n, n)) / n @ jr + np.ones((n, n)) / n
        dv = np.linalg.solve(js, -s)
        # backtracking on the norm of S
        base = np.linalg.norm(s)
        step = 1.0
        for _bt in range(40):
            r_t, _ = residual(v + step * dv)
            s_t = r_t - np.mean(r_t) + np.mean(v + step * dv)
            if np.linalg.norm(s_t) <= (1.0 - 1e-4 * step) * base:
                break
            step *= 0.5
        else:
            raise ConvergenceError(
                "continuum Newton line search failed",
                history=[base],
            )
        v = v + step * dv
        total += 1
    raise ConvergenceError(
        f"continuum Newton did not converge in {_NEWTON_CAP} iterations"
    )


def _resample(vals: np.ndarray, n_to: int) -> np.ndarray:
    """Exact resampling of a periodic sample set between nested power-of-two
    grids: spectral zero-padding upward, node restriction downward."""
    n_from = len(vals)
    if n_to == n_from:
        return vals.copy()
    if n_to > n_from:
        factor = n_to // n_from
        c = np.fft.fft(vals)
        big = np.zeros(n_to, dtype=complex)
        big[: n_from // 2] = c[: n_from // 2]
        big[-(n_from // 2) + 1 :] = c[n_from // 2 + 1 :]
        big[n_from // 2] = c[n_from // 2] / 2.0
        big[n_to - n_from // 2] += c[n_from // 2] / 2.0
        return np.fft.ifft(big).real * factor
    stride = n_from // n_to
    return vals[::stride].copy()


def solve_continuum(model: ModelSpec) -> ContinuumSolution:
    """Solve the stationary MFG system in 1D to the model's ref_tol.

    Newton runs on an internal grid no finer than 128 nodes (which keeps the
    spectral second-derivative rounding floor well under ref_tol; the solution
    itself is analytic, so 128 modes are exact to machine precision) and the
    fields are then resampled to the model grid.
    """
    if model.grid.dim != 1:
        raise UsageError("the continuum reference solver is 1D only")
    grid = model.grid
    n = min(grid.n, 128)
    if model.lagrangian.potential.max_mode() >= n // 4:
        n = grid.n
    solver_grid = Grid(1, n)
    h = 1.0 / n
    d1, d2 = _diff_matrices(n)
    u_vals = model.lagrangian.potential.on_grid(solver_grid).values
    ref_tol = model.tol.ref_tol
    coupling = model.coupling

    if coupling.is_local:
        if coupling.kind == "log":
            def source_fn(v, m):
                return np.log(m)

            def jac_fn(v, m):
                dm = np.diag(m) - np.outer(m, m) * h
                return np.diag(1.0 / m) @ dm
        else:  # power
            a = coupling.exponent

            def source_fn(v, m):
                return m**a

            def jac_fn(v, m):
                dm = np.diag(m) - np.outer(m, m) * h
                return np.diag(a * m ** (a - 1.0)) @ dm

        v, iters, _ = _newton_hjb(u_vals, d1, d2, source_fn, jac_fn, ref_tol)
        m = np.exp(v)
        m /= np.sum(m) * h
        rho = float(np.mean(d2 @ v + 0.5 * (d1 @ v) ** 2 + u_vals - source_fn(v, m)))
    else:
        # nonlocal: damped outer iteration on the density with the same
        # exponential elimination inside
        m = np.ones(n)
        v = np.zeros(n)
        iters = 0
        lam = 0.5
        for _ in range(_NONLOCAL_OUTER_CAP):
            g_vals = coupling.field(GridFunction(solver_grid, m)).values

            def source_fn(vv, mm, g=g_vals):
                return g

            def jac_fn(vv, mm):
                return np.zeros((n, n))

            v, it, _ = _newton_hjb(u_vals, d1, d2, source_fn, jac_fn, ref_tol, v0=v)
            iters += it
            m_new = np.exp(v)
            m_new /= np.sum(m_new) * h
            gap = np.sum(np.abs(m_new - m)) * h
            m = (1.0 - lam) * m + lam * m_new
            if gap <= 1e-13:
                m = m_new
                break
        else:
            raise ConvergenceError("nonlocal continuum outer iteration stalled")
        g_vals = coupling.field(GridFunction(solver_grid, m)).values
        rho = float(np.mean(d2 @ v + 0.5 * (d1 @ v) ** 2 + u_vals - g_vals))

    v_solver = GridFunction(solver_grid, v - np.mean(v))
    m_solver = Density(solver_grid, m)
    hjb_res, fp_res = pde_residuals(model, rho, v_solver, m_solver)
    residual = max(hjb_res, fp_res)
    if residual > ref_tol:
        raise ConvergenceError(
            f"continuum residuals too large: hjb={hjb_res:g} fp={fp_res:g}"
        )
    v_fun = GridFunction(grid, _resample(v_solver.values, grid.n))
    m_fun = Density(grid, np.maximum(_resample(m_solver.values, grid.n), 0.0))
    return ContinuumSolution(
        rho=rho,
        v=v_fun,
        m=m_fun,
        newton_iters=iters,
        residual=residual,
    )


def pde_residuals(model: ModelSpec, rho: float, v: GridFunction,
                  m: Density) -> tuple[float, float]:
    """Spectral sup-norm residuals of both continuum equations."""
    grid = v.grid
    u_vals = model.lagrangian.potential.on_grid(grid).values
    dv = gradient(v)[0]
    if model.coupling.kind == "log":
        f_vals = np.log(m.values)
    elif model.coupling.kind == "power":
        f_vals = m.values**model.coupling.exponent
    else:
        f_vals = model.coupling.field(m).values
    hjb = laplacian(v).values + 0.5 * dv.values**2 + u_vals - rho - f_vals
    flux = GridFunction(grid, m.values * dv.values)
    fp = laplacian(GridFunction(grid, m.values)).values - gradient(flux)[0].values
    return float(np.max(np.abs(hjb))), float(np.max(np.abs(fp)))


def continuum_holonomic_residual(sol: ContinuumSolution, phi: GridFunction) -> float:
    """Quadrature of int (Delta phi + phi' v') m dx; zero for the stationary
    density of the drift v'."""
    grid = phi.grid
    dphi = gradient(phi)[0]
    dv = gradient(sol.v)[0]
    integrand = laplacian(phi).values + dphi.values * dv.values
    return float(np.sum(integrand * sol.m.values)) * grid.h


def manufactured_log_potential(amplitude: float) -> tuple[TrigPoly, float]:
    """Potential whose log-coupling solution is exactly v = A cos(2 pi x).

    Back-solved from the HJB equation with rho = 0 and m = e^v / Z; returns
    (U, log Z).
    """
    a = float(amplitude)
    fine = np.arange(8192) / 8192.0
    log_z = float(np.log(np.mean(np.exp(a * np.cos(TWO_PI * fine)))))
    terms = [
        ((0,), -log_z - np.pi**2 * a**2, 0.0),
        ((1,), a * (1.0 + 4.0 * np.pi**2), 0.0),
        ((2,), np.pi**2 * a**2, 0.0),
    ]
    return TrigPoly.from_terms(1, terms), log_z


def manufactured_solution(grid: Grid, amplitude: float) -> tuple[GridFunction, Density, float]:
    """The exact fields (v*, m*, rho*=0) of the manufactured log model."""
    _, log_z = manufactured_log_potential(amplitude)
    x = grid.axis()
    v = amplitude * np.cos(TWO_PI * x)
    m = np.exp(v - log_z)
    return GridFunction(grid, v - np.mean(v)), Density(grid, m), 0.0


# ---------------------------------------------------------------------------
# Convergence study against the continuum oracle
# ---------------------------------------------------------------------------

WEAK_TEST_MODES = ((0, 1.0), (1, "cos"), (1, "sin"), (2, "cos"), (2, "sin"))


def _weak_test_functions(grid: Grid) -> list[np.ndarray]:
    x = grid.axis()
    funcs = [np.ones_like(x)]
    for k in (1, 2):
        funcs.append(np.cos(TWO_PI * k * x))
        funcs.append(np.sin(TWO_PI * k * x))
    return funcs


@dataclass
class ConvergenceRow:
    tau: float
    rho_err: float
    u_err: float
    m_err: float


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]
    u_mode: str  # "sup" (nonlocal) or "weak" (local)
    error_floor: float  # errors below this count as exact (10 * mfg_tol)
    monotone: dict[str, bool] = field(default_factory=dict)
    checked: bool = True

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.rows]

    def column_ok(self, name: str) -> bool:
        """A column passes if it strictly decreases or sits at the exactness
        floor (the trivial-equilibrium case)."""
        vals = self.column(name)
        return self.monotone.get(name, False) or max(vals) <= self.error_floor

    def passed(self) -> bool:
        return not self.checked or all(
            self.column_ok(c) for c in ("rho_err", "u_err", "m_err")
        )

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("tau,rho_err,u_err,m_err\n")
            for r in self.rows:
                fh.write(f"{r.tau!r},{r.rho_err!r},{r.u_err!r},{r.m_err!r}\n")


def _u_gap(model: ModelSpec, sol: DiscreteSolution, ref: ContinuumSolution) -> float:
    grid = model.grid
    if not model.coupling.is_local:
        # uniform mode: both normalized to vanish at the origin node
        u_d = sol.u.values - sol.u.values[0]
        u_c = ref.v.values - ref.v.values[0]
        return float(np.max(np.abs(u_d - u_c)))
    # weak mode: smoothed-max normalization against max v = 0
    kernel = model.heat_kernel()
    u_d = sol.u.values - float(np.max(smooth(kernel, sol.u).values))
    u_c = ref.v.values - float(np.max(ref.v.values))
    gaps = [
        abs(float(np.sum((u_d - u_c) * g)) * grid.h)
        for g in _weak_test_functions(grid)
    ]
    return max(gaps)


def convergence_report(model: ModelSpec, taus, solutions=None) -> ConvergenceTable:
    """Errors of the discrete solution against the continuum oracle per tau.

    ``solutions`` may carry precomputed DiscreteSolutions (same order as
    ``taus``) to avoid re-solving.
    """
    if model.grid.dim != 1:
        raise UsageError("convergence studies require d = 1")
    ref = solve_continuum(model)
    rows = []
    for i, tau in enumerate(taus):
        sub = model.with_tau(tau)
        sol = solutions[i] if solutions is not None else solve_mfg(sub)
        rows.append(
            ConvergenceRow(
                tau=tau,
                rho_err=abs(sol.rho - ref.rho),
                u_err=_u_gap(sub, sol, ref),
                m_err=norm_l1(GridFunction(model.grid, sol.m.values - ref.m.values)),
            )
        )
    rows.sort(key=lambda r: -r.tau)
    table = ConvergenceTable(
        rows=rows,
        u_mode="weak" if model.coupling.is_local else "sup",
        error_floor=10.0 * model.tol.mfg_tol,
    )
    if len(rows) < 2:
        table.checked = False
        return table
    for col in ("rho_err", "u_err", "m_err"):
        vals = table.column(col)
        table.monotone[col] = all(b < a for a, b in zip(vals, vals[1:]))
    return table
