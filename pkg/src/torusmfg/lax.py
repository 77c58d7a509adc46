"""One-step dynamic-programming (Lax) operator and its relatives.

For a model with kernel smoothing time tau, the Lax operator is

    (L u)(x) = max_q [ (smoothed u)(x + tau q) - tau L(x, q) ],

evaluated here node by node on the trigonometric interpolant of the smoothed
field.  The maximization is seeded on a coarse control grid and refined by
damped Newton ascent with exact spectral derivatives; nodes where Newton
stalls fall back to a dense grid search.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SearchRadiusError
from .grid import (
    Grid,
    GridFunction,
    SpectralField,
    eval_interpolant,
    gradient,
    laplacian,
    refine_values,
    shifted_values,
    to_spectral,
)
from .kernel import HeatKernel, smooth_spectral
from .models import ModelSpec

SEEDS_PER_AXIS = 17
_MAX_NEWTON_ITERS = 60
_MAX_BACKTRACKS = 30
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class ControlField:
    """One control vector per grid node (row-major node order)."""

    grid: Grid
    q: np.ndarray  # shape (num_nodes, dim)

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.shape != (self.grid.num_nodes, self.grid.dim):
            raise ValueError(
                f"control shape {q.shape} != ({self.grid.num_nodes}, {self.grid.dim})"
            )
        object.__setattr__(self, "q", q)

    @classmethod
    def zero(cls, grid: Grid) -> "ControlField":
        return cls(grid, np.zeros((grid.num_nodes, grid.dim)))

    def component(self, axis: int) -> GridFunction:
        return GridFunction(self.grid, self.q[:, axis].reshape(self.grid.shape))

    def max_norm(self) -> float:
        return float(np.max(np.sqrt(np.sum(self.q**2, axis=1))))


def write_controlfield_csv(v: ControlField, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# dim={v.grid.dim} n={v.grid.n}\n")
        for row in v.q:
            fh.write(",".join(f"{float(c)!r}" for c in row) + "\n")


@dataclass(frozen=True)
class LaxResult:
    Lu: GridFunction
    V: ControlField
    newton_iters: np.ndarray  # per node


def _search_radius(tau: float, ws: SpectralField, osc: float, max_l0: float,
                   c1: float, c2: float) -> float:
    """Search-ball radius: twice the gradient bound, or the coercivity bound."""
    g = _grid_gradient_norm(ws)
    lip = float(np.max(g))
    r_grad = 2.0 * (1.0 + lip)
    r_coerc = float(np.sqrt(max(c1 * (max_l0 + 2.0 * osc / tau) + c2, 0.0)))
    return max(r_grad, r_coerc)


def _grid_gradient_norm(ws: SpectralField) -> np.ndarray:
    from .grid import from_spectral

    f = from_spectral(ws)
    comps = gradient(f)
    if ws.grid.dim == 1:
        return np.abs(comps[0].values)
    return np.sqrt(comps[0].values ** 2 + comps[1].values ** 2)


def _hessian_bound(ws: SpectralField) -> float:
    """Gershgorin bound on |D^2 w|, sampled on a 2x refined grid to cover
    off-grid peaks of the interpolant."""
    grid = ws.grid
    k = grid.wavenumbers()
    ik = 2.0 * np.pi * 1j * k

    def refined_max(c):
        field = SpectralField(grid, c)
        return np.abs(refine_values(field, 2))

    if grid.dim == 1:
        return float(np.max(refined_max(ws.coeffs * ik**2)))
    h11 = refined_max(ws.coeffs * (ik[:, None] ** 2))
    h22 = refined_max(ws.coeffs * (ik[None, :] ** 2))
    h12 = refined_max(ws.coeffs * (ik[:, None] * ik[None, :]))
    row = np.maximum(h11 + h12, h22 + h12)
    return float(np.max(row))


def _seed_values(ws: SpectralField, tau: float, kinetic, seeds: np.ndarray) -> np.ndarray:
    """Objective at every node for each constant control seed.

    A constant control is a rigid shift, so each seed costs one
    phase-modulated inverse FFT.
    """
    out = np.empty((seeds.shape[0], ws.grid.num_nodes))
    for i, q in enumerate(seeds):
        out[i] = shifted_values(ws, tau * q).ravel() - tau * kinetic(q)
    return out


def _newton_refine(ws, x, q, tau, lag, opt_tol, max_iters=_MAX_NEWTON_ITERS):
    """Damped Newton ascent from per-node starts.  Vectorized over nodes.

    Returns (value, q, converged, stalled, iters).
    """
    P, d = x.shape
    q = q.copy()
    val = np.full(P, -np.inf)
    converged = np.zeros(P, dtype=bool)
    stalled = np.zeros(P, dtype=bool)
    iters = np.zeros(P, dtype=int)

    for _ in range(max_iters):
        active = ~(converged | stalled)
        if not active.any():
            break
        xa = x[active]
        qa = q[active]
        w, dw, d2w = eval_interpolant(ws, xa + tau * qa, order=2)
        g = dw - lag.grad_kinetic(qa)
        va = w - tau * lag.kinetic(qa)
        val[active] = va
        resid = np.max(np.abs(g), axis=1)
        done = resid <= opt_tol
        idx_active = np.flatnonzero(active)
        converged[idx_active[done]] = True
        live = ~done
        if not live.any():
            continue
        idx = idx_active[live]
        xl, ql, gl, vl = xa[live], qa[live], g[live], va[live]
        d2l = d2w[live]

        if d == 1:
            denom = 1.0 - tau * d2l[:, 0, 0]
            ok = denom > 1e-6
            dq = np.where(ok, gl[:, 0] / np.where(ok, denom, 1.0), gl[:, 0])[:, None]
        else:
            m11 = 1.0 - tau * d2l[:, 0, 0]
            m22 = 1.0 - tau * d2l[:, 1, 1]
            m12 = -tau * d2l[:, 0, 1]
            det = m11 * m22 - m12**2
            ok = (m11 > 1e-6) & (det > 1e-12)
            safe_det = np.where(ok, det, 1.0)
            dq = np.empty_like(gl)
            dq[:, 0] = (m22 * gl[:, 0] - m12 * gl[:, 1]) / safe_det
            dq[:, 1] = (-m12 * gl[:, 0] + m11 * gl[:, 1]) / safe_det
            dq[~ok] = gl[~ok]  # gradient ascent where the model is not concave

        # backtracking: accept the first step that does not decrease the value
        t = np.ones(len(idx))
        accepted = np.zeros(len(idx), dtype=bool)
        q_new = ql.copy()
        slack = 1e-13 * (1.0 + np.abs(vl))
        for _bt in range(_MAX_BACKTRACKS):
            rem = ~accepted
            if not rem.any():
                break
            trial = ql[rem] + t[rem, None] * dq[rem]
            v_trial, _, _ = eval_interpolant(ws, xl[rem] + tau * trial, order=0)
            v_trial = v_trial - tau * lag.kinetic(trial)
            ok_step = v_trial >= vl[rem] - slack[rem]
            rem_idx = np.flatnonzero(rem)
            good = rem_idx[ok_step]
            q_new[good] = trial[ok_step]
            accepted[good] = True
            t[rem_idx[~ok_step]] *= 0.5
        q[idx[accepted]] = q_new[accepted]
        stalled[idx[~accepted]] = True
        iters[idx] += 1

    # refresh values at the final controls
    w, _, _ = eval_interpolant(ws, x + tau * q, order=0)
    val = w - tau * lag.kinetic(q)
    return val, q, converged, stalled, iters


def _dense_fallback(ws, x, tau, lag, r_max, opt_tol):
    """Dense control search for nodes where Newton stalled."""
    d = x.shape[1]
    if d == 1:
        qs = np.linspace(-r_max, r_max, 4097)[:, None]
    else:
        ax = np.linspace(-r_max, r_max, 129)
        Q1, Q2 = np.meshgrid(ax, ax, indexing="ij")
        qs = np.column_stack([Q1.ravel(), Q2.ravel()])
    best_val = np.full(x.shape[0], -np.inf)
    best_q = np.zeros((x.shape[0], d))
    for i in range(x.shape[0]):
        y = x[i][None, :] + tau * qs
        w, _, _ = eval_interpolant(ws, y, order=0)
        vals = w - tau * lag.kinetic(qs)
        j = int(np.argmax(vals))
        best_val[i] = vals[j]
        best_q[i] = qs[j]
    val, q, converged, _, iters = _newton_refine(
        ws, x, best_q, tau, lag, opt_tol, max_iters=20
    )
    take = val >= best_val
    q = np.where(take[:, None], q, best_q)
    val = np.maximum(val, best_val)
    return val, q, converged, iters


def _maximize(model: ModelSpec, ws: SpectralField, osc: float, max_l0: float,
              c2: float, r_max_override: float | None = None):
    """Per-node maximization of w(x + tau q) - tau K(q) over the control q."""
    grid = model.grid
    tau = model.tau
    lag = model.lagrangian
    opt_tol = model.tol.opt_tol
    consts = lag.constants()
    r_max = r_max_override if r_max_override is not None else _search_radius(
        tau, ws, osc, max_l0, consts["c1"], c2
    )

    axis = np.linspace(-r_max, r_max, SEEDS_PER_AXIS)
    if grid.dim == 1:
        seeds = axis[:, None]
    else:
        Q1, Q2 = np.meshgrid(axis, axis, indexing="ij")
        seeds = np.column_stack([Q1.ravel(), Q2.ravel()])

    seed_vals = _seed_values(ws, tau, lag.kinetic, seeds)
    # strict concavity of the objective makes any single start globally valid
    concave = tau * _hessian_bound(ws) * 1.05 < 0.95
    n_starts = 1 if concave else min(5, seeds.shape[0])
    order = np.argsort(-seed_vals, axis=0)[:n_starts]

    x = grid.nodes()
    P = x.shape[0]
    cand_val = np.empty((n_starts, P))
    cand_q = np.empty((n_starts, P, grid.dim))
    cand_ok = np.empty((n_starts, P), dtype=bool)
    total_iters = np.zeros(P, dtype=int)
    for s in range(n_starts):
        q0 = seeds[order[s]]
        val, q, conv, stalled, iters = _newton_refine(ws, x, q0, tau, lag, opt_tol)
        cand_val[s], cand_q[s], cand_ok[s] = val, q, conv
        total_iters += iters

    # best candidate per node; ties within _TIE_TOL go to the smallest |q|
    best_val = cand_val.max(axis=0)
    tie = cand_val >= best_val[None, :] - _TIE_TOL
    qnorm = np.sqrt(np.sum(cand_q**2, axis=2))
    qnorm_masked = np.where(tie, qnorm, np.inf)
    pick = np.argmin(qnorm_masked, axis=0)
    sel = (pick, np.arange(P))
    val = cand_val[sel]
    q = cand_q[pick, np.arange(P), :]
    ok = cand_ok.any(axis=0)

    if not ok.all():
        bad = np.flatnonzero(~ok)
        warnings.warn(
            f"Newton control search stalled at {bad.size} node(s); "
            "falling back to dense grid search",
            stacklevel=2,
        )
        f_val, f_q, f_conv, f_iters = _dense_fallback(
            ws, x[bad], tau, lag, r_max, opt_tol
        )
        improve = f_val > val[bad]
        val[bad] = np.where(improve, f_val, val[bad])
        q[bad] = np.where(improve[:, None], f_q, q[bad])
        total_iters[bad] += f_iters

    worst = float(np.max(np.sqrt(np.sum(q**2, axis=1))))
    if worst >= r_max * (1.0 - 1e-6):
        node = int(np.argmax(np.sum(q**2, axis=1)))
        raise SearchRadiusError(
            f"R_max too small: maximizer |q|={worst:.6g} at node {node} reached "
            f"the search radius {r_max:.6g} (tau={tau})"
        )
    return val, q, total_iters


def lax(model: ModelSpec, u: GridFunction, kernel: HeatKernel | None = None,
        r_max_override: float | None = None) -> LaxResult:
    """Apply the Lax operator; returns values, the argmax control, and
    per-node Newton iteration counts."""
    grid = model.grid
    if kernel is None:
        kernel = model.heat_kernel()
    ws = smooth_spectral(kernel, u)
    pot = model.lagrangian.potential
    osc = float(np.max(u.values) - np.min(u.values))
    max_l0 = max(abs(pot.max_value()), abs(pot.min_value()))
    c2 = model.lagrangian.constants()["c2"]
    val, q, iters = _maximize(model, ws, osc, max_l0, c2, r_max_override)
    u_pot = pot.on_grid(grid).values.ravel()
    lu = (val + model.tau * u_pot).reshape(grid.shape)
    return LaxResult(
        Lu=GridFunction(grid, lu),
        V=ControlField(grid, q),
        newton_iters=iters,
    )


def kinetic_envelope(model: ModelSpec, w: GridFunction,
                     r_max_override: float | None = None) -> GridFunction:
    """Kinetic-only maximization max_v [w(x + tau v) - tau K(v)] on the raw
    interpolant of w (no smoothing, no potential)."""
    ws = to_spectral(w)
    osc = float(np.max(w.values) - np.min(w.values))
    val, _, _ = _maximize(model, ws, osc, 0.0, 0.0, r_max_override)
    return GridFunction(model.grid, val.reshape(model.grid.shape))


def lax_rate(model: ModelSpec, u: GridFunction,
             kernel: HeatKernel | None = None) -> GridFunction:
    """(L u - u) / tau, the discrete analogue of Delta u + H(x, Du)."""
    res = lax(model, u, kernel=kernel)
    return GridFunction(model.grid, (res.Lu.values - u.values) / model.tau)


def optimality_residual(model: ModelSpec, u: GridFunction, result: LaxResult,
                        kernel: HeatKernel | None = None) -> float:
    """sup over nodes of |D(smoothed u)(x + tau V) - D_q K(V)|."""
    if kernel is None:
        kernel = model.heat_kernel()
    ws = smooth_spectral(kernel, u)
    y = model.grid.nodes() + model.tau * result.V.q
    _, dw, _ = eval_interpolant(ws, y, order=1)
    return float(np.max(np.abs(dw - model.lagrangian.grad_kinetic(result.V.q))))


def consistency_error(model: ModelSpec, phi: GridFunction) -> float:
    """sup-norm defect of (L phi - phi)/tau against Delta phi + H(x, D phi)."""
    rate = lax_rate(model, phi)
    dphi = gradient(phi)
    grad_sq = sum(c.values**2 for c in dphi)
    h_vals = 0.5 * grad_sq + model.lagrangian.potential.on_grid(model.grid).values
    target = laplacian(phi).values + h_vals
    return float(np.max(np.abs(rate.values - target)))


def inner_consistency_defect(model: ModelSpec, phi: GridFunction) -> float:
    """Defect of the smoothed one-step quotient at the computed maximizer.

    Measures sup_x |((eta*phi)(x + tau q*) - phi(x))/tau - <Dphi(x), q*> -
    Delta phi(x)| where q* is the argmax control for phi.
    """
    kernel = model.heat_kernel()
    res = lax(model, phi, kernel=kernel)
    ws = smooth_spectral(kernel, phi)
    x = model.grid.nodes()
    y = x + model.tau * res.V.q
    w_at, _, _ = eval_interpolant(ws, y, order=0)
    quotient = (w_at - phi.values.ravel()) / model.tau
    dphi = gradient(phi)
    dphi_dot_q = sum(
        dphi[a].values.ravel() * res.V.q[:, a] for a in range(model.grid.dim)
    )
    target = dphi_dot_q + laplacian(phi).values.ravel()
    return float(np.max(np.abs(quotient - target)))


def semiconvexity_modulus(f: GridFunction, steps=(1, 2, 4)) -> float:
    """Empirical semiconvexity constant from axis-aligned second differences.

    Returns min over nodes, axes and offsets h in {h, 2h, 4h} of
    (f(x+h) - 2 f(x) + f(x-h)) / |h|^2; a value >= -C certifies the
    discrete semiconvexity bound with constant C.
    """
    grid = f.grid
    worst = np.inf
    for axis in range(grid.dim):
        for s in steps:
            step_len = s * grid.h
            second = (
                np.roll(f.values, -s, axis=axis)
                - 2.0 * f.values
                + np.roll(f.values, s, axis=axis)
            ) / step_len**2
            worst = min(worst, float(np.min(second)))
    return worst
