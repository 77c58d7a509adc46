"""Coupled MFG solver and structural-diagnostic tests."""

import numpy as np
import pytest

from torusmfg.errors import ConvergenceError
from torusmfg.grid import GridFunction, norm_l1, random_smooth
from torusmfg.lax import lax
from torusmfg.measure import Density, holonomic_residual
from torusmfg.mfg import (
    UsageError,
    exponential_functional,
    log_coupling_identity,
    monotonicity_gap,
    solve_mfg,
    weak_solution_residual,
)
from torusmfg.models import LogCoupling, PowerCoupling, TrigPoly

from conftest import COS_POTENTIAL, make_model


class TestTrivialEquilibria:
    @pytest.mark.parametrize("tau", [0.4, 0.1])
    def test_power_uniform_state(self, tau):
        model = make_model(tau=tau, coupling=PowerCoupling(0.5))
        sol = solve_mfg(model)
        assert sol.rho == pytest.approx(-1.0, abs=1e-8)
        assert np.max(np.abs(sol.m.values - 1.0)) < 1e-8
        assert np.max(np.abs(sol.V.q)) < 1e-8
        assert np.max(sol.u.values) - np.min(sol.u.values) < 1e-8

    def test_log_uniform_state(self):
        model = make_model(tau=0.1, coupling=LogCoupling())
        sol = solve_mfg(model)
        assert sol.rho == pytest.approx(0.0, abs=1e-8)
        assert np.max(np.abs(sol.m.values - 1.0)) < 1e-8

    def test_energy_against_rho(self, trivial_power_sol):
        assert trivial_power_sol.energy == pytest.approx(1.0, abs=1e-10)
        assert trivial_power_sol.energy + trivial_power_sol.rho == pytest.approx(
            0.0, abs=1e-10
        )


class TestBenchmarkSolve:
    def test_enforced_invariants(self, bench_log_model, bench_log_sol):
        diag = bench_log_sol.diagnostics
        for name in ("hj_residual", "measure_residual", "energy_identity", "bracket", "mass"):
            assert diag[name]["passed"], (name, diag[name])

    def test_support_property(self, bench_log_model, bench_log_sol, rng):
        for _ in range(5):
            f = random_smooth(bench_log_model.grid, rng, amplitude=1.0)
            r = holonomic_residual(
                bench_log_model, bench_log_sol.V, bench_log_sol.m, f
            )
            assert abs(r) <= 10 * bench_log_model.tol.mfg_tol

    def test_uniqueness_from_independent_starts(self, bench_log_model, bench_log_sol):
        x = bench_log_model.grid.axis()
        start = Density.normalized(bench_log_model.grid, 1.0 + 0.4 * np.cos(2 * np.pi * x))
        other = solve_mfg(bench_log_model, m0=start)
        assert abs(other.rho - bench_log_sol.rho) <= 1e-6
        assert norm_l1(
            GridFunction(bench_log_model.grid, other.m.values - bench_log_sol.m.values)
        ) <= 1e-6
        du = other.u.values - bench_log_sol.u.values
        assert np.max(du) - np.min(du) <= 1e-6

    def test_nonlocal_invariants_and_semiconvexity(
        self, bench_nonlocal_model, bench_nonlocal_sol
    ):
        from torusmfg.lax import semiconvexity_modulus

        diag = bench_nonlocal_sol.diagnostics
        assert diag["hj_residual"]["passed"] and diag["measure_residual"]["passed"]
        mod = semiconvexity_modulus(bench_nonlocal_sol.u)
        assert mod >= -bench_nonlocal_model.semiconvexity_limit(1.0)

    def test_fictitious_play_scheme(self):
        model = make_model(tau=0.1, coupling=PowerCoupling(0.5))
        sol = solve_mfg(model, scheme="fictitious")
        assert sol.rho == pytest.approx(-1.0, abs=1e-8)

    def test_outer_cap_raises(self, bench_log_model):
        with pytest.raises(ConvergenceError, match="damping"):
            solve_mfg(bench_log_model, max_outer=1)

    def test_value_bound_power_coupling(self):
        # with the smoothed-max normalization, u <= tau (osc U + F(1))
        model = make_model(
            n=64, tau=0.1, potential=COS_POTENTIAL, coupling=PowerCoupling(0.5),
            normalization="max_smooth",
        )
        sol = solve_mfg(model)
        pot = model.lagrangian.potential
        bound = model.tau * (pot.max_value() - pot.min_value() + 1.0)
        assert np.max(sol.u.values) <= bound + 1e-9

    def test_2d_small_model(self):
        pot = TrigPoly.from_terms(2, [((1, 0), 0.1, 0.0), ((0, 1), 0.05, 0.0)])
        model = make_model(n=16, dim=2, tau=0.1, potential=pot, coupling=PowerCoupling(0.5))
        sol = solve_mfg(model)
        for name in ("hj_residual", "measure_residual", "energy_identity", "bracket", "mass"):
            assert sol.diagnostics[name]["passed"], name


class TestLogIdentity:
    def test_trivial_equals_one(self):
        model = make_model(tau=0.1, coupling=LogCoupling())
        sol = solve_mfg(model)
        lhs, rhs = log_coupling_identity(model, sol)
        assert lhs == pytest.approx(1.0, abs=1e-10)
        assert rhs == pytest.approx(1.0, abs=1e-10)

    def test_benchmark_identity(self, bench_log_model, bench_log_sol):
        lhs, rhs = log_coupling_identity(bench_log_model, bench_log_sol)
        assert abs(lhs - rhs) <= 1e-6

    def test_solution_minimizes_functional(self, bench_log_model, bench_log_sol, rng):
        target = np.exp(bench_log_sol.rho)
        for _ in range(10):
            phi = random_smooth(bench_log_model.grid, rng, amplitude=0.3)
            assert exponential_functional(bench_log_model, phi) >= target - 1e-8

    def test_wrong_coupling_rejected(self, trivial_power_model, trivial_power_sol):
        with pytest.raises(UsageError):
            log_coupling_identity(trivial_power_model, trivial_power_sol)


def perturbed_pair(model, sol, rng, u_amp=0.05, m_amp=0.2):
    u = GridFunction(model.grid, sol.u.values + random_smooth(model.grid, rng, 2, u_amp).values)
    m = Density.normalized(
        model.grid, sol.m.values * (1.0 + random_smooth(model.grid, rng, 2, m_amp).values)
    )
    return (0.0, u, m, lax(model, u).V)


class TestMonotonicityGap:
    def test_identical_triples(self, bench_log_model, bench_log_sol, rng):
        s = perturbed_pair(bench_log_model, bench_log_sol, rng)
        assert monotonicity_gap(bench_log_model, s, s) == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("fixture", ["bench_log", "bench_nonlocal"])
    def test_random_pairs_nonnegative(self, fixture, request, rng):
        model = request.getfixturevalue(f"{fixture}_model")
        sol = request.getfixturevalue(f"{fixture}_sol")
        for _ in range(10):
            s1 = perturbed_pair(model, sol, rng)
            s2 = perturbed_pair(model, sol, rng)
            assert monotonicity_gap(model, s1, s2) >= -1e-8

    def test_value_terms_alone_nonnegative(self, bench_log_model, bench_log_sol, rng):
        # equal densities isolate the two value-function bracket terms
        model, sol = bench_log_model, bench_log_sol
        for _ in range(5):
            s1 = perturbed_pair(model, sol, rng, m_amp=0.0)
            s2 = perturbed_pair(model, sol, rng, m_amp=0.0)
            assert np.array_equal(s1[2].values, s2[2].values)
            assert monotonicity_gap(model, s1, s2) >= -1e-8


class TestWeakSolutionResidual:
    def test_solution_tests_itself(self, bench_log_model, bench_log_sol):
        val = weak_solution_residual(
            bench_log_model,
            bench_log_sol,
            (bench_log_sol.rho, bench_log_sol.u, bench_log_sol.m),
        )
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_mass_one_cancellation(self, bench_log_model, bench_log_sol):
        # with m_test = m and phi = u, any lambda gives (lambda-rho)(1-1) = 0
        val = weak_solution_residual(
            bench_log_model,
            bench_log_sol,
            (bench_log_sol.rho + 3.0, bench_log_sol.u, bench_log_sol.m),
        )
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_random_tests_nonnegative(self, rng):
        model = make_model(tau=0.1, coupling=LogCoupling())
        sol = solve_mfg(model)
        for _ in range(20):
            phi = random_smooth(model.grid, rng, amplitude=0.2)
            m_test = Density.normalized(
                model.grid, 1.0 + random_smooth(model.grid, rng, 3, 0.5).values
            )
            lam = sol.rho + float(rng.normal(scale=0.3))
            assert weak_solution_residual(model, sol, (lam, phi, m_test)) >= -1e-8
