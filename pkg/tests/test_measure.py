"""Stationary-measure operator tests."""

import numpy as np
import pytest

from torusmfg.errors import ConvergenceError
from torusmfg.grid import GridFunction, integrate, random_smooth
from torusmfg.hj import solve_hj
from torusmfg.lax import ControlField
from torusmfg.measure import (
    Density,
    density_upper_bound,
    fp_consistency,
    holonomic_residual,
    push_smooth,
    stationary,
)

from conftest import COS_POTENTIAL, make_model


def random_control(model, rng, scale=0.3):
    q = rng.normal(scale=scale, size=(model.grid.num_nodes, model.grid.dim))
    return ControlField(model.grid, q)


class TestDensity:
    def test_uniform(self):
        model = make_model()
        m = Density.uniform(model.grid)
        assert integrate(m) == pytest.approx(1.0, abs=1e-14)

    def test_rejects_negative(self):
        model = make_model(n=8) if False else make_model(n=64)
        vals = np.ones(model.grid.shape)
        vals[3] = -0.5
        with pytest.raises(ValueError, match="negative"):
            Density(model.grid, vals)

    def test_rejects_wrong_mass(self):
        model = make_model()
        with pytest.raises(ValueError, match="mass"):
            Density(model.grid, np.full(model.grid.shape, 2.0))


class TestPushSmooth:
    def test_uniform_invariant(self):
        model = make_model(tau=0.1)
        out = push_smooth(model, ControlField.zero(model.grid), Density.uniform(model.grid))
        assert np.max(np.abs(out.values - 1.0)) < 1e-12

    def test_heat_mode_decay(self):
        model = make_model(tau=0.1)
        x = model.grid.axis()
        m = Density(model.grid, 1.0 + 0.4 * np.cos(2 * np.pi * x))
        out = push_smooth(model, ControlField.zero(model.grid), m)
        expected = 1.0 + 0.4 * np.exp(-4 * np.pi**2 * 0.1) * np.cos(2 * np.pi * x)
        assert np.max(np.abs(out.values - expected)) < 1e-12

    def test_constant_drift_translates_uniform(self):
        model = make_model(tau=0.1)
        v = ControlField(model.grid, np.full((model.grid.num_nodes, 1), 0.1))
        out = push_smooth(model, v, Density.uniform(model.grid))
        assert np.max(np.abs(out.values - 1.0)) < 1e-12

    def test_mass_conservation_random(self, rng):
        model = make_model(tau=0.07)
        m = Density.normalized(model.grid, 0.5 + rng.uniform(size=model.grid.shape))
        out = push_smooth(model, random_control(model, rng), m)
        assert integrate(out) == pytest.approx(1.0, abs=1e-12)

    def test_strict_positivity(self, rng):
        model = make_model(tau=0.1)
        m = Density.normalized(model.grid, 0.1 + rng.uniform(size=model.grid.shape))
        out = push_smooth(model, random_control(model, rng), m)
        assert np.min(out.values) > 0.0

    def test_upper_bound_small_tau(self, rng):
        # the (4 pi tau)^{-d/2} ceiling is honest below tau = 1/(4 pi)
        model = make_model(tau=0.05)
        bound = density_upper_bound(model)
        for _ in range(5):
            m = Density.normalized(model.grid, 0.2 + rng.uniform(size=model.grid.shape))
            out = push_smooth(model, random_control(model, rng), m)
            assert np.max(out.values) <= bound + 1e-9

    def test_contraction_in_l1(self, rng):
        model = make_model(tau=0.1)
        v = random_control(model, rng)
        h = model.grid.h
        for _ in range(5):
            m1 = Density.normalized(model.grid, 0.3 + rng.uniform(size=model.grid.shape))
            m2 = Density.normalized(model.grid, 0.3 + rng.uniform(size=model.grid.shape))
            before = np.sum(np.abs(m1.values - m2.values)) * h
            p1 = push_smooth(model, v, m1)
            p2 = push_smooth(model, v, m2)
            after = np.sum(np.abs(p1.values - p2.values)) * h
            assert after < before

    def test_2d_uniform_invariant(self):
        model = make_model(n=16, dim=2, tau=0.1)
        out = push_smooth(model, ControlField.zero(model.grid), Density.uniform(model.grid))
        assert np.max(np.abs(out.values - 1.0)) < 1e-12


class TestStationary:
    def test_zero_drift_gives_uniform(self):
        model = make_model(tau=0.1)
        m = stationary(model, ControlField.zero(model.grid))
        assert np.max(np.abs(m.values - 1.0)) < 1e-10

    def test_unique_from_two_starts(self, rng):
        model = make_model(tau=0.1)
        v = random_control(model, rng)
        m_a = stationary(model, v, m0=Density.uniform(model.grid))
        start = Density.normalized(model.grid, 0.2 + rng.uniform(size=model.grid.shape))
        m_b = stationary(model, v, m0=start)
        gap = np.sum(np.abs(m_a.values - m_b.values)) * model.grid.h
        assert gap <= 10 * model.tol.fp_tol

    def test_iteration_cap(self, rng):
        model = make_model(tau=0.05)
        with pytest.raises(ConvergenceError):
            stationary(model, random_control(model, rng), max_iters=1)

    def test_matches_exponential_profile_as_tau_shrinks(self):
        # for drift = Du the continuum stationary density is e^u / Z; the
        # fixed point of the transport-smooth operator approaches it
        model0 = make_model(potential=COS_POTENTIAL, n=128, tau=0.025)
        hj = solve_hj(model0, GridFunction.constant(model0.grid, 0.0))
        u = hj.u
        from torusmfg.grid import gradient

        du = gradient(u)[0].values.ravel()[:, None]
        target = np.exp(u.values)
        target /= np.sum(target) * model0.grid.h
        gaps = []
        for tau in (0.1, 0.05, 0.025):
            model = model0.with_tau(tau)
            m = stationary(model, ControlField(model.grid, du))
            gaps.append(float(np.sum(np.abs(m.values - target)) * model.grid.h))
        assert gaps[2] < gaps[1] < gaps[0]


class TestHolonomicResidual:
    def test_constant_function_exact_zero(self, rng):
        model = make_model(tau=0.1)
        m = Density.uniform(model.grid)
        f = GridFunction.constant(model.grid, 3.0)
        assert holonomic_residual(model, random_control(model, rng), m, f) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_uniform_zero_drift_cosine(self):
        model = make_model(tau=0.1)
        f = GridFunction(model.grid, np.cos(2 * np.pi * model.grid.axis()))
        r = holonomic_residual(model, ControlField.zero(model.grid), Density.uniform(model.grid), f)
        assert abs(r) < 1e-12

    def test_stationary_pair_small(self, rng):
        model = make_model(potential=COS_POTENTIAL, n=64, tau=0.1)
        hj = solve_hj(model, GridFunction.constant(model.grid, 0.0))
        m = stationary(model, hj.V)
        for _ in range(5):
            f = random_smooth(model.grid, rng, amplitude=1.0)
            r = holonomic_residual(model, hj.V, m, f)
            assert abs(r) <= 10 * model.tol.fp_tol


class TestFPConsistency:
    def test_flat_everything(self):
        model = make_model(tau=0.1)
        d = fp_consistency(
            model, GridFunction.constant(model.grid, 0.0), Density.uniform(model.grid)
        )
        assert d < 1e-12

    def test_heat_kernel_consistency_oracle(self):
        # phi = 0: the defect reduces to ((eta*m - m)/tau - Lap m), which is
        # the heat-semigroup consistency error and must shrink with tau
        model = make_model(n=128)
        x = model.grid.axis()
        m = Density(model.grid, 1.0 + 0.3 * np.cos(2 * np.pi * x))
        phi = GridFunction.constant(model.grid, 0.0)
        defects = [fp_consistency(model.with_tau(t), phi, m) for t in (0.1, 0.05, 0.025)]
        assert defects[2] < defects[1] < defects[0]
        # independent oracle at the smallest tau: exact heat factor on mode 1
        tau = 0.025
        lam = 4 * np.pi**2
        expected = abs((np.exp(-lam * tau) - 1.0) / tau + lam) * 0.3
        assert defects[2] == pytest.approx(expected, rel=1e-6)

    def test_tau_decay_with_drift(self):
        model = make_model(potential=COS_POTENTIAL, n=128)
        x = model.grid.axis()
        phi = GridFunction(model.grid, 0.1 * np.cos(2 * np.pi * x))
        m = Density(model.grid, 1.0 + 0.2 * np.cos(2 * np.pi * x))
        defects = [fp_consistency(model.with_tau(t), phi, m) for t in (0.1, 0.05, 0.025)]
        assert defects[2] < defects[1] < defects[0]
