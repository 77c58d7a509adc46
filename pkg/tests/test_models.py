"""Lagrangian, coupling and configuration tests."""

import numpy as np
import pytest

from torusmfg.config import parse_config_text
from torusmfg.errors import ConfigError, DomainError
from torusmfg.grid import Grid, GridFunction, integrate
from torusmfg.measure import Density
from torusmfg.models import (
    ConvolutionCoupling,
    Hamiltonian,
    Lagrangian,
    LogCoupling,
    PowerCoupling,
    TrigPoly,
    eval_F,
    eval_L,
    monotonicity_selfcheck,
)
from conftest import BENCH_KERNEL, COS_POTENTIAL, make_model


class TestTrigPoly:
    def test_eval_and_grid(self):
        g = Grid(1, 32)
        u = COS_POTENTIAL.on_grid(g)
        assert np.max(np.abs(u.values - 0.5 * np.cos(2 * np.pi * g.axis()))) < 1e-14

    def test_extrema(self):
        assert COS_POTENTIAL.max_value() == pytest.approx(0.5, abs=1e-6)
        assert COS_POTENTIAL.min_value() == pytest.approx(-0.5, abs=1e-6)

    def test_hessian_bound(self):
        # |U''| for 0.5 cos(2 pi x) peaks at 0.5 (2 pi)^2 = 2 pi^2
        assert COS_POTENTIAL.hessian_bound() == pytest.approx(2 * np.pi**2, rel=1e-6)

    def test_spectral_on_grid(self):
        g = Grid(1, 16)
        c = COS_POTENTIAL.spectral_on_grid(g)
        assert c[1] == pytest.approx(0.25)
        assert c[-1] == pytest.approx(0.25)

    def test_mode_overflow(self):
        big = TrigPoly.from_terms(1, [((9,), 1.0, 0.0)])
        with pytest.raises(ConfigError):
            big.on_grid(Grid(1, 16))


class TestLagrangian:
    def test_zero_control_zero_potential(self):
        model = make_model()
        x = np.zeros((3, 1))
        q = np.zeros((3, 1))
        assert np.max(np.abs(eval_L(model, x, q))) == 0.0

    def test_legendre_duality(self, rng):
        # H(x,p) = sup_q p.q - L(x,q), attained at q* = p for quadratic K
        lag = Lagrangian(potential=COS_POTENTIAL)
        ham = Hamiltonian(potential=COS_POTENTIAL)
        x = rng.uniform(size=(20, 1))
        p = rng.normal(size=(20, 1))
        resid = ham.eval(x, p) - (np.sum(p * p, axis=1) - lag.eval(x, p))
        assert np.max(np.abs(resid)) < 1e-12

    def test_coercivity(self, rng):
        # |q|^2 <= c1 L(x,q) + c2 on samples
        lag = Lagrangian(potential=COS_POTENTIAL)
        c = lag.constants()
        x = rng.uniform(size=(50, 1))
        q = rng.normal(scale=3.0, size=(50, 1))
        lhs = np.sum(q * q, axis=1)
        rhs = c["c1"] * lag.eval(x, q) + c["c2"]
        assert np.all(lhs <= rhs + 1e-12)

    def test_constants(self):
        c = Lagrangian(potential=COS_POTENTIAL).constants()
        assert c["c0"] == 1.0 and c["k2"] == 1.0
        assert c["c1"] == 2.0
        assert c["c2"] == pytest.approx(1.0, abs=1e-6)
        assert c["k1"] == pytest.approx(2 * np.pi**2, rel=1e-6)


class TestCouplings:
    def test_power_of_uniform(self):
        g = Grid(1, 16)
        m = Density.uniform(g)
        out = PowerCoupling(0.5).field(m)
        assert np.max(np.abs(out.values - 1.0)) == 0.0

    def test_power_bounds(self):
        assert PowerCoupling(0.3).bounds() == (0.0, 1.0)

    def test_log_bounds(self):
        assert LogCoupling().bounds() == (0.0, 0.0)

    def test_nonlocal_bounds(self):
        # extremized by near-Dirac measures: the range of psi itself
        a, b = ConvolutionCoupling(BENCH_KERNEL).bounds()
        assert a == pytest.approx(0.5, abs=1e-6)
        assert b == pytest.approx(1.5, abs=1e-6)

    def test_nonlocal_of_uniform(self):
        g = Grid(1, 32)
        out = ConvolutionCoupling(BENCH_KERNEL).field(Density.uniform(g))
        assert np.max(np.abs(out.values - 1.0)) < 1e-13

    def test_log_domain_error_names_node(self):
        g = Grid(1, 8)
        vals = np.ones(8)
        vals[3] = 0.0
        with pytest.raises(DomainError, match=r"\(3,\)"):
            LogCoupling().field(GridFunction(g, vals))

    def test_eval_F_power(self):
        g = Grid(1, 16)
        model = make_model(n=16, coupling=PowerCoupling(0.5))
        vals = eval_F(model, np.array([[0.3], [0.8]]), Density.uniform(g))
        assert np.max(np.abs(vals - 1.0)) < 1e-12

    def test_kernel_validation(self):
        with pytest.raises(ConfigError):
            ConvolutionCoupling(TrigPoly.from_terms(1, [((1,), 0.0, 0.5)]))
        with pytest.raises(ConfigError):
            ConvolutionCoupling(TrigPoly.from_terms(1, [((0,), -1.0, 0.0)]))


class TestMonotonicity:
    def test_equal_densities(self):
        g = Grid(1, 32)
        m = Density.uniform(g)
        assert monotonicity_selfcheck(PowerCoupling(0.5), m, m) == 0.0

    def test_power_pair_positive(self):
        g = Grid(1, 64)
        x = g.axis()
        m1 = Density(g, 1.0 + 0.2 * np.cos(2 * np.pi * x))
        m2 = Density.uniform(g)
        val = monotonicity_selfcheck(PowerCoupling(0.5), m1, m2)
        # independent quadrature oracle
        oracle = integrate(
            GridFunction(g, (m1.values**0.5 - 1.0) * (m1.values - 1.0))
        )
        assert val == pytest.approx(oracle, rel=1e-12)
        assert val > 0.0

    def test_nonlocal_spectral_identity(self, rng):
        g = Grid(1, 64)
        coupling = ConvolutionCoupling(BENCH_KERNEL)
        for _ in range(5):
            m1 = Density.normalized(g, 1.0 + rng.uniform(-0.4, 0.4, size=64))
            m2 = Density.normalized(g, 1.0 + rng.uniform(-0.4, 0.4, size=64))
            quad = monotonicity_selfcheck(coupling, m1, m2)
            spectral = coupling.spectral_pairing(m1, m2)
            assert quad == pytest.approx(spectral, rel=1e-10, abs=1e-14)
            assert quad >= 0.0

    @pytest.mark.parametrize(
        "coupling", [PowerCoupling(0.5), LogCoupling(), ConvolutionCoupling(BENCH_KERNEL)]
    )
    def test_random_pairs_nonnegative(self, coupling, rng):
        g = Grid(1, 32)
        for _ in range(20):
            m1 = Density.normalized(g, 0.3 + rng.uniform(size=32))
            m2 = Density.normalized(g, 0.3 + rng.uniform(size=32))
            assert monotonicity_selfcheck(coupling, m1, m2) >= -1e-10


class TestModelSpec:
    def test_normalization_defaults(self):
        assert make_model(coupling=LogCoupling()).normalization == "max_smooth"
        assert (
            make_model(coupling=ConvolutionCoupling(BENCH_KERNEL)).normalization
            == "point"
        )

    def test_log_tau_warning(self):
        with pytest.warns(UserWarning, match="existence range"):
            make_model(tau=1.2, coupling=LogCoupling())

    def test_bracket_endpoints(self):
        model = make_model(potential=COS_POTENTIAL, coupling=PowerCoupling(0.5))
        lo, hi = model.ergodic_constant_bracket()
        assert lo == pytest.approx(-0.5, abs=1e-6)
        assert hi == pytest.approx(1.5, abs=1e-6)

    def test_coupling_bounds_passthrough(self):
        assert make_model(coupling=PowerCoupling(0.5)).coupling_bounds() == (0.0, 1.0)

    def test_semiconvexity_limit_formula(self):
        model = make_model(potential=COS_POTENTIAL, coupling=ConvolutionCoupling(BENCH_KERNEL))
        k1 = 2 * np.pi**2
        k0 = 2 * np.pi**2
        expected = ((k1 + k0) + np.sqrt((k1 + k0) ** 2 + 4 * k1)) / 2
        assert model.semiconvexity_limit(1.0) == pytest.approx(expected, rel=1e-6)


GOOD_CONFIG = """
dim = 1
n = 64            # grid nodes
tau = 0.1
potential = c1=0.5 s2=-0.1
coupling = power
power_exponent = 0.5
damping = 0.4
seed = 7
"""


class TestConfigParsing:
    def test_full_roundtrip(self):
        run = parse_config_text(GOOD_CONFIG)
        model = run.model
        assert model.grid.n == 64
        assert model.tau == 0.1
        assert model.coupling.kind == "power"
        assert model.damping == 0.4
        assert model.seed == 7
        assert model.lagrangian.potential.terms == (((1,), 0.5, 0.0), ((2,), 0.0, -0.1))

    def test_unknown_key_line_number(self):
        text = "dim = 1\nn = 64\ntau = 0.1\ncoupling = log\nwhat = 3\n"
        with pytest.raises(ConfigError, match="line 5"):
            parse_config_text(text)

    def test_duplicate_key(self):
        text = "dim = 1\nn = 64\ntau = 0.1\ntau = 0.2\ncoupling = log\n"
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text(text)

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="coupling"):
            parse_config_text("dim = 1\nn = 64\ntau = 0.1\n")

    def test_bad_term_syntax(self):
        text = "dim = 1\nn = 64\ntau = 0.1\ncoupling = log\npotential = q1=0.5\n"
        with pytest.raises(ConfigError, match="line 5"):
            parse_config_text(text)

    def test_power_needs_exponent(self):
        with pytest.raises(ConfigError, match="power_exponent"):
            parse_config_text("dim = 1\nn = 64\ntau = 0.1\ncoupling = power\n")

    def test_nonlocal_needs_kernel(self):
        with pytest.raises(ConfigError, match="kernel"):
            parse_config_text("dim = 1\nn = 64\ntau = 0.1\ncoupling = nonlocal\n")

    def test_2d_modes(self):
        text = "dim = 2\nn = 16\ntau = 0.1\ncoupling = log\npotential = c1,0=0.2 c0,1=0.1\n"
        run = parse_config_text(text)
        assert run.model.lagrangian.potential.terms[0][0] == (1, 0)
