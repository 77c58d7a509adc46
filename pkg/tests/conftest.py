"""Shared model fixtures.

The benchmark solves are session-scoped: several test modules and most
acceptance criteria reuse the same converged solutions.
"""

import numpy as np
import pytest

from torusmfg.grid import Grid
from torusmfg.models import (
    ConvolutionCoupling,
    Lagrangian,
    LogCoupling,
    ModelSpec,
    PowerCoupling,
    TrigPoly,
)
from torusmfg.mfg import solve_mfg

COS_POTENTIAL = TrigPoly.from_terms(1, [((1,), 0.5, 0.0)])
BENCH_KERNEL = TrigPoly.from_terms(1, [((0,), 1.0, 0.0), ((1,), 0.5, 0.0)])


def make_model(n=64, tau=0.1, dim=1, potential=None, coupling=None, **kwargs) -> ModelSpec:
    if potential is None:
        potential = TrigPoly.zero(dim)
    if coupling is None:
        coupling = PowerCoupling(0.5)
    return ModelSpec(
        grid=Grid(dim, n),
        tau=tau,
        lagrangian=Lagrangian(potential=potential),
        coupling=coupling,
        **kwargs,
    )


@pytest.fixture(scope="session")
def trivial_power_model():
    return make_model(n=64, tau=0.1, coupling=PowerCoupling(0.5))


@pytest.fixture(scope="session")
def trivial_power_sol(trivial_power_model):
    return solve_mfg(trivial_power_model)


@pytest.fixture(scope="session")
def bench_log_model():
    return make_model(n=128, tau=0.1, potential=COS_POTENTIAL, coupling=LogCoupling())


@pytest.fixture(scope="session")
def bench_log_sol(bench_log_model):
    return solve_mfg(bench_log_model)


@pytest.fixture(scope="session")
def bench_nonlocal_model():
    return make_model(
        n=128, tau=0.1, potential=COS_POTENTIAL, coupling=ConvolutionCoupling(BENCH_KERNEL)
    )


@pytest.fixture(scope="session")
def bench_nonlocal_sol(bench_nonlocal_model):
    return solve_mfg(bench_nonlocal_model)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


# ---------------------------------------------------------------------------
# Acceptance reporting: one line per criterion in the terminal summary.
# ---------------------------------------------------------------------------

ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def record_acceptance(number: int, name: str, passed: bool, detail: str = ""):
    ACCEPTANCE_RESULTS.append((number, name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} [{status}] {name}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
