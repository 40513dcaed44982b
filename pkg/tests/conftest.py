"""Shared fixtures: the exponential test scenario and its solved manifold."""

from __future__ import annotations

import pytest

from invmanifold import bounds as B
from invmanifold.admissibility import LipschitzEnvelope, RadiusFunction
from invmanifold.linear_system import build_product_example
from invmanifold.perron import (SolverConfig, build_solver, cq_perturbation,
                                solve_local, solve_manifold, test_perturbation)

# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []

ALPHA = 0.1
BETA = 0.01 / 1.1


@pytest.fixture(scope="session")
def exp_bounds():
    return B.exponential(D=1.0, a=-1.0, b=0.0, eps=0.1)


@pytest.fixture(scope="session")
def exp_system(exp_bounds):
    return build_product_example(*exp_bounds.product_form())


@pytest.fixture(scope="session")
def exp_envelope():
    return LipschitzEnvelope("exp_decay", delta=0.01, rate=0.2)


@pytest.fixture(scope="session")
def exp_f(exp_envelope, exp_system):
    return test_perturbation(exp_envelope, exp_system.splitting)


@pytest.fixture(scope="session")
def exp_solved(exp_system, exp_bounds, exp_f):
    """(graph, solver) for the exponential demo at default solver settings."""
    solver = build_solver(exp_system, exp_bounds, exp_f, SolverConfig(),
                          alpha=ALPHA, beta=BETA)
    graph = solve_manifold(exp_system, exp_bounds, exp_f, solver=solver)
    return graph, solver


@pytest.fixture(scope="session")
def local_case(exp_bounds, exp_system):
    """(graph, f, R, alpha_ball) for the (c, q) demo with R = 0.1 e^{-r/2}."""
    R = RadiusFunction("exp", delta=0.1, beta=0.5)
    f = cq_perturbation(1.0, 2.0, exp_system.splitting)
    # ball envelope 4 * 0.01 e^{-r}: alpha = 0.04 / 0.9, beta = 0.04 / 1.9
    alpha, beta = 0.04 / 0.9, 0.04 / 1.9
    graph, _ = solve_local(exp_system, exp_bounds, f, R, SolverConfig(s_valid=6.0),
                           alpha=alpha, beta=beta)
    return graph, f, R, alpha


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
