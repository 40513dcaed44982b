import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ALPHA, BETA
from invmanifold import bounds as B
from invmanifold.admissibility import LipschitzEnvelope, RadiusFunction
from invmanifold.errors import ConvergenceError, ExtrapolationError, PreconditionError
from invmanifold.linear_system import Splitting, diagonal_system
from invmanifold.perron import (ManifoldGraph, SolverConfig, ball_envelope, build_solver,
                                cq_perturbation, eval_manifold, read_manifold_json,
                                seed_trajectory, solve_inner, solve_local, solve_manifold,
                                test_perturbation, truncate_perturbation,
                                write_manifold_csv, write_manifold_json, zero_perturbation)
from invmanifold.verification import check_inner_bounds

SP = Splitting.coordinate(1, 1)
vec2 = st.tuples(st.floats(-3, 3), st.floats(-3, 3)).map(np.array)


def test_zero_perturbation_gives_zero_graph(exp_system, exp_bounds):
    g = solve_manifold(exp_system, exp_bounds, zero_perturbation(),
                       SolverConfig(s_valid=1.0), alpha=0.0, beta=0.0)
    assert np.all(g.values == 0.0)
    assert g.outer_iterations == 1


def test_graph_invariants(exp_solved):
    g, _ = exp_solved
    assert np.all(g.values[:, len(g.z) // 2] == 0.0)
    assert np.max(g.lipschitz_constants()) <= 1 + 1e-6
    assert g.error_bound == pytest.approx(sum(g.error_components.values()))
    assert g.error_bound < 1e-4


def test_eval_manifold_reproduces_nodes_and_rejects_outside(exp_solved):
    g, _ = exp_solved
    i, j = 7, 3
    xi = g.node_xi(i)[j]
    np.testing.assert_array_equal(eval_manifold(g, g.times[i], xi), g.values[i, j])
    mid = eval_manifold(g, 0.5 * (g.times[i] + g.times[i + 1]), xi)
    assert np.all(np.isfinite(mid))
    np.testing.assert_array_equal(eval_manifold(g, 1.0, [0.0]), [0.0])
    with pytest.raises(ExtrapolationError):
        eval_manifold(g, g.s_nodes[-1] + 1.0, [0.1])
    with pytest.raises(ExtrapolationError):
        eval_manifold(g, 1.0, [2.0 * g.L[0]])


def test_serialization_round_trip(exp_solved, tmp_path):
    g, _ = exp_solved
    path = tmp_path / "m.json"
    write_manifold_json(g, path)
    back = read_manifold_json(path)
    np.testing.assert_array_equal(back.values, g.values[: g.n_valid + 1])
    assert back.error_bound == g.error_bound
    for s, xi in [(0.0, 0.3), (3.33, -0.71), (9.99, 0.5)]:
        np.testing.assert_array_equal(eval_manifold(back, s, [xi]), eval_manifold(g, s, [xi]))
    again = ManifoldGraph.from_dict(back.to_dict())
    np.testing.assert_array_equal(again.values, back.values)
    csv_path = tmp_path / "m.csv"
    write_manifold_csv(g, csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "s,xi_1,phi_1"
    assert len(lines) == 1 + (g.n_valid + 1) * len(g.z)


def test_inner_trajectories_respect_weighted_bound(exp_solved, exp_bounds):
    g, solver = exp_solved
    trs = [solve_inner(g, solver, s, [xi]) for s in (0.0, 2.0) for xi in (0.2, 0.9, -0.5)]
    rec = check_inner_bounds(trs, g.alpha, exp_bounds)
    assert rec["ok"], rec
    assert all(t.iterations >= 1 for t in trs)


def test_seed_trajectory_is_linear_evolution(exp_solved, exp_system):
    _, solver = exp_solved
    tr = seed_trajectory(solver, 1.0, [0.5])
    expect = [exp_system.transition(t, 1.0)[0, 0] * 0.5 for t in tr.times[:20]]
    np.testing.assert_allclose(tr.x[:20, 0], expect, rtol=1e-10)


def test_gate_failure_is_precondition_error(exp_system, exp_bounds, exp_f):
    with pytest.raises(PreconditionError):
        build_solver(exp_system, exp_bounds, exp_f, SolverConfig(s_valid=1.0),
                     alpha=0.4, beta=0.1)


def test_iteration_cap_raises(exp_system, exp_bounds, exp_f):
    with pytest.raises(ConvergenceError):
        solve_manifold(exp_system, exp_bounds, exp_f,
                       SolverConfig(s_valid=1.0, outer_max=1), alpha=ALPHA, beta=BETA)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(xi_nodes=32)
    with pytest.raises(ValueError):
        SolverConfig(h=0.0)


@settings(max_examples=60, deadline=None)
@given(u=vec2, v=vec2, t=st.floats(0, 20))
def test_test_perturbation_lipschitz(u, v, t):
    env = LipschitzEnvelope("exp_decay", delta=0.01, rate=0.2)
    f = test_perturbation(env, SP)
    lhs = SP.norm(f(t, u) - f(t, v))
    assert lhs <= env(t) * SP.norm(u - v) * (1 + 1e-12) + 1e-300


@settings(max_examples=60, deadline=None)
@given(u=vec2, v=vec2, r=st.floats(0, 10))
def test_truncation(u, v, r):
    R = RadiusFunction("exp", delta=0.1, beta=0.5)
    f = cq_perturbation(1.0, 2.0, SP)
    ft = truncate_perturbation(f, R, SP)
    Rr = float(R(r))
    u, v = u * Rr, v * Rr
    # identical inside the ball, radial clamp outside
    if SP.norm(u) <= Rr:
        np.testing.assert_array_equal(ft(r, u), f(r, u))
    else:
        np.testing.assert_allclose(ft(r, u), f(r, u * Rr / SP.norm(u)), rtol=1e-12)
    d = SP.norm(u - v)
    if d > 0:
        assert SP.norm(ft(r, u) - ft(r, v)) <= (1 + 1e-6) * 4 * Rr ** 2 * d
    assert ft.envelope(r) == pytest.approx(2 * ball_envelope(f, R)(r))


def test_local_solve_attaches_entry_radii(local_case):
    g, f, R, alpha = local_case
    assert g.S is not None and np.all(g.S >= 1)
    np.testing.assert_allclose(g.entry_radius, R(g.s_nodes) / (2 * g.S))
    assert g.config["local"]["alpha_ball"] == alpha
    assert g.alpha == pytest.approx(2 * alpha)
    assert np.max(g.lipschitz_constants()) <= 1 + 1e-6


def test_local_gate_and_S_failures(exp_system, exp_bounds):
    f = cq_perturbation(1.0, 2.0, SP)
    R = RadiusFunction("exp", delta=0.1, beta=0.5)
    with pytest.raises(PreconditionError):
        solve_local(exp_system, exp_bounds, f, R, SolverConfig(s_valid=1.0),
                    alpha=0.2, beta=0.05)
    R_bad = RadiusFunction("exp", delta=0.1, beta=1.5)
    with pytest.raises(PreconditionError):
        solve_local(exp_system, exp_bounds, f, R_bad, SolverConfig(s_valid=1.0),
                    alpha=0.01, beta=0.001)


def test_two_dimensional_E():
    sys_ = diagonal_system([-1.0, -1.5, 0.0], dim_E=2)
    bd = B.exponential(a=-1.0, b=0.0, eps=0.0)
    env = LipschitzEnvelope("exp_decay", delta=0.01, rate=0.2)
    f = test_perturbation(env, sys_.splitting)
    g = solve_manifold(sys_, bd, f, SolverConfig(s_valid=1.0, h=0.1, xi_nodes=9),
                       alpha=0.05, beta=0.01 / 1.2)
    assert g.values.shape[1] == 81
    assert np.all(g.values[: g.n_valid + 1, 40] == 0.0)
    assert np.max(g.lipschitz_constants()) <= 1 + 1e-6
    phi = eval_manifold(g, 0.55, [0.3, -0.2])
    assert phi.shape == (1,) and np.abs(phi[0]) <= 0.5
