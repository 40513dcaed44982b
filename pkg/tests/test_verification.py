import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invmanifold import bounds as B
from invmanifold.admissibility import LipschitzEnvelope
from invmanifold.errors import DomainError, PreconditionError
from invmanifold.linear_system import diagonal_system
from invmanifold.perron import SolverConfig, solve_manifold, test_perturbation, zero_perturbation
from invmanifold.verification import (VerifyConfig, check_decay_bound,
                                      check_graph_invariants, check_integrators,
                                      check_invariance, check_local_invariance,
                                      decay_pairs, f_amplification, integrate_semiflow,
                                      local_sample, run_verification, sample_points)


def test_linear_flow_matches_transition(exp_system):
    v = np.array([0.3, -0.2])
    for mode in ("rk", "voc"):
        out = integrate_semiflow(exp_system, zero_perturbation(), 1.0, v, [0.5, 2.0],
                                 mode=mode)
        for tau, y in zip((0.5, 2.0), out):
            np.testing.assert_allclose(y, exp_system.transition(1.0 + tau, 1.0) @ v,
                                       rtol=1e-9, atol=1e-13)


def test_semiflow_edge_cases(exp_system, exp_f):
    np.testing.assert_array_equal(integrate_semiflow(exp_system, exp_f, 0.0, np.zeros(2),
                                                     1.0), np.zeros(2))
    assert integrate_semiflow(exp_system, exp_f, 0.0, [0.1, 0.1], 1.0).shape == (2,)
    assert integrate_semiflow(exp_system, exp_f, 0.0, [0.1, 0.1], [1.0]).shape == (1, 2)
    with pytest.raises(DomainError):
        integrate_semiflow(exp_system, exp_f, 0.0, [0.1, 0.1], -1.0)
    with pytest.raises(ValueError):
        integrate_semiflow(exp_system, exp_f, 0.0, [0.1, 0.1], 1.0, mode="euler")
    with pytest.raises(ValueError):
        integrate_semiflow(diagonal_system([-1.0, 0.0], 1), exp_f, 0.0, [0.1, 0.1], 1.0,
                           mode="voc")


@settings(max_examples=10, deadline=None)
@given(s=st.floats(0, 5), u=st.floats(-1, 1), v=st.floats(-1, 1), tau=st.floats(0.1, 2))
def test_rk_and_voc_agree(exp_system, exp_f, s, u, v, tau):
    a = integrate_semiflow(exp_system, exp_f, s, [u, v], tau)
    b = integrate_semiflow(exp_system, exp_f, s, [u, v], tau, mode="voc")
    assert exp_system.splitting.norm(a - b) < 1e-7


def test_amplification_oracle_for_linear_flow(exp_system):
    # with f = 0 an F-offset grows exactly like V(t, s)
    taus = [0.5, 3.0]
    amp = f_amplification(exp_system, zero_perturbation(), 2.0, np.array([0.1, 0.0]),
                          taus, 1e-3)
    expect = [exp_system.transition(2.0 + t, 2.0)[1, 1] for t in taus]
    np.testing.assert_allclose(amp, expect, rtol=1e-8)


def test_invariance_and_control(exp_solved, exp_system, exp_f):
    g, _ = exp_solved
    sample = sample_points(g, VerifyConfig(n_xi=3), seed=4)
    rec = check_invariance(g, exp_system, exp_f, sample)
    assert rec["ok"] and rec["within_base_tol"] and rec["n_samples"] == 9
    ctrl = check_invariance(g, exp_system, exp_f, sample[:3], offset=0.1)
    assert ctrl["expected"] == "fail" and ctrl["ok"]


def test_decay_bound_and_negative_control(exp_solved, exp_system, exp_f, exp_bounds):
    g, _ = exp_solved
    cfg = VerifyConfig(n_pairs=3)
    pairs = decay_pairs(g, cfg, seed=2)
    rec = check_decay_bound(g, exp_system, exp_f, exp_bounds, g.alpha, pairs,
                            cfg.decay_gaps)
    assert rec["ok"] and rec["n_samples"] == 9 and len(rec["curve"]) == 9
    shrunk = check_decay_bound(g, exp_system, exp_f, exp_bounds.scaled(0.01), g.alpha,
                               pairs, cfg.decay_gaps)
    assert not shrunk["ok"]


def test_graph_invariant_violations_are_detected(exp_solved):
    g, _ = exp_solved
    assert check_graph_invariants(g)["ok"]
    bad = copy_graph(g)
    bad.values[0, len(g.z) // 2] = 1e-12
    assert not check_graph_invariants(bad)["ok"]
    steep = copy_graph(g)
    steep.values = steep.values * 0 + steep.node_xi(0)[None, :, :] * 1.5
    assert not check_graph_invariants(steep)["ok"]


def copy_graph(g):
    from invmanifold.perron import ManifoldGraph
    return ManifoldGraph.from_dict(g.to_dict())


def test_integrator_record(exp_solved, exp_system, exp_f):
    g, _ = exp_solved
    sample = sample_points(g, VerifyConfig(n_xi=2), seed=1)[:3]
    assert check_integrators(exp_system, exp_f, g, sample)["ok"]
    other = check_integrators(diagonal_system([-1.0, 0.0], 1), exp_f, g, sample)
    assert other["n_samples"] == 0 and "note" in other


def test_local_checks(local_case, exp_system, exp_bounds):
    g, f, R, alpha = local_case
    sample = local_sample(g, R, VerifyConfig(n_xi=3), seed=0)
    assert all(np.linalg.norm(xi) < g.entry_radius[0] * 2 for _, xi in sample)
    rec = check_local_invariance(g, exp_system, f, R, g.S, sample, [0.5, 1.0],
                                 bounds=exp_bounds, alpha=alpha)
    assert rec["ok"] and rec["out_of_ball"] == 0 and rec["decay_ok"]
    with pytest.raises(PreconditionError):
        check_local_invariance(g, exp_system, f, R, g.S,
                               [(0.0, np.array([0.6 * float(R(0.0))]))], [0.5])


def test_run_verification_global_and_local(exp_solved, local_case, exp_system, exp_f,
                                           exp_bounds):
    g, _ = exp_solved
    cfg = VerifyConfig(n_s_nodes=2, n_xi=3, n_pairs=2)
    rep = run_verification(g, exp_system, exp_f, exp_bounds, cfg, negative_controls=True)
    names = [r["check"] for r in rep.records]
    assert names == ["graph_invariants", "invariance", "decay_bound",
                     "integrator_agreement", "off_manifold_control"]
    assert rep.passed and rep.to_dict()["passed"]
    gl, f, R, _ = local_case
    rep_l = run_verification(gl, exp_system, f, exp_bounds, cfg, negative_controls=True,
                             local={"f": f, "R": R})
    assert [r["check"] for r in rep_l.records] == ["graph_invariants", "local_invariance",
                                                   "out_of_ball_control"]
    assert rep_l.passed


def test_two_dimensional_E_invariance():
    sys_ = diagonal_system([-1.0, -1.5, 0.0], dim_E=2)
    bd = B.exponential(a=-1.0, b=0.0, eps=0.0)
    f = test_perturbation(LipschitzEnvelope("exp_decay", delta=0.01, rate=0.2),
                          sys_.splitting)
    g = solve_manifold(sys_, bd, f, SolverConfig(s_valid=2.0, h=0.1, xi_nodes=9),
                       alpha=0.05, beta=0.01 / 1.2)
    sample = sample_points(g, VerifyConfig(n_s_nodes=2, n_xi=3, taus=(0.5, 1.0)), seed=0)
    rec = check_invariance(g, sys_, f, sample)
    assert rec["ok"], rec
