import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invmanifold import bounds as B
from invmanifold.admissibility import (LipschitzEnvelope, QuadratureConfig, RadiusFunction,
                                       alpha_details, assess, beta_details,
                                       check_global_gate, check_local_gate, compute_S)
from invmanifold.errors import DivergenceError, PreconditionError
from invmanifold.functions import Clock

QCFG = QuadratureConfig(cross_check=False)


def exact_alpha_beta(delta, kappa, a, eps):
    """Antiderivative values for exponential bounds with b = 0, D = 1."""
    return delta / (kappa - eps), delta / (kappa - a - eps)


@settings(max_examples=8, deadline=None)
@given(delta=st.floats(0.001, 0.05), kappa=st.floats(0.3, 2.0),
       a=st.floats(-2.0, -0.5), eps=st.floats(0.0, 0.2))
def test_generic_quadrature_matches_antiderivatives(delta, kappa, a, eps):
    bd = B.exponential(a=a, b=0.0, eps=eps)
    env = LipschitzEnvelope("exp_decay", delta=delta, rate=kappa)
    al, be = exact_alpha_beta(delta, kappa, a, eps)
    assert alpha_details(bd, env, QCFG, "generic")["value"] == pytest.approx(al, rel=1e-6)
    assert beta_details(bd, env, QCFG, "generic")["value"] == pytest.approx(be, rel=1e-6)


def test_closed_and_generic_agree_for_polynomial():
    bd = B.polynomial(a=-1.0, eps=0.1)
    env = LipschitzEnvelope("poly_decay", delta=0.05, p=4.0)
    a_c = alpha_details(bd, env, QCFG, "closed")["value"]
    a_g = alpha_details(bd, env, QCFG, "generic")["value"]
    b_c = beta_details(bd, env, QCFG, "closed")["value"]
    b_g = beta_details(bd, env, QCFG, "generic")["value"]
    assert a_g == pytest.approx(a_c, rel=1e-5)
    assert b_g == pytest.approx(b_c, rel=1e-5)


def test_alpha_scales_linearly_with_envelope():
    bd = B.exponential(a=-1.0, eps=0.1)
    env = LipschitzEnvelope("exp_decay", delta=0.01, rate=0.2)
    a1 = alpha_details(bd, env, QCFG, "generic")["value"]
    a3 = alpha_details(bd, env.scaled(3.0), QCFG, "generic")["value"]
    assert a3 == pytest.approx(3 * a1, rel=1e-9)


def test_zero_envelope_gives_zero_constants():
    bd = B.exponential()
    z = LipschitzEnvelope("zero")
    assert alpha_details(bd, z)["value"] == 0.0
    assert beta_details(bd, z)["value"] == 0.0


def test_divergent_alpha():
    bd = B.exponential(a=-1.0, eps=0.3)
    env = LipschitzEnvelope("exp_decay", delta=0.01, rate=0.1)
    with pytest.raises(DivergenceError):
        alpha_details(bd, env, QCFG, "generic")
    rep = assess(bd, env, QCFG)
    assert rep.divergent and not rep.global_ok and math.isinf(rep.alpha)


def test_gates():
    ok, margin = check_global_gate(0.1, 0.01 / 1.1)
    assert ok and margin == pytest.approx(0.7046537411, abs=1e-9)
    assert not check_global_gate(0.4, 0.05)[0]
    ok_l, m_l = check_local_gate(0.04 / 0.9, 0.04 / 1.9)
    assert ok_l and m_l > 0.6
    assert not check_local_gate(0.22, 0.01)[0]
    with pytest.raises(ValueError):
        check_global_gate(-0.1, 0.0)


@settings(max_examples=50, deadline=None)
@given(al=st.floats(0, 0.5), be=st.floats(0, 0.5))
def test_local_gate_implies_global_gate(al, be):
    if check_local_gate(al, be)[0]:
        assert check_global_gate(al, be)[0]


def test_assess_report_exponential(exp_bounds, exp_envelope):
    rep = assess(exp_bounds, exp_envelope)
    assert rep.global_ok and rep.closed_form_used
    assert rep.alpha == pytest.approx(0.1, rel=1e-9)
    cc = rep.details["alpha"]["cross_check"]
    assert cc["difference"] < 1e-7
    assert rep.to_dict()["decay_ok"] == "pass"


def test_assess_decay_failure():
    bd = B.exponential(a=-0.1, eps=0.5)
    rep = assess(bd, LipschitzEnvelope("exp_decay", delta=0.01, rate=1.0), QCFG)
    assert rep.decay_ok == "fail" and not rep.global_ok


def test_S_exponential_oracle():
    bd = B.exponential(a=-1.0, eps=0.1)
    R = RadiusFunction("exp", delta=0.1, beta=0.5)
    alpha = 0.04 / 0.9
    for s in (0.0, 2.0):
        rec = compute_S(bd, R, alpha, s)
        # sup_t e^{-(t-s) + eps s} e^{beta (t-s)} is attained at t = s
        expect = max(1.0, 2 / (1 - 4 * alpha) * math.exp(0.1 * s))
        assert rec["S"] == pytest.approx(expect, rel=1e-12)
        assert rec["entry_radius"] == pytest.approx(float(R(s)) / (2 * expect))


def test_S_infinite_and_alpha_precondition():
    bd = B.exponential(a=-1.0, eps=0.1)
    R = RadiusFunction("exp", delta=0.1, beta=1.5)
    rec = compute_S(bd, R, 0.0, 0.0)
    assert math.isinf(rec["S"]) and rec["closed_form_finite"] is False
    assert rec["numeric_finite"] is False
    with pytest.raises(PreconditionError):
        compute_S(bd, R, 0.3, 0.0)


def test_envelope_and_radius_validation_and_round_trip():
    with pytest.raises(ValueError):
        LipschitzEnvelope("exp_decay", delta=0.0)
    with pytest.raises(ValueError):
        RadiusFunction("exp", delta=0.1, beta=0.0)
    R = RadiusFunction("rho_form", delta=0.1, beta=0.5, q=2.0,
                       clock=Clock("quadratic", c1=1.0, c2=0.1))
    assert RadiusFunction.from_dict(R.to_dict()) == R
    env = LipschitzEnvelope("ball_power", c=1.0, q=2.0, radius=R)
    assert LipschitzEnvelope.from_dict(env.to_dict()) == env
    r = np.array([0.0, 1.0, 4.0])
    np.testing.assert_allclose(env(r), 4.0 * R(r) ** 2, rtol=1e-12)


def test_tabulated_envelope_extends_last_slope():
    env = LipschitzEnvelope("tabulated", table=((0.0, 1.0), (1.0, np.exp(-1.0))))
    assert env(3.0) == pytest.approx(np.exp(-3.0))
