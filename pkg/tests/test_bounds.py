import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invmanifold import bounds as B
from invmanifold.errors import ConstraintError, DomainError
from invmanifold.functions import Clock


def test_exponential_formulas():
    bd = B.exponential(D=2.0, a=-1.0, b=0.5, eps=0.1)
    t, s = 3.0, 1.0
    assert B.eval_a(bd, t, s) == pytest.approx(2 * np.exp(-1.0 * (t - s) + 0.1 * s))
    assert B.eval_b(bd, t, s) == pytest.approx(2 * np.exp(-0.5 * (t - s) + 0.1 * t))


def test_polynomial_formulas():
    bd = B.polynomial(a=-1.0, b=0.0, eps=0.1)
    t, s = 4.0, 1.0
    assert B.eval_a(bd, t, s) == pytest.approx(((1 + t) / (1 + s)) ** -1 * (1 + s) ** 0.1)
    assert B.eval_b(bd, t, s) == pytest.approx((1 + t) ** 0.1)


def test_mixed_formulas():
    bd = B.mixed_poly_shift(a=-1.0, b=0.0, eps=0.1)
    assert B.eval_a(bd, 5.0, 2.0) == pytest.approx(4.0 ** -1 * 3.0 ** 0.1)


@pytest.mark.parametrize("kw", [dict(a=0.1), dict(b=-0.1), dict(D=0.5), dict(eps=-1.0)])
def test_family_constraints(kw):
    with pytest.raises(ConstraintError):
        B.exponential(**kw)


def test_polynomial_needs_positive_eps():
    with pytest.raises(ConstraintError):
        B.polynomial(eps=0.0)
    with pytest.raises(ConstraintError):
        B.BoundFamily("nonsense")


def test_domain_check():
    with pytest.raises(DomainError):
        B.eval_a(B.exponential(), 1.0, 2.0)


@settings(max_examples=40, deadline=None)
@given(s=st.floats(0, 20), d=st.floats(0, 20), f=st.floats(0.1, 10))
def test_scaling_multiplies_both_bounds(s, d, f):
    bd = B.rho_family(Clock("quadratic", c1=1.0, c2=0.1), a=-1.0, eps=0.1)
    sc = bd.scaled(f)
    assert B.eval_a(sc, s + d, s) == pytest.approx(f * B.eval_a(bd, s + d, s), rel=1e-12)
    assert B.eval_b(sc, s + d, s) == pytest.approx(f * B.eval_b(bd, s + d, s), rel=1e-12)


def test_scaled_down_bounds_are_violated(exp_system, exp_bounds):
    grid = [(2 * k * np.pi, (2 * k - 1) * np.pi) for k in range(1, 4)]
    rep = B.verify_dichotomy_bounds(exp_system, exp_bounds.scaled(0.9), grid)
    assert not rep["passed"]
    assert rep["worst_ratio_a"] == pytest.approx(1 / 0.9, rel=1e-9)


def test_decay_verdicts():
    assert B.check_decay_condition(B.exponential(a=-1, eps=0.1), [0, 5])["verdict"] == "pass"
    bad = B.exponential(a=-0.1, eps=0.5)
    rep = B.check_decay_condition(bad, [0, 5])
    assert rep["verdict"] == "fail" and rep["numeric"] == "fail"
    poly = B.check_decay_condition(B.polynomial(a=-1, eps=0.1), [0, 5])
    assert poly["numeric"] == "pass" and poly["closed_form"] is True
    const = B.constant_a(a=-1.0, eps=1.5)
    assert B.check_decay_condition(const, [0.0])["verdict"] == "fail"


def test_decay_horizon_must_exceed_samples():
    with pytest.raises(DomainError):
        B.check_decay_condition(B.exponential(), [10.0], horizon=5.0)


def test_tabulated_round_trip(tmp_path):
    bd = B.exponential(a=-1.0, b=0.0, eps=0.1)
    grid = np.linspace(0, 10, 21)
    path = tmp_path / "bounds.csv"
    B.write_tabulated(path, bd, grid)
    tb = B.load_tabulated(path)
    for t, s in [(3.0, 1.0), (10.0, 0.0), (5.0, 5.0)]:
        assert B.eval_a(tb, t, s) == pytest.approx(B.eval_a(bd, t, s), rel=1e-10)
        assert B.eval_b(tb, t, s) == pytest.approx(B.eval_b(bd, t, s), rel=1e-10)
    # between nodes the log-linear interpolation stays close for these smooth bounds
    assert B.eval_a(tb, 3.2, 1.1) == pytest.approx(B.eval_a(bd, 3.2, 1.1), rel=2e-2)


def test_tabulated_header_is_checked(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1,2\n")
    with pytest.raises(ConstraintError):
        B.load_tabulated(path)


def test_family_dict_round_trip():
    bd = B.mu_nu(Clock("log1p", 2.0), Clock("log1p", 1.0), a=-1.0, eps=0.5)
    back = B.BoundFamily.from_dict(bd.to_dict())
    assert B.eval_a(back, 7.0, 2.0) == pytest.approx(B.eval_a(bd, 7.0, 2.0))
