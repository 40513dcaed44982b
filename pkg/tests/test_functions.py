import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invmanifold.functions import Clock, Growth, asymptotic_sign

CLOCKS = [Clock("linear", 2.0), Clock("log1p", 1.5), Clock("quadratic", c1=1.0, c2=0.1)]


@pytest.mark.parametrize("clock", CLOCKS)
def test_clock_starts_at_zero_and_derivative_matches(clock):
    assert clock(0.0) == 0.0
    t = np.linspace(0.1, 20, 50)
    h = 1e-6
    fd = (clock(t + h) - clock(t - h)) / (2 * h)
    np.testing.assert_allclose(clock.deriv(t), fd, rtol=1e-7)


@pytest.mark.parametrize("clock", CLOCKS)
def test_clock_round_trip(clock):
    assert Clock.from_dict(clock.to_dict()) == clock


@pytest.mark.parametrize("kw", [dict(kind="cubic"), dict(kind="linear", k=0.0),
                                dict(kind="log1p", k=-1.0),
                                dict(kind="quadratic", c1=0.0, c2=1.0),
                                dict(kind="quadratic", c1=1.0, c2=-0.1)])
def test_clock_rejects_bad_parameters(kw):
    with pytest.raises(ValueError):
        Clock(**kw)


def test_growth_constructors():
    t = np.array([0.0, 1.0, 3.0])
    np.testing.assert_allclose(Growth.exp(0.5, 2.0)(t), 2.0 * np.exp(0.5 * t))
    np.testing.assert_allclose(Growth.power(-1.0)(t), 1.0 / (1.0 + t))
    np.testing.assert_allclose(Growth.const(3.0)(t), 3.0)
    with pytest.raises(ValueError):
        Growth(1.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(coef=st.floats(-3, 3), scale=st.floats(0.1, 10), t=st.floats(0, 50))
def test_growth_log_derivative(coef, scale, t):
    g = Growth(coef, scale, Clock("quadratic", c1=1.0, c2=0.05))
    h = 1e-5
    fd = (g.log(t + h) - g.log(t)) / h
    assert g.dlog(t) == pytest.approx(fd, rel=1e-3, abs=1e-3)
    assert Growth.from_dict(g.to_dict()) == g


def test_asymptotic_sign_orders():
    lin, log = Clock("linear", 1.0), Clock("log1p", 1.0)
    quad = Clock("quadratic", c1=1.0, c2=0.1)
    assert asymptotic_sign([(1.0, log), (-0.1, lin)]) == -1
    assert asymptotic_sign([(1.0, lin), (-1.0, lin)]) == 0
    assert asymptotic_sign([(-5.0, lin), (1.0, quad)]) == 1
    # c2 = 0 quadratic behaves as a linear clock
    assert asymptotic_sign([(1.0, Clock("quadratic", c1=2.0)), (-2.0, lin)]) == 0
