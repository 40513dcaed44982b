import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invmanifold.admissibility import QuadratureConfig
from invmanifold.errors import DivergenceError, TruncationError
from invmanifold.quadrature import horizon_limit, integrate_pairs


def test_exponential_antiderivative():
    lo = np.array([0.0, 1.0, 2.0])
    hi = np.array([5.0, 1.0, 30.0])
    vals, errs = integrate_pairs(lambda r, rows: -r, lo, hi)
    np.testing.assert_allclose(vals, np.exp(-lo) - np.exp(-hi), rtol=1e-11, atol=1e-14)
    assert np.all(errs < 1e-9)


@settings(max_examples=30, deadline=None)
@given(p=st.floats(1.2, 4.0), lo=st.floats(0, 50), width=st.floats(0.01, 1e4))
def test_power_law_antiderivative(p, lo, width):
    hi = lo + width
    vals, _ = integrate_pairs(lambda r, rows: -p * np.log1p(r), np.array([lo]),
                              np.array([hi]))
    exact = ((1 + lo) ** (1 - p) - (1 + hi) ** (1 - p)) / (p - 1)
    assert vals[0] == pytest.approx(exact, rel=1e-9, abs=1e-12)


def test_threads_give_identical_results():
    lo = np.linspace(0, 3, 40)
    hi = lo + 7.0
    one = integrate_pairs(lambda r, rows: -r * (1 + rows[:, None] / 40), lo, hi)
    four = integrate_pairs(lambda r, rows: -r * (1 + rows[:, None] / 40), lo, hi,
                           threads=4)
    np.testing.assert_array_equal(one[0], four[0])


def test_nonfinite_integrand_is_flagged():
    vals, errs = integrate_pairs(lambda r, rows: np.full(r.shape, np.inf),
                                 np.array([0.0]), np.array([1.0]))
    assert vals[0] == np.inf and errs[0] == np.inf


def _cfg(**kw):
    return QuadratureConfig(**{"horizon_init": 4.0, "horizon_max": 1e6, **kw})


def test_horizon_limit_extrapolates_power_tail():
    # V(H) = 1 - 1/(1+H), increments halve with each doubling
    res = horizon_limit(lambda H: (1 - 1 / (1 + H), 0.0, None), _cfg(tail_tol=1e-10))
    assert res["value"] == pytest.approx(1.0, rel=1e-6)


def test_horizon_limit_exponential_tail_converges():
    res = horizon_limit(lambda H: (1 - np.exp(-H), 0.0, None), _cfg())
    assert res["value"] == pytest.approx(1.0, abs=1e-10)
    assert res["status"] == "converged"


def test_horizon_limit_divergence():
    with pytest.raises(DivergenceError):
        horizon_limit(lambda H: (H, 0.0, None), _cfg())
    with pytest.raises(DivergenceError):
        horizon_limit(lambda H: (np.inf, 0.0, None), _cfg())


def test_horizon_limit_slow_tail_is_truncation():
    # log growth: increments constant, never below tolerance
    with pytest.raises((TruncationError, DivergenceError)):
        horizon_limit(lambda H: (np.log(H), 0.0, None), _cfg(horizon_max=1e3))
