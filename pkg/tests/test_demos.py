import pytest

from invmanifold import demos
from invmanifold.cli import EXIT_OK, Scenario, run_demo
from invmanifold.demos import ConditionRow, family_conditions


def test_condition_row_logic():
    eq = ConditionRow("x<0", -1.0, "<", 0.0, "equivalence", "decay", numeric=True)
    assert eq.closed and eq.agree
    eq.numeric = False
    assert eq.agree is False and "DISAGREE" in eq.line()
    suff = ConditionRow("x<0", 1.0, "<", 0.0, "sufficient", "S", numeric=True)
    assert suff.agree is True            # a false premise predicts nothing
    suff.numeric = None
    assert suff.agree is None
    assert ConditionRow("x≤0", 0.0, "<=", 0.0, "equivalence", "beta").closed


def test_local_exp_condition_values():
    rows = {r.label: r for r in family_conditions(
        "local_exp", dict(a=-1, b=0, eps=0.1, q=2, beta=0.5))}
    assert rows["a+ε<b"].lhs == pytest.approx(-0.9)
    assert rows["ε−βq<0"].lhs == pytest.approx(-0.9)
    assert rows["2ε−βq≤0"].lhs == pytest.approx(-0.8)
    assert rows["a+β≤0"].lhs == pytest.approx(-0.5)


def test_mu_nu_condition():
    rows = family_conditions("mu_nu", dict(a=-1, b=0, eps=0.5, k=1, m=3))
    assert rows[0].lhs == pytest.approx(0.5) and not rows[0].closed


@pytest.mark.parametrize("name", sorted(demos.DEMOS))
def test_every_demo_config_builds(name):
    cfg = demos.demo_config(name)
    sc = Scenario(cfg)
    assert sc.local == name.startswith("local_")
    p = demos.params_from_config(cfg)
    assert demos.family_conditions(demos.DEMO_FAMILY[name], p)


def test_exponential_sweep_agrees():
    for p, rows in demos.run_sweep("exponential"):
        assert all(r.agree for r in rows), (p, demos.format_rows(rows))


@pytest.mark.parametrize("name", ["mixed", "constant_a"])
def test_small_global_demos(name, tmp_path):
    code = run_demo(name, tmp_path, overrides={"solver.s_valid": 3.0}, quiet=True)
    assert code == EXIT_OK
