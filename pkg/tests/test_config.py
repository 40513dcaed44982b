import json
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from invmanifold.config import (ScenarioConfig, build_bounds, build_perturbation,
                                build_radius, build_system, format_clock, load_file,
                                parse_clock, parse_mapping, parse_overrides, parse_text,
                                scenario_from_file, with_section)
from invmanifold.errors import ConfigError
from invmanifold.functions import Clock

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

TEXT = """
# comment line
scenario.name = demo   # trailing comment
bounds.kind = exponential
bounds.a = -1
bounds.eps = 0.1
system.rates = -1, 0
solver.h = 0.025
verify.taus = [0.5, 1.0]
quadrature.cross_check = false
"""


def test_parse_text_types():
    d = parse_text(TEXT)
    assert d["scenario.name"] == "demo"
    assert d["bounds.a"] == -1.0 and isinstance(d["bounds.a"], float)
    assert d["system.rates"] == [-1.0, 0.0]
    assert d["solver.h"] == 0.025
    assert d["verify.taus"] == [0.5, 1.0]
    assert d["quadrature.cross_check"] is False
    cfg = ScenarioConfig(d)
    assert cfg.section("verify").taus == (0.5, 1.0)
    assert cfg.section("solver").h == 0.025
    assert cfg["bounds.b"] == 0.0          # default


@pytest.mark.parametrize("text,needle", [
    ("bounds.a = -1\nbogus.key = 3", "<config>:2: unknown key"),
    ("no equals sign", "<config>:1: expected"),
    ("solver.xi_nodes = 3.5", "bad value"),
    ("quadrature.cross_check = maybe", "bad value"),
    ("bounds.rho = cubic:1", "bad clock"),
])
def test_parse_errors_name_the_line(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_text(text)


def test_json_nested_and_flat_agree(tmp_path):
    nested = {"bounds": {"kind": "rho", "a": -1, "rho": "quadratic:1,0.1"},
              "solver": {"s_valid": 5}}
    flat = {"bounds.kind": "rho", "bounds.a": -1, "bounds.rho": "quadratic:1,0.1",
            "solver.s_valid": 5}
    assert parse_mapping(nested) == parse_mapping(flat)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(nested))
    assert load_file(p) == parse_mapping(flat)
    bad = tmp_path / "bad.json"
    bad.write_text('{"bounds": {"kind": }')
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_file(bad)
    with pytest.raises(ConfigError, match="unknown key"):
        parse_mapping({"bounds": {"nope": 1}})
    with pytest.raises(ConfigError, match="not found"):
        load_file(tmp_path / "missing.cfg")


clocks = st.one_of(
    st.builds(Clock, st.just("linear"), st.floats(0.01, 10)),
    st.builds(Clock, st.just("log1p"), st.floats(0.01, 10)),
    st.builds(lambda c1, c2: Clock("quadratic", c1=c1, c2=c2), st.floats(0.01, 10),
              st.floats(0, 10)))


@given(clocks)
def test_clock_text_round_trip(c):
    assert parse_clock(format_clock(c)) == c


@given(st.floats(-5, 5, allow_nan=False), st.floats(0.001, 1.0))
def test_overrides_win(a, h):
    base = ScenarioConfig({"bounds.a": 0.0, "solver.h": 1.0})
    cfg = base.with_overrides(parse_overrides([f"bounds.a={a!r}", f"solver.h={h!r}"]))
    assert cfg["bounds.a"] == a and cfg.section("solver").h == h


def test_unknown_key_lookup_and_section_validation():
    cfg = ScenarioConfig({})
    with pytest.raises(KeyError):
        cfg["nope"]
    with pytest.raises(ConfigError):
        ScenarioConfig({"solver.xi_nodes": 4}).section("solver")
    assert with_section(cfg, "solver", h=0.1)["solver.h"] == 0.1


def test_builders_from_shipped_configs():
    cfg = scenario_from_file(CONFIGS / "exponential.cfg")
    bd = build_bounds(cfg)
    sys_ = build_system(cfg, bd)
    f = build_perturbation(cfg, sys_)
    assert bd.kind == "exponential" and sys_.kind == "closed_form_product"
    assert f.envelope.kind == "exp_decay" and build_radius(cfg) is None
    loc = scenario_from_file(CONFIGS / "local_exp.json")
    assert loc.is_local and build_radius(loc).kind == "exp"
    assert loc.to_dict()["radius.beta"] == 0.5


@pytest.mark.parametrize("values,needle", [
    ({"bounds.kind": "tabulated"}, "bounds.table"),
    ({"bounds.kind": "mixed_poly_shift", "bounds.eps": 0.1}, "no product form"),
    ({"system.kind": "diagonal"}, "system.rates"),
    ({"system.kind": "banana"}, "unknown system.kind"),
    ({"bounds.kind": "weird"}, "bounds"),
])
def test_builder_errors(values, needle):
    cfg = ScenarioConfig(values)
    with pytest.raises(ConfigError, match=needle):
        build_system(cfg, build_bounds(cfg))


def test_perturbation_builder_errors():
    cfg = ScenarioConfig({"perturbation.kind": "quartic"})
    sys_ = build_system(cfg, build_bounds(cfg))
    with pytest.raises(ConfigError, match="unknown perturbation.kind"):
        build_perturbation(cfg, sys_)
    bad = ScenarioConfig({"perturbation.delta": -1.0})
    with pytest.raises(ConfigError):
        build_perturbation(bad, sys_)
    with pytest.raises(ConfigError):
        build_radius(ScenarioConfig({"radius.kind": "exp", "radius.beta": 0.0}))
