"""Scenario configuration: a flat ``key = value`` file with dotted sections.

Example::

    # exponential dichotomy with a tanh test perturbation
    scenario.name = exponential
    bounds.kind = exponential
    bounds.a = -1
    bounds.eps = 0.1
    perturbation.kind = test
    perturbation.envelope = exp_decay
    perturbation.delta = 0.01
    perturbation.rate = 0.2
    solver.h = 0.05

Values are parsed as JSON when possible (numbers, ``true``/``false``,
quoted strings, lists); comma-separated values become lists; anything else
is a bare string.  Clocks are written ``linear:1``, ``log1p:2`` or
``quadratic:1,0.1``.  A JSON file holding the same keys, flat or nested, is
accepted too.  Unknown keys are errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .admissibility import LipschitzEnvelope, QuadratureConfig, RadiusFunction
from .bounds import BoundFamily, load_tabulated
from .errors import ConfigError
from .functions import Clock
from .linear_system import LinearSystem, build_product_example, diagonal_system
from .perron import (Perturbation, SolverConfig, cq_perturbation, test_perturbation,
                     zero_perturbation)
from .verification import VerifyConfig

_SECTIONS = {"solver": SolverConfig, "quadrature": QuadratureConfig,
             "verify": VerifyConfig}

# key -> (type, default); type is one of float, int, str, clock, list
SCHEMA = {
    "scenario.name": (str, "custom"),
    "seed": (int, 0),
    "output.dir": (str, "out"),
    "system.kind": (str, "product"),
    "system.rates": (list, None),
    "system.dim_E": (int, 1),
    "bounds.kind": (str, "exponential"),
    "bounds.D": (float, 1.0),
    "bounds.a": (float, -1.0),
    "bounds.b": (float, 0.0),
    "bounds.eps": (float, 0.0),
    "bounds.L": (float, 1.0),
    "bounds.rho": ("clock", "linear:1"),
    "bounds.mu": ("clock", "linear:1"),
    "bounds.nu": ("clock", "linear:1"),
    "bounds.table": (str, None),
    "perturbation.kind": (str, "test"),
    "perturbation.envelope": (str, "exp_decay"),
    "perturbation.delta": (float, 0.01),
    "perturbation.rate": (float, 0.0),
    "perturbation.p": (float, 0.0),
    "perturbation.eps": (float, 0.0),
    "perturbation.clock": ("clock", "linear:1"),
    "perturbation.c": (float, 1.0),
    "perturbation.q": (float, 1.0),
    "radius.kind": (str, "none"),
    "radius.delta": (float, 1.0),
    "radius.beta": (float, 0.0),
    "radius.a": (float, -1.0),
    "radius.q": (float, 1.0),
    "radius.clock": ("clock", "linear:1"),
}
for _sec, _cls in _SECTIONS.items():
    for _f in fields(_cls):
        SCHEMA[f"{_sec}.{_f.name}"] = (type(_f.default), _f.default)


def parse_clock(text) -> Clock:
    if isinstance(text, Clock):
        return text
    if isinstance(text, dict):
        return Clock.from_dict(text)
    kind, _, args = str(text).partition(":")
    vals = [float(v) for v in args.split(",") if v.strip()] if args else []
    try:
        if kind == "quadratic":
            return Clock("quadratic", c1=vals[0], c2=vals[1] if len(vals) > 1 else 0.0)
        return Clock(kind, vals[0] if vals else 1.0)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad clock {text!r}: {exc}") from None


def format_clock(c: Clock) -> str:
    if c.kind == "quadratic":
        return f"quadratic:{c.c1!r},{c.c2!r}"
    return f"{c.kind}:{c.k!r}"


def _coerce(key, raw, where):
    typ, _ = SCHEMA[key]
    try:
        if typ == "clock":
            parse_clock(raw)
            return raw if isinstance(raw, str) else format_clock(parse_clock(raw))
        if typ is list or typ is tuple:
            if isinstance(raw, str):
                raw = [float(v) for v in raw.split(",")]
            return [float(v) for v in raw]
        if typ is bool:
            if isinstance(raw, str):
                if raw.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(raw)
                return raw.lower() in ("true", "1")
            return bool(raw)
        if typ is int:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            return int(raw)
        if typ is float:
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: bad value {raw!r} for {key} ({exc})") from None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        return [p.strip() for p in text.split(",")]
    return text


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and key not in ("bounds.rho", "bounds.mu", "bounds.nu",
                                                "perturbation.clock", "radius.clock"):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_text(text: str, source: str = "<config>") -> dict:
    """Parse key/value text into a validated flat dict (defaults not applied)."""
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        where = f"{source}:{n}"
        if not sep or not key:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        if key not in SCHEMA:
            raise ConfigError(f"{where}: unknown key {key!r}")
        val = val.strip()
        raw = val if SCHEMA[key][0] in ("clock", str) else _parse_value(val)
        out[key] = _coerce(key, raw, where)
    return out


def parse_mapping(d: dict, source: str = "<json>") -> dict:
    out = {}
    for key, raw in _flatten(d).items():
        if key not in SCHEMA:
            raise ConfigError(f"{source}: unknown key {key!r}")
        out[key] = _coerce(key, raw, f"{source}[{key}]")
    return out


def load_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        return parse_mapping(data, str(p))
    return parse_text(text, str(p))


@dataclass
class ScenarioConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        if key not in SCHEMA:
            raise KeyError(key)
        return self.values.get(key, SCHEMA[key][1])

    def with_overrides(self, overrides: dict) -> "ScenarioConfig":
        return ScenarioConfig({**self.values, **overrides})

    @property
    def name(self) -> str:
        return self["scenario.name"]

    @property
    def is_local(self) -> bool:
        return self["radius.kind"] != "none"

    def section(self, name):
        cls = _SECTIONS[name]
        kw = {}
        for f in fields(cls):
            v = self[f"{name}.{f.name}"]
            kw[f.name] = tuple(v) if isinstance(f.default, tuple) else v
        try:
            return cls(**kw)
        except ValueError as exc:
            raise ConfigError(f"[{name}] {exc}") from None

    def to_dict(self) -> dict:
        return {k: self[k] for k in sorted(SCHEMA) if self[k] is not None}


def scenario_from_file(path, overrides: dict | None = None) -> ScenarioConfig:
    return ScenarioConfig({**load_file(path), **(overrides or {})})


def parse_overrides(items) -> dict:
    """``--set key=value`` items."""
    return parse_text("\n".join(items or []), "--set")


# -- builders -----------------------------------------------------------------

def build_bounds(cfg: ScenarioConfig) -> BoundFamily:
    kind = cfg["bounds.kind"]
    try:
        if kind == "tabulated":
            if not cfg["bounds.table"]:
                raise ConfigError("bounds.table is required for tabulated bounds")
            return load_tabulated(cfg["bounds.table"])
        kw = dict(D=cfg["bounds.D"], a=cfg["bounds.a"], b=cfg["bounds.b"],
                  eps=cfg["bounds.eps"])
        if kind == "rho":
            kw["rho"] = parse_clock(cfg["bounds.rho"])
        elif kind == "mu_nu":
            kw["mu"] = parse_clock(cfg["bounds.mu"])
            kw["nu"] = parse_clock(cfg["bounds.nu"])
        elif kind == "constant_a":
            kw["L"] = cfg["bounds.L"]
        return BoundFamily(kind, **kw)
    except (ValueError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bounds: {exc}") from None


def build_system(cfg: ScenarioConfig, bounds: BoundFamily) -> LinearSystem:
    kind = cfg["system.kind"]
    try:
        if kind == "product":
            pf = bounds.product_form()
            if pf is None:
                raise ConfigError(f"bounds kind {bounds.kind!r} has no product form; "
                                  "use system.kind = diagonal")
            return build_product_example(*pf)
        if kind == "diagonal":
            rates = cfg["system.rates"]
            if not rates:
                raise ConfigError("system.rates is required for a diagonal system")
            return diagonal_system(rates, cfg["system.dim_E"])
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"system: {exc}") from None
    raise ConfigError(f"unknown system.kind {kind!r}")


def build_envelope(cfg: ScenarioConfig) -> LipschitzEnvelope:
    kind = cfg["perturbation.envelope"]
    try:
        return LipschitzEnvelope(kind, delta=cfg["perturbation.delta"],
                                 rate=cfg["perturbation.rate"], p=cfg["perturbation.p"],
                                 eps=cfg["perturbation.eps"],
                                 clock=parse_clock(cfg["perturbation.clock"]))
    except ValueError as exc:
        raise ConfigError(f"perturbation: {exc}") from None


def build_perturbation(cfg: ScenarioConfig, system: LinearSystem) -> Perturbation:
    kind = cfg["perturbation.kind"]
    try:
        if kind == "zero":
            return zero_perturbation()
        if kind == "test":
            return test_perturbation(build_envelope(cfg), system.splitting)
        if kind == "cq":
            return cq_perturbation(cfg["perturbation.c"], cfg["perturbation.q"],
                                   system.splitting)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"perturbation: {exc}") from None
    raise ConfigError(f"unknown perturbation.kind {kind!r}")


def build_radius(cfg: ScenarioConfig) -> RadiusFunction | None:
    if not cfg.is_local:
        return None
    try:
        return RadiusFunction(cfg["radius.kind"], delta=cfg["radius.delta"],
                              beta=cfg["radius.beta"], a=cfg["radius.a"],
                              q=cfg["radius.q"], clock=parse_clock(cfg["radius.clock"]))
    except ValueError as exc:
        raise ConfigError(f"radius: {exc}") from None


def with_section(cfg: ScenarioConfig, name: str, **changes) -> ScenarioConfig:
    """Convenience: override fields of one dataclass section."""
    base = cfg.section(name)
    new = replace(base, **changes)
    return cfg.with_overrides({f"{name}.{k}": getattr(new, k) for k in changes})
