"""Named demo scenarios and parameter-condition tables.

Each demo is a flat configuration (see :mod:`invmanifold.config`).  For every
bound family the known closed-form parameter conditions (for instance
``a + eps < b`` for the decay condition) are listed next to the verdict the
numerics reach independently: the decay check samples a(t,s) b(t,s), the
admissibility constants come from generic quadrature, and S(s) from a sampled
supremum.  :func:`run_sweep` repeats this on a five-point parameter sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .admissibility import (LipschitzEnvelope, QuadratureConfig, RadiusFunction,
                            alpha_details, beta_details, compute_S)
from .bounds import BoundFamily, check_decay_condition
from .config import ScenarioConfig, parse_clock
from .errors import DivergenceError, TruncationError

_BASE = {"solver.h": 0.05, "solver.s_valid": 10.0}

DEMOS = {
    "exponential": {
        "bounds.kind": "exponential", "bounds.a": -1.0, "bounds.b": 0.0,
        "bounds.eps": 0.1,
        "perturbation.kind": "test", "perturbation.envelope": "exp_decay",
        "perturbation.delta": 0.01, "perturbation.rate": 0.2,
    },
    "polynomial": {
        "bounds.kind": "polynomial", "bounds.a": -1.0, "bounds.b": 0.0,
        "bounds.eps": 0.1,
        "perturbation.kind": "test", "perturbation.envelope": "poly_decay",
        "perturbation.delta": 0.05, "perturbation.p": 4.0,
    },
    "rho": {
        "bounds.kind": "rho", "bounds.a": -1.0, "bounds.b": 0.0, "bounds.eps": 0.1,
        "bounds.rho": "quadratic:1,0.1",
        "perturbation.kind": "test", "perturbation.envelope": "rho_decay",
        "perturbation.delta": 0.01, "perturbation.eps": 0.1,
        "perturbation.clock": "quadratic:1,0.1",
    },
    "mu_nu": {
        "bounds.kind": "mu_nu", "bounds.a": -1.0, "bounds.b": 0.0, "bounds.eps": 0.5,
        "bounds.mu": "log1p:2", "bounds.nu": "log1p:1",
        "perturbation.kind": "test", "perturbation.envelope": "poly_decay",
        "perturbation.delta": 0.02, "perturbation.p": 4.0,
    },
    "mixed": {
        "bounds.kind": "mixed_poly_shift", "bounds.a": -1.0, "bounds.b": 0.0,
        "bounds.eps": 0.1,
        "system.kind": "diagonal", "system.rates": [-1.0, 0.0], "system.dim_E": 1,
        "perturbation.kind": "test", "perturbation.envelope": "poly_decay",
        "perturbation.delta": 0.02, "perturbation.p": 4.0,
    },
    "constant_a": {
        "bounds.kind": "constant_a", "bounds.L": 1.0, "bounds.a": -1.0,
        "bounds.eps": 0.1,
        "perturbation.kind": "test", "perturbation.envelope": "exp_decay",
        "perturbation.delta": 0.005, "perturbation.rate": 0.1,
    },
    "local_exp": {
        "bounds.kind": "exponential", "bounds.a": -1.0, "bounds.b": 0.0,
        "bounds.eps": 0.1,
        "perturbation.kind": "cq", "perturbation.c": 1.0, "perturbation.q": 2.0,
        "radius.kind": "exp", "radius.delta": 0.1, "radius.beta": 0.5,
    },
    "local_poly": {
        "bounds.kind": "polynomial", "bounds.a": -1.5, "bounds.b": 0.0,
        "bounds.eps": 0.5,
        "perturbation.kind": "cq", "perturbation.c": 1.0, "perturbation.q": 2.0,
        "radius.kind": "poly", "radius.delta": 0.1, "radius.beta": 1.25,
    },
    "local_rho": {
        "bounds.kind": "rho", "bounds.a": -1.0, "bounds.b": 0.0, "bounds.eps": 0.1,
        "bounds.rho": "quadratic:1,0.1",
        "perturbation.kind": "cq", "perturbation.c": 1.0, "perturbation.q": 2.0,
        "radius.kind": "rho_form", "radius.delta": 0.1, "radius.beta": 0.5,
        "radius.q": 2.0, "radius.clock": "quadratic:1,0.1",
    },
    "local_mu_nu": {
        "bounds.kind": "mu_nu", "bounds.a": -1.0, "bounds.b": 0.0, "bounds.eps": 0.5,
        "bounds.mu": "log1p:2", "bounds.nu": "log1p:1",
        "perturbation.kind": "cq", "perturbation.c": 1.0, "perturbation.q": 2.0,
        "radius.kind": "mu_power", "radius.delta": 0.1, "radius.a": -1.0,
        "radius.clock": "log1p:2",
    },
}


def demo_config(name: str) -> ScenarioConfig:
    if name not in DEMOS:
        raise KeyError(name)
    return ScenarioConfig({"scenario.name": name, "output.dir": f"out/{name}",
                           **_BASE, **DEMOS[name]})


# -- condition rows -----------------------------------------------------------

@dataclass
class ConditionRow:
    """One parameter condition: closed-form verdict against numeric verdict.

    ``kind`` is ``equivalence`` (verdicts must coincide) or ``sufficient``
    (a true closed-form premise must give a numeric pass; a false premise is
    not a prediction).
    """

    label: str
    lhs: float
    rel: str
    rhs: float
    kind: str
    target: str
    numeric: bool | None = None

    @property
    def closed(self) -> bool:
        if self.rel == "<":
            return self.lhs < self.rhs
        if self.rel == "<=":
            return self.lhs <= self.rhs
        raise ValueError(self.rel)

    @property
    def agree(self) -> bool | None:
        if self.numeric is None:
            return None
        if self.kind == "sufficient" and not self.closed:
            return True
        return self.closed == self.numeric

    def line(self) -> str:
        rel = {"<": "<", "<=": "≤"}[self.rel]
        num = {True: "pass", False: "fail", None: "inconclusive"}[self.numeric]
        verdict = "PASS" if self.closed else "FAIL"
        tag = "" if self.kind == "equivalence" else " (sufficient)"
        agree = {True: "agree", False: "DISAGREE", None: "?"}[self.agree]
        return (f"{self.label}: {_g(self.lhs)} {rel} {_g(self.rhs)} {verdict}"
                f"{tag}  [{self.target}: numeric {num}, {agree}]")

    def to_dict(self) -> dict:
        return {"label": self.label, "lhs": self.lhs, "rel": self.rel,
                "rhs": self.rhs, "kind": self.kind, "target": self.target,
                "closed_form": self.closed, "numeric": self.numeric,
                "agree": self.agree}


def _g(x: float) -> str:
    return f"{x:.6g}".replace("-", "−")


def _clock_power(text) -> float:
    c = parse_clock(text)
    if c.kind != "log1p":
        raise ValueError("mu/nu conditions are tabulated for mu = (1+t)^k clocks")
    return c.k


def family_conditions(family: str, p: dict) -> list[ConditionRow]:
    """Closed-form conditions for a family at parameters ``p``.

    Local families read ``q`` (perturbation exponent) and ``beta`` (radius
    decay); mu/nu families read the powers ``k`` and ``m`` of mu and nu.
    """
    a, b, e = p["a"], p.get("b", 0.0), p["eps"]
    rows = []
    if family in ("exponential", "polynomial", "rho", "mixed", "local_exp",
                  "local_poly", "local_rho", "local_mixed"):
        rows.append(ConditionRow("a+ε<b", a + e, "<", b, "equivalence", "decay"))
    elif family in ("mu_nu", "local_mu_nu"):
        k, m = p["k"], p["m"]
        rows.append(ConditionRow("k(a−b)+εm<0", k * (a - b) + e * m, "<", 0.0,
                                 "equivalence", "decay"))
    elif family == "constant_a":
        rows.append(ConditionRow("a+ε<0", a + e, "<", 0.0, "equivalence", "decay"))
    if family in ("local_exp", "local_rho"):
        q, bt = p["q"], p["beta"]
        rows.append(ConditionRow("ε−βq<0", e - bt * q, "<", 0.0,
                                 "equivalence", "alpha"))
        rows.append(ConditionRow("2ε−βq≤0", 2 * e - bt * q, "<=", 0.0,
                                 "equivalence", "beta"))
        kind = "equivalence" if family == "local_exp" else "sufficient"
        rel = "<=" if family == "local_exp" else "<"
        rows.append(ConditionRow("a+β≤0" if rel == "<=" else "a+β<0",
                                 a + bt, rel, 0.0, kind, "S"))
    if family == "local_poly":
        q, bt = p["q"], p["beta"]
        rows.append(ConditionRow("ε+1−βq<0", e + 1 - bt * q, "<", 0.0,
                                 "equivalence", "alpha"))
        rows.append(ConditionRow("2ε+1−βq≤0", 2 * e + 1 - bt * q, "<=",
                                 0.0, "equivalence", "beta"))
        rows.append(ConditionRow("a+β≤0", a + bt, "<=", 0.0, "equivalence", "S"))
    if family == "local_mixed":
        q, bt = p["q"], p["beta"]
        rows.append(ConditionRow("(2ε+1)/q≤β", (2 * e + 1) / q, "<=", bt,
                                 "sufficient", "alpha"))
        rows.append(ConditionRow("(2ε+1)/q≤β", (2 * e + 1) / q, "<=", bt,
                                 "sufficient", "beta"))
        rows.append(ConditionRow("a+β≤0", a + bt, "<=", 0.0, "sufficient", "S"))
    if family in ("local_poly", "local_mixed"):
        q = p["q"]
        rows.append(ConditionRow("(2ε+1)/q≤−a", (2 * e + 1) / q, "<=", -a,
                                 "equivalence", "exists"))
    if family == "local_mu_nu":
        q, k, m = p["q"], p["k"], p["m"]
        # int mu^{aq} nu^eps < inf with mu = (1+t)^k, nu = (1+t)^m
        for target in ("alpha", "beta", "S"):
            rows.append(ConditionRow("kaq+εm<−1", k * a * q + e * m, "<", -1.0,
                                     "sufficient", target))
    return rows


_BOUND_KIND = {"local_exp": "exponential", "local_poly": "polynomial",
               "local_rho": "rho", "local_mixed": "mixed_poly_shift",
               "local_mu_nu": "mu_nu", "mixed": "mixed_poly_shift"}
_RADIUS_KIND = {"local_exp": "exp", "local_poly": "poly", "local_rho": "rho_form",
                "local_mixed": "poly", "local_mu_nu": "mu_power"}
RHO_CLOCK = "quadratic:1,0.1"


def build_family(family: str, p: dict):
    """(bounds, radius or None) for a family at parameters ``p``."""
    kind = _BOUND_KIND.get(family, family)
    kw = dict(D=p.get("D", 1.0), a=p["a"], b=p.get("b", 0.0), eps=p["eps"])
    if kind == "rho":
        kw["rho"] = parse_clock(p.get("rho", RHO_CLOCK))
    elif kind == "mu_nu":
        kw["mu"] = parse_clock(f"log1p:{p['k']}")
        kw["nu"] = parse_clock(f"log1p:{p['m']}")
    elif kind == "constant_a":
        kw = dict(L=p.get("L", 1.0), a=p["a"], eps=p["eps"], D=p.get("D", 1.0))
    bounds = BoundFamily(kind, **kw)
    if family not in _RADIUS_KIND:
        return bounds, None
    rk = _RADIUS_KIND[family]
    delta = p.get("delta", 0.1)
    if rk == "rho_form":
        R = RadiusFunction(rk, delta=delta, beta=p["beta"], q=p["q"],
                           clock=parse_clock(p.get("rho", RHO_CLOCK)))
    elif rk == "mu_power":
        R = RadiusFunction(rk, delta=delta, a=p["a"], clock=kw["mu"])
    else:
        R = RadiusFunction(rk, delta=delta, beta=p["beta"])
    return bounds, R


def _finite(fn) -> bool | None:
    try:
        v = fn()["value"]
        return bool(math.isfinite(v))
    except DivergenceError:
        return False
    except TruncationError:
        return None


def numeric_verdicts(family: str, p: dict, targets, qcfg: QuadratureConfig | None = None
                     ) -> dict:
    """Numeric verdict per target (decay, alpha, beta, S, exists).

    alpha and beta use generic quadrature (never the closed forms); S uses
    the sampled supremum of a(t,s) R(s)/R(t).  ``exists`` asks whether the
    smallest radius exponent beta = (2 eps + 1)/q admits finite alpha, beta
    and S.
    """
    qcfg = qcfg or QuadratureConfig(quad_tol=1e-8, cross_check=False)
    out = {}
    bounds, R = build_family(family, p)
    c = p.get("c", 1.0)
    if "decay" in targets:
        out["decay"] = {"pass": True, "fail": False}.get(
            check_decay_condition(bounds, [0.0, 1.0, 5.0, 20.0])["numeric"])
    env = (LipschitzEnvelope("ball_power", c=c, q=p["q"], radius=R)
           if R is not None else None)
    if "alpha" in targets:
        out["alpha"] = _finite(lambda: alpha_details(bounds, env, qcfg, "generic"))
    if "beta" in targets:
        out["beta"] = _finite(lambda: beta_details(bounds, env, qcfg, "generic"))
    if "S" in targets:
        out["S"] = compute_S(bounds, R, 0.0, 0.0, qcfg)["numeric_finite"]
    if "exists" in targets:
        p2 = {**p, "beta": (2 * p["eps"] + 1) / p["q"]}
        sub = numeric_verdicts(family, p2, ("alpha", "beta", "S"), qcfg)
        vals = list(sub.values())
        out["exists"] = None if None in vals else all(vals)
    return out


def evaluate_conditions(family: str, p: dict, qcfg: QuadratureConfig | None = None
                        ) -> list[ConditionRow]:
    rows = family_conditions(family, p)
    targets = sorted({r.target for r in rows})
    num = numeric_verdicts(family, p, targets, qcfg)
    for r in rows:
        r.numeric = num[r.target]
    return rows


# Five parameter points per family, chosen on both sides of every condition
# and away from the boundaries (so that slow tails stay numerically decidable).
SWEEPS = {
    "exponential": [dict(a=-1, b=0, eps=0.1), dict(a=-0.1, b=0, eps=0.5),
                    dict(a=-1, b=0.5, eps=1.2), dict(a=-0.5, b=0, eps=0.5),
                    dict(a=-2, b=1, eps=2.5)],
    "polynomial": [dict(a=-1, b=0, eps=0.1), dict(a=-0.1, b=0, eps=0.5),
                   dict(a=-1, b=0.5, eps=1.0), dict(a=-0.5, b=0, eps=0.6),
                   dict(a=-2, b=1, eps=2.5)],
    "rho": [dict(a=-1, b=0, eps=0.1), dict(a=-0.1, b=0, eps=0.5),
            dict(a=-1, b=0.5, eps=1.2), dict(a=-0.5, b=0, eps=0.5),
            dict(a=-2, b=1, eps=2.5)],
    "mixed": [dict(a=-1, b=0, eps=0.1), dict(a=-0.1, b=0, eps=0.5),
              dict(a=-1, b=0.5, eps=1.0), dict(a=-0.5, b=0, eps=0.7),
              dict(a=-2, b=1, eps=2.5)],
    "mu_nu": [dict(a=-1, b=0, eps=0.5, k=2, m=1), dict(a=-1, b=0, eps=0.5, k=1, m=3),
              dict(a=-0.5, b=0.5, eps=1.0, k=1, m=1.5),
              dict(a=-1, b=0, eps=1.0, k=1, m=0.5),
              dict(a=-0.2, b=0.3, eps=0.2, k=2, m=2)],
    "constant_a": [dict(a=-1, eps=0.1), dict(a=-0.1, eps=0.5), dict(a=-1, eps=0.5),
                   dict(a=-0.5, eps=0.7), dict(a=-2, eps=1.5)],
    "local_exp": [dict(a=-1, b=0, eps=0.1, q=2, beta=0.02),
                  dict(a=-1, b=0, eps=0.1, q=2, beta=0.075),
                  dict(a=-1, b=0, eps=0.1, q=2, beta=0.5),
                  dict(a=-1, b=0, eps=0.1, q=2, beta=1.2),
                  dict(a=-0.1, b=0, eps=0.5, q=2, beta=0.6)],
    "local_poly": [dict(a=-0.9, b=0, eps=0.5, q=2, beta=0.5),
                   dict(a=-0.9, b=0, eps=0.5, q=2, beta=0.875),
                   dict(a=-1.5, b=0, eps=0.5, q=2, beta=1.25),
                   dict(a=-0.9, b=0, eps=0.5, q=2, beta=1.25),
                   dict(a=-0.2, b=0, eps=0.5, q=2, beta=1.25)],
    "local_rho": [dict(a=-1, b=0, eps=0.1, q=2, beta=0.02),
                  dict(a=-1, b=0, eps=0.1, q=2, beta=0.075),
                  dict(a=-1, b=0, eps=0.1, q=2, beta=0.5),
                  dict(a=-1, b=0, eps=0.1, q=2, beta=1.2),
                  dict(a=-0.1, b=0, eps=0.5, q=2, beta=0.6)],
    "local_mixed": [dict(a=-1.5, b=0, eps=0.5, q=2, beta=1.25),
                    dict(a=-1.5, b=0, eps=0.5, q=2, beta=0.5),
                    dict(a=-0.9, b=0, eps=0.5, q=2, beta=1.25),
                    dict(a=-0.2, b=0, eps=0.5, q=2, beta=1.25),
                    dict(a=-2, b=0, eps=0.25, q=2, beta=1.0)],
}


def run_sweep(family: str, qcfg: QuadratureConfig | None = None):
    """[(params, rows)] over the five sweep points of ``family``."""
    return [(p, evaluate_conditions(family, p, qcfg)) for p in SWEEPS[family]]


# -- demo summaries -----------------------------------------------------------

DEMO_FAMILY = {"exponential": "exponential", "polynomial": "polynomial", "rho": "rho",
               "mu_nu": "mu_nu", "mixed": "mixed", "constant_a": "constant_a",
               "local_exp": "local_exp", "local_poly": "local_poly",
               "local_rho": "local_rho", "local_mu_nu": "local_mu_nu"}


def params_from_config(cfg: ScenarioConfig) -> dict:
    p = {"a": cfg["bounds.a"], "b": cfg["bounds.b"], "eps": cfg["bounds.eps"],
         "D": cfg["bounds.D"], "L": cfg["bounds.L"]}
    if cfg["bounds.kind"] == "mu_nu":
        p["k"] = _clock_power(cfg["bounds.mu"])
        p["m"] = _clock_power(cfg["bounds.nu"])
    if cfg["bounds.kind"] == "rho":
        p["rho"] = cfg["bounds.rho"]
    if cfg.is_local:
        p.update(q=cfg["perturbation.q"], c=cfg["perturbation.c"],
                 beta=cfg["radius.beta"], delta=cfg["radius.delta"])
    return p


def format_rows(rows) -> str:
    return "\n".join(r.line() for r in rows)
