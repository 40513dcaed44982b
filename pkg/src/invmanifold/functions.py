"""Positive scalar rate functions used by bounds, systems and radii.

Everything here is evaluated in log space so that families with
``e^{eps*s}``-type nonuniform factors can be sampled at large times without
overflow.  A :class:`Growth` is ``scale * exp(coef * h(t))`` where ``h`` is a
:class:`Clock`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Asymptotic order of each clock kind as t -> infinity (bigger grows faster).
_ORDER = {"log1p": 1, "linear": 2, "quadratic": 3}


@dataclass(frozen=True)
class Clock:
    """An increasing C^1 function h with h(0) = 0.

    kinds:
        ``linear``     h(t) = k t
        ``log1p``      h(t) = k log(1 + t)
        ``quadratic``  h(t) = c1 t + c2 t^2   (c1 > 0, c2 >= 0)
    """

    kind: str = "linear"
    k: float = 1.0
    c1: float = 1.0
    c2: float = 0.0

    def __post_init__(self):
        if self.kind not in _ORDER:
            raise ValueError(f"unknown clock kind {self.kind!r}")
        if self.kind in ("linear", "log1p") and self.k <= 0:
            raise ValueError("clock rate k must be positive")
        if self.kind == "quadratic" and (self.c1 <= 0 or self.c2 < 0):
            raise ValueError("quadratic clock needs c1 > 0 and c2 >= 0")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            return self.k * t
        if self.kind == "log1p":
            return self.k * np.log1p(t)
        return self.c1 * t + self.c2 * t * t

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            return self.k * np.ones_like(t)
        if self.kind == "log1p":
            return self.k / (1.0 + t)
        return self.c1 + 2.0 * self.c2 * t

    @property
    def order(self) -> tuple[int, float]:
        # quadratic clocks with c2 == 0 are linear in disguise
        if self.kind == "quadratic" and self.c2 == 0.0:
            return _ORDER["linear"], self.c1
        if self.kind == "quadratic":
            return _ORDER["quadratic"], self.c2
        return _ORDER[self.kind], self.k

    def to_dict(self) -> dict:
        if self.kind == "quadratic":
            return {"kind": self.kind, "c1": self.c1, "c2": self.c2}
        return {"kind": self.kind, "k": self.k}

    @classmethod
    def from_dict(cls, d: dict) -> "Clock":
        return cls(**d)


IDENTITY = Clock("linear", 1.0)
LOG1P = Clock("log1p", 1.0)


@dataclass(frozen=True)
class Growth:
    """``scale * exp(coef * clock(t))``, a positive differentiable function."""

    coef: float = 0.0
    scale: float = 1.0
    clock: Clock = field(default_factory=lambda: IDENTITY)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("growth scale must be positive")

    @classmethod
    def const(cls, c: float = 1.0) -> "Growth":
        return cls(0.0, c, IDENTITY)

    @classmethod
    def exp(cls, rate: float, scale: float = 1.0) -> "Growth":
        """scale * e^{rate t}"""
        return cls(rate, scale, IDENTITY)

    @classmethod
    def power(cls, p: float, scale: float = 1.0) -> "Growth":
        """scale * (1 + t)^p"""
        return cls(p, scale, LOG1P)

    def log(self, t):
        return np.log(self.scale) + self.coef * self.clock(t)

    def dlog(self, t):
        """Logarithmic derivative g'/g."""
        return self.coef * self.clock.deriv(t)

    def __call__(self, t):
        return np.exp(self.log(t))

    def deriv(self, t):
        return self.dlog(t) * self(t)

    def to_dict(self) -> dict:
        return {"coef": self.coef, "scale": self.scale, "clock": self.clock.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Growth":
        return cls(d["coef"], d["scale"], Clock.from_dict(d["clock"]))


def asymptotic_sign(terms) -> int:
    """Sign of lim_{t->inf} of sum(c * h(t)) for (c, clock) pairs.

    Returns -1 (-> -inf), +1 (-> +inf) or 0 (bounded).  Constant offsets are
    irrelevant and should not be passed.
    """
    by_order: dict[int, float] = {}
    for c, clock in terms:
        if clock.kind == "quadratic":
            # c1 t + c2 t^2 contributes to both orders
            by_order[_ORDER["linear"]] = by_order.get(_ORDER["linear"], 0.0) + c * clock.c1
            by_order[_ORDER["quadratic"]] = (by_order.get(_ORDER["quadratic"], 0.0)
                                             + c * clock.c2)
            continue
        order, scale = clock.order
        by_order[order] = by_order.get(order, 0.0) + c * scale
    for order in sorted(by_order, reverse=True):
        total = by_order[order]
        if abs(total) > 1e-14:
            return 1 if total > 0 else -1
    return 0
