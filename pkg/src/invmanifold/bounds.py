"""Parametric dichotomy bounds a(t,s), b(t,s) and their checks.

All families are evaluated through ``log_a`` / ``log_b`` so that nonuniform
factors such as ``e^{eps*s}`` never overflow.  Families that factor as

    a(t,s) = (fa(s)/fa(t)) fc(s),   b(t,s) = (fb(s)/fb(t)) fd(t)

expose those four functions through :meth:`BoundFamily.product_form`; this is
what the closed-form admissibility formulas and the 2D example system use.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintError, DomainError
from .functions import IDENTITY, Clock, Growth, asymptotic_sign

KINDS = ("product_form", "exponential", "polynomial", "rho", "mu_nu",
         "mixed_poly_shift", "exp_polyb", "constant_a", "tabulated")


@dataclass(eq=False)
class BoundFamily:
    kind: str
    D: float = 1.0
    a: float = -1.0
    b: float = 0.0
    eps: float = 0.0
    L: float = 1.0
    rho: Clock = field(default_factory=lambda: IDENTITY)
    mu: Clock = field(default_factory=lambda: IDENTITY)
    nu: Clock = field(default_factory=lambda: IDENTITY)
    growths: tuple | None = None     # (fa, fb, fc, fd) for product_form
    table: dict | None = None        # tabulated: arrays t, s, a, b
    scale: float = 1.0               # multiplies both bounds (negative controls)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConstraintError(f"unknown bound family {self.kind!r}")
        k = self.kind
        if k in ("exponential", "polynomial", "rho", "mu_nu", "mixed_poly_shift",
                 "exp_polyb"):
            if self.D < 1:
                raise ConstraintError("D must be >= 1")
            if not self.a < 0 <= self.b:
                raise ConstraintError("need a < 0 <= b")
            if self.eps < 0:
                raise ConstraintError("eps must be >= 0")
            if k in ("polynomial", "mu_nu", "mixed_poly_shift", "exp_polyb") \
                    and self.eps <= 0:
                raise ConstraintError(f"{k} family needs eps > 0")
        if k == "constant_a":
            if self.L < 1 or not self.a < 0 or self.eps <= 0:
                raise ConstraintError("constant_a needs L >= 1, a < 0, eps > 0")
        if k == "product_form" and (self.growths is None or len(self.growths) != 4):
            raise ConstraintError("product_form needs four growth functions")
        if k == "tabulated":
            self._build_table()

    # -- evaluation -----------------------------------------------------------
    def log_a(self, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        k = self.kind
        ls = np.log(self.scale)
        pf = self.product_form()
        if pf is not None:
            fa, _, fc, _ = pf
            return ls + fa.log(s) - fa.log(t) + fc.log(s)
        if k == "mixed_poly_shift":
            return (ls + np.log(self.D) + self.a * np.log1p(t - s)
                    + self.eps * np.log1p(s))
        return ls + self._table_eval(self._interp_a, t, s)

    def log_b(self, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        k = self.kind
        ls = np.log(self.scale)
        pf = self.product_form()
        if pf is not None:
            _, fb, _, fd = pf
            return ls + fb.log(s) - fb.log(t) + fd.log(t)
        if k == "mixed_poly_shift":
            return (ls + np.log(self.D) - self.b * np.log1p(t - s)
                    + self.eps * np.log1p(t))
        return ls + self._table_eval(self._interp_b, t, s)

    def product_form(self):
        """(fa, fb, fc, fd) when the family factors, else None."""
        k, D, a, b, e = self.kind, self.D, self.a, self.b, self.eps
        if k == "product_form":
            return self.growths
        if k == "exponential":
            return (Growth.exp(-a), Growth.exp(b), Growth.exp(e, D), Growth.exp(e, D))
        if k == "polynomial":
            return (Growth.power(-a), Growth.power(b), Growth.power(e, D),
                    Growth.power(e, D))
        if k == "rho":
            r = self.rho
            return (Growth(-a, 1.0, r), Growth(b, 1.0, r), Growth(e, D, r),
                    Growth(e, D, r))
        if k == "mu_nu":
            return (Growth(-a, 1.0, self.mu), Growth(b, 1.0, self.mu),
                    Growth(e, D, self.nu), Growth(e, D, self.nu))
        if k == "exp_polyb":
            return (Growth.exp(-a), Growth.power(b), Growth.exp(e, D),
                    Growth.power(e, D))
        if k == "constant_a":
            return (Growth.const(1.0), Growth.exp(-a), Growth.const(self.L),
                    Growth.exp(e, D))
        return None

    def scaled(self, factor: float) -> "BoundFamily":
        """Same family with both bounds multiplied by ``factor``."""
        d = dict(self.__dict__)
        d = {k: v for k, v in d.items() if not k.startswith("_")}
        d["scale"] = self.scale * factor
        return BoundFamily(**d)

    # -- tabulated ------------------------------------------------------------
    def _build_table(self):
        from scipy.interpolate import LinearNDInterpolator

        tb = self.table
        if tb is None:
            raise ConstraintError("tabulated family needs a table")
        t, s = np.asarray(tb["t"], float), np.asarray(tb["s"], float)
        av, bv = np.asarray(tb["a"], float), np.asarray(tb["b"], float)
        if np.any(t < s) or np.any(s < 0):
            raise ConstraintError("tabulated rows need t >= s >= 0")
        if np.any(av <= 0) or np.any(bv <= 0):
            raise ConstraintError("tabulated bounds must be positive")
        pts = np.column_stack([t, s])
        self._interp_a = LinearNDInterpolator(pts, np.log(av))
        self._interp_b = LinearNDInterpolator(pts, np.log(bv))

    @staticmethod
    def _table_eval(interp, t, s):
        t, s = np.broadcast_arrays(t, s)
        out = interp(np.column_stack([t.ravel(), s.ravel()])).reshape(t.shape)
        if np.any(np.isnan(out)):
            raise DomainError("tabulated bounds queried outside the table")
        return out

    # -- serialization --------------------------------------------------------
    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "product_form":
            d["growths"] = [g.to_dict() for g in self.growths]
        elif self.kind == "tabulated":
            d["table"] = {k: list(map(float, v)) for k, v in self.table.items()}
        elif self.kind == "constant_a":
            d.update(L=self.L, a=self.a, eps=self.eps, D=self.D)
        else:
            d.update(D=self.D, a=self.a, b=self.b, eps=self.eps)
            if self.kind == "rho":
                d["rho"] = self.rho.to_dict()
            if self.kind == "mu_nu":
                d["mu"] = self.mu.to_dict()
                d["nu"] = self.nu.to_dict()
        if self.scale != 1.0:
            d["scale"] = self.scale
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BoundFamily":
        d = dict(d)
        for key in ("rho", "mu", "nu"):
            if key in d:
                d[key] = Clock.from_dict(d[key])
        if "growths" in d:
            d["growths"] = tuple(Growth.from_dict(g) for g in d["growths"])
        return cls(**d)


# -- family constructors ------------------------------------------------------

def exponential(D=1.0, a=-1.0, b=0.0, eps=0.0) -> BoundFamily:
    return BoundFamily("exponential", D=D, a=a, b=b, eps=eps)


def polynomial(D=1.0, a=-1.0, b=0.0, eps=0.1) -> BoundFamily:
    return BoundFamily("polynomial", D=D, a=a, b=b, eps=eps)


def rho_family(rho: Clock, D=1.0, a=-1.0, b=0.0, eps=0.0) -> BoundFamily:
    return BoundFamily("rho", D=D, a=a, b=b, eps=eps, rho=rho)


def mu_nu(mu: Clock, nu: Clock, D=1.0, a=-1.0, b=0.0, eps=0.1) -> BoundFamily:
    return BoundFamily("mu_nu", D=D, a=a, b=b, eps=eps, mu=mu, nu=nu)


def mixed_poly_shift(D=1.0, a=-1.0, b=0.0, eps=0.1) -> BoundFamily:
    return BoundFamily("mixed_poly_shift", D=D, a=a, b=b, eps=eps)


def exp_polyb(D=1.0, a=-1.0, b=0.0, eps=0.1) -> BoundFamily:
    return BoundFamily("exp_polyb", D=D, a=a, b=b, eps=eps)


def constant_a(L=1.0, a=-1.0, eps=0.1, D=1.0) -> BoundFamily:
    return BoundFamily("constant_a", L=L, a=a, eps=eps, D=D)


def product_form(fa: Growth, fb: Growth, fc: Growth, fd: Growth) -> BoundFamily:
    return BoundFamily("product_form", growths=(fa, fb, fc, fd))


# -- operations ---------------------------------------------------------------

def _check_domain(t, s):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < s) or np.any(s < 0):
        raise DomainError("bounds are defined for t >= s >= 0 only")


def eval_a(bounds: BoundFamily, t, s):
    _check_domain(t, s)
    return np.exp(bounds.log_a(t, s))


def eval_b(bounds: BoundFamily, t, s):
    _check_domain(t, s)
    return np.exp(bounds.log_b(t, s))


def decay_closed_form(bounds: BoundFamily):
    """Authoritative verdict for lim_t a(t,s) b(t,s) = 0, or None if unknown."""
    pf = bounds.product_form()
    if pf is not None:
        fa, fb, _, fd = pf
        # lim fd / (fa fb) = 0
        sign = asymptotic_sign([(fd.coef, fd.clock), (-fa.coef, fa.clock),
                                (-fb.coef, fb.clock)])
        return sign < 0
    if bounds.kind == "mixed_poly_shift":
        return bounds.a + bounds.eps < bounds.b
    return None


def check_decay_condition(bounds: BoundFamily, s_samples, horizon: float = 1e6,
                          threshold: float = 1e-6, n_grid: int = 400,
                          min_drop: float = 0.1) -> dict:
    """Sample a(t,s) b(t,s) along geometric t-grids and report the limit verdict.

    Numeric verdict per s: ``pass`` when the product is nonincreasing over the
    last decade of samples and either ends below ``threshold`` or drops by at
    least ``min_drop`` (in log) across that decade, ``fail`` when it is
    nondecreasing there, ``inconclusive`` otherwise.  The closed-form verdict
    (when the family has one) is authoritative.
    """
    s_samples = np.asarray(s_samples, dtype=float)
    if not horizon > np.max(s_samples):
        raise DomainError("horizon must exceed every sampled s")
    per_s = []
    with np.errstate(over="ignore", invalid="ignore"):
        for s in s_samples:
            gaps = np.geomspace(1e-3, horizon - s, n_grid)
            t = s + gaps
            lp = bounds.log_a(t, s) + bounds.log_b(t, s)
            lp = np.where(np.isnan(lp), -np.inf, lp)
            tail = lp[t >= s + (horizon - s) / 10]
            diffs = np.diff(tail)
            drop = tail[0] - tail[-1] if len(tail) else 0.0
            if np.all(diffs <= 1e-12) and (lp[-1] < np.log(threshold)
                                            or drop >= min_drop):
                verdict = "pass"
            elif np.all(diffs >= -1e-12):
                verdict = "fail"
            else:
                verdict = "inconclusive"
            per_s.append({"s": float(s), "final_product": float(np.exp(lp[-1])),
                          "verdict": verdict})
    verdicts = [p["verdict"] for p in per_s]
    if "fail" in verdicts:
        numeric = "fail"
    elif all(v == "pass" for v in verdicts):
        numeric = "pass"
    else:
        numeric = "inconclusive"
    closed = decay_closed_form(bounds)
    if closed is None:
        verdict = numeric
    else:
        verdict = "pass" if closed else "fail"
    return {"numeric": numeric, "closed_form": closed, "verdict": verdict,
            "horizon": horizon, "threshold": threshold, "per_s": per_s}


def verify_dichotomy_bounds(system, bounds: BoundFamily, grid, slack: float = 1e-12
                            ) -> dict:
    """Spot-check |T_{t,s}P| <= a(t,s) and |(T_{t,s}|F)^{-1}Q| <= b(t,s)."""
    violations = []
    worst_a = worst_b = 0.0
    for t, s in grid:
        if t < s:
            raise DomainError(f"grid point with t < s: {(t, s)}")
        TE, TF = system.blocks(t, s)
        nE = float(np.linalg.norm(TE, 2))
        nF = float(np.linalg.norm(np.linalg.inv(TF), 2))
        a = float(eval_a(bounds, t, s))
        b = float(eval_b(bounds, t, s))
        worst_a = max(worst_a, nE / a)
        worst_b = max(worst_b, nF / b)
        if nE > (1 + slack) * a:
            violations.append({"t": t, "s": s, "which": "a", "norm": nE, "bound": a})
        if nF > (1 + slack) * b:
            violations.append({"t": t, "s": s, "which": "b", "norm": nF, "bound": b})
    return {"violations": violations, "n_checked": len(grid),
            "worst_ratio_a": worst_a, "worst_ratio_b": worst_b,
            "passed": not violations}


def sharpness_points(k_max: int):
    """(t, s) = (2k pi, (2k-1) pi) where the product example attains a(t,s)."""
    return [(2 * k * np.pi, (2 * k - 1) * np.pi) for k in range(1, k_max + 1)]


# -- tabulated CSV ------------------------------------------------------------

def write_tabulated(path, bounds: BoundFamily, t_values, s_values=None) -> None:
    """Tabulate ``bounds`` on the lower triangle of a (t, s) grid."""
    s_values = t_values if s_values is None else s_values
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "s", "a", "b"])
        for s in s_values:
            for t in t_values:
                if t >= s:
                    w.writerow([repr(float(t)), repr(float(s)),
                                repr(float(eval_a(bounds, t, s))),
                                repr(float(eval_b(bounds, t, s)))])


def load_tabulated(path) -> BoundFamily:
    cols = {"t": [], "s": [], "a": [], "b": []}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["t", "s", "a", "b"]:
            raise ConstraintError("tabulated bounds CSV needs header t,s,a,b")
        for row in reader:
            for k in cols:
                cols[k].append(float(row[k]))
    return BoundFamily("tabulated", table=cols)
