"""Admissibility constants alpha, beta, the theorem gates, and S(s).

    alpha = sup_{t>s} (1/a(t,s)) int_s^t a(t,r) a(r,s) Lip(f_r) dr
    beta  = sup_s int_s^inf b(r,s) a(r,s) Lip(f_r) dr

The generic path evaluates these by vectorized quadrature over log-spaced
search grids with horizon doubling.  For product-form bounds alpha reduces to
``int_0^inf c(r) Lip(f_r) dr`` and beta to
``sup_s fa fb fc(s) int_s^inf fd/(fa fb) Lip dr``; those reduced forms are used
as the fast path and cross-checked against the generic one.

Error estimates are heuristic (panel-doubling differences plus the
extrapolated tail), not rigorous enclosures.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bounds import BoundFamily, check_decay_condition
from .errors import DivergenceError, PreconditionError, TruncationError
from .functions import IDENTITY, Clock, Growth, asymptotic_sign
from .quadrature import horizon_limit, integrate_pairs

# -- radius and envelope ------------------------------------------------------


@dataclass(frozen=True)
class RadiusFunction:
    """Positive radius r -> R(r) for the local theorem.

    kinds: ``constant`` (rho0), ``exp`` (delta e^{-beta r}), ``poly``
    (delta (r+1)^{-beta}), ``mu_power`` (delta mu(r)^a, mu = e^{clock}) and
    ``rho_form`` (delta rho'(r)^{1/q} e^{-beta rho(r)}).
    """

    kind: str = "constant"
    delta: float = 1.0
    beta: float = 0.0
    a: float = -1.0
    q: float = 1.0
    clock: Clock = field(default_factory=lambda: IDENTITY)

    def __post_init__(self):
        if self.kind not in ("constant", "exp", "poly", "mu_power", "rho_form"):
            raise ValueError(f"unknown radius kind {self.kind!r}")
        if self.delta <= 0:
            raise ValueError("radius needs delta > 0")
        if self.kind in ("exp", "poly", "rho_form") and self.beta <= 0:
            raise ValueError("radius needs beta > 0")
        if self.kind == "mu_power" and self.a >= 0:
            raise ValueError("mu_power radius needs a < 0")
        if self.kind == "rho_form" and self.q <= 0:
            raise ValueError("rho_form radius needs q > 0")

    def log(self, r):
        r = np.asarray(r, dtype=float)
        ld = math.log(self.delta)
        if self.kind == "constant":
            return ld + 0.0 * r
        if self.kind == "exp":
            return ld - self.beta * r
        if self.kind == "poly":
            return ld - self.beta * np.log1p(r)
        if self.kind == "mu_power":
            return ld + self.a * self.clock(r)
        return ld + np.log(self.clock.deriv(r)) / self.q - self.beta * self.clock(r)

    def __call__(self, r):
        return np.exp(self.log(r))

    def as_growth(self):
        """The radius as a :class:`Growth`, when it is one."""
        if self.kind == "constant":
            return Growth.const(self.delta)
        if self.kind == "exp":
            return Growth.exp(-self.beta, self.delta)
        if self.kind == "poly":
            return Growth.power(-self.beta, self.delta)
        if self.kind == "mu_power":
            return Growth(self.a, self.delta, self.clock)
        return None

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "delta": self.delta}
        if self.kind in ("exp", "poly", "rho_form"):
            d["beta"] = self.beta
        if self.kind == "mu_power":
            d["a"] = self.a
        if self.kind == "rho_form":
            d["q"] = self.q
        if self.kind in ("mu_power", "rho_form"):
            d["clock"] = self.clock.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RadiusFunction":
        d = dict(d)
        if "clock" in d:
            d["clock"] = Clock.from_dict(d["clock"])
        return cls(**d)


@dataclass(frozen=True)
class LipschitzEnvelope:
    """Nonnegative r -> Lip(f_r).

    kinds: ``zero``, ``exp_decay`` (delta e^{-rate r}), ``poly_decay``
    (delta (r+1)^{-p}), ``rho_decay`` (delta rho'(r) e^{-2 eps rho(r)}),
    ``ball_power`` (2^q c R(r)^q) and ``tabulated`` (log-linear in r,
    extended with the last slope).  ``scale`` multiplies the whole envelope.
    """

    kind: str = "zero"
    delta: float = 0.0
    rate: float = 0.0
    p: float = 0.0
    eps: float = 0.0
    c: float = 0.0
    q: float = 1.0
    clock: Clock = field(default_factory=lambda: IDENTITY)
    radius: RadiusFunction | None = None
    table: tuple | None = None          # ((r...), (values...))
    scale: float = 1.0

    def __post_init__(self):
        k = self.kind
        if k not in ("zero", "exp_decay", "poly_decay", "rho_decay", "ball_power",
                     "tabulated"):
            raise ValueError(f"unknown envelope kind {k!r}")
        if k in ("exp_decay", "poly_decay", "rho_decay") and self.delta <= 0:
            raise ValueError("envelope needs delta > 0")
        if k == "exp_decay" and self.rate < 0:
            raise ValueError("exp_decay needs rate >= 0")
        if k == "poly_decay" and self.p < 0:
            raise ValueError("poly_decay needs p >= 0")
        if k == "ball_power" and (self.c <= 0 or self.q <= 0 or self.radius is None):
            raise ValueError("ball_power needs c > 0, q > 0 and a radius")
        if k == "tabulated":
            r, v = self.table
            if np.any(np.asarray(v) < 0) or np.any(np.diff(r) <= 0):
                raise ValueError("tabulated envelope needs increasing r, values >= 0")
        if self.scale < 0:
            raise ValueError("envelope scale must be nonnegative")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.scale == 0.0

    def log(self, r):
        r = np.asarray(r, dtype=float)
        if self.is_zero:
            return np.full(r.shape, -np.inf)
        ls = math.log(self.scale)
        k = self.kind
        if k == "exp_decay":
            return ls + math.log(self.delta) - self.rate * r
        if k == "poly_decay":
            return ls + math.log(self.delta) - self.p * np.log1p(r)
        if k == "rho_decay":
            return (ls + math.log(self.delta) + np.log(self.clock.deriv(r))
                    - 2 * self.eps * self.clock(r))
        if k == "ball_power":
            return ls + self.q * math.log(2) + math.log(self.c) + self.q * self.radius.log(r)
        rr, vv = (np.asarray(x, dtype=float) for x in self.table)
        with np.errstate(divide="ignore"):
            lv = np.log(vv)
        out = np.interp(r, rr, lv)
        slope = (lv[-1] - lv[-2]) / (rr[-1] - rr[-2]) if len(rr) > 1 else 0.0
        return ls + np.where(r > rr[-1], lv[-1] + slope * (r - rr[-1]), out)

    def __call__(self, r):
        return np.exp(self.log(r))

    def scaled(self, factor: float) -> "LipschitzEnvelope":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["scale"] = self.scale * factor
        return LipschitzEnvelope(**d)

    def to_dict(self) -> dict:
        k = self.kind
        d = {"kind": k}
        if k == "exp_decay":
            d.update(delta=self.delta, rate=self.rate)
        elif k == "poly_decay":
            d.update(delta=self.delta, p=self.p)
        elif k == "rho_decay":
            d.update(delta=self.delta, eps=self.eps, clock=self.clock.to_dict())
        elif k == "ball_power":
            d.update(c=self.c, q=self.q, radius=self.radius.to_dict())
        elif k == "tabulated":
            d["table"] = [list(map(float, x)) for x in self.table]
        if self.scale != 1.0:
            d["scale"] = self.scale
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LipschitzEnvelope":
        d = dict(d)
        if "clock" in d:
            d["clock"] = Clock.from_dict(d["clock"])
        if "radius" in d:
            d["radius"] = RadiusFunction.from_dict(d["radius"])
        if "table" in d:
            d["table"] = tuple(tuple(x) for x in d["table"])
        return cls(**d)


ZERO = LipschitzEnvelope("zero")


@dataclass
class QuadratureConfig:
    quad_tol: float = 1e-10
    tail_tol: float = 1e-12
    horizon_init: float = 8.0
    horizon_max: float = 1e6
    sup_grid: int = 64
    grid_min_gap: float = 1e-3
    gauss_order: int = 10
    cross_check: bool = True
    threads: int = 1


# -- generic integrals --------------------------------------------------------

def _integrate(logg, lo, hi, cfg):
    return integrate_pairs(logg, lo, hi, tol=cfg.quad_tol, order=cfg.gauss_order,
                           threads=cfg.threads)


def _s_grid(H, n, cfg):
    return np.concatenate([[0.0], np.geomspace(cfg.grid_min_gap, H, n - 1)])


def _alpha_pairs(bounds, lip, S, G, cfg):
    """Normalized alpha integrals at pairs (s_i, s_i + gap_i)."""
    T = S + G

    def logg(r, rows):
        t, s = T[rows][:, None], S[rows][:, None]
        return (bounds.log_a(t, r) + bounds.log_a(r, s) - bounds.log_a(t, s)
                + lip.log(r))

    return _integrate(logg, S, T, cfg)


def _beta_pairs(bounds, lip, S, H, cfg):
    def logg(r, rows):
        s = S[rows][:, None]
        return bounds.log_b(r, s) + bounds.log_a(r, s) + lip.log(r)

    return _integrate(logg, S, S + H, cfg)


def _refine_grid(grid, i, n=16):
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    return np.linspace(lo, hi, n)


def alpha_generic(bounds, lip, cfg, horizon_init=None):
    n = cfg.sup_grid

    def evaluate(H):
        s = _s_grid(H, n, cfg)
        g = np.geomspace(cfg.grid_min_gap, H, n)
        S, G = (x.ravel() for x in np.meshgrid(s, g, indexing="ij"))
        v, e = _alpha_pairs(bounds, lip, S, G, cfg)
        k = int(np.argmax(v))
        return float(v[k]), float(e[k]), (k, s, g)

    res = horizon_limit(evaluate, cfg, label="alpha")
    # one refinement pass around the argmax on the final grid
    k, s, g = res["extra"]
    i, j = divmod(k, len(g))
    rs, rg = _refine_grid(s, i), _refine_grid(g, j)
    S, G = (x.ravel() for x in np.meshgrid(rs, rg, indexing="ij"))
    v, e = _alpha_pairs(bounds, lip, S, G, cfg)
    kk = int(np.argmax(v))
    base = res["value"] - res["tail"]
    if v[kk] > base:
        res["value"] = float(v[kk]) + res["tail"]
        res["error"] = float(e[kk]) + res["tail"]
        res["argmax"] = (float(S[kk]), float(S[kk] + G[kk]))
    else:
        res["argmax"] = (float(s[i]), float(s[i] + g[j]))
    return res


def beta_generic(bounds, lip, cfg):
    n = cfg.sup_grid

    def evaluate(H):
        s = _s_grid(H, n, cfg)
        v, e = _beta_pairs(bounds, lip, s, H, cfg)
        k = int(np.argmax(v))
        return float(v[k]), float(e[k]), (k, s, H)

    res = horizon_limit(evaluate, cfg, label="beta")
    k, s, H = res["extra"]
    rs = _refine_grid(s, k)
    v, e = _beta_pairs(bounds, lip, rs, H, cfg)
    kk = int(np.argmax(v))
    base = res["value"] - res["tail"]
    if v[kk] > base:
        res["value"] = float(v[kk]) + res["tail"]
        res["error"] = float(e[kk]) + res["tail"]
        res["argmax"] = float(rs[kk])
    else:
        res["argmax"] = float(s[k])
    return res


def beta_tail(bounds, lip, T, s_max, cfg, n_s=33):
    """sup_{0<=s<=s_max} int_{s+T}^inf b(r,s) a(r,s) Lip(f_r) dr."""
    if lip.is_zero:
        return 0.0
    S = np.linspace(0.0, s_max, n_s)

    def logg(r, rows):
        s = S[rows][:, None]
        return bounds.log_b(r, s) + bounds.log_a(r, s) + lip.log(r)

    def evaluate(H):
        v, e = _integrate(logg, S + T, S + T + H, cfg)
        k = int(np.argmax(v))
        return float(v[k]), float(e[k]), None

    return horizon_limit(evaluate, cfg, label="beta tail")["value"]


def alpha_closed(bounds, lip, cfg):
    """int_0^inf c(r) Lip(f_r) dr for product-form bounds."""
    fc = bounds.product_form()[2]
    ls = math.log(bounds.scale)

    def logg(r, rows):
        return ls + fc.log(r) + lip.log(r)

    def evaluate(H):
        v, e = _integrate(logg, np.zeros(1), np.array([H]), cfg)
        return float(v[0]), float(e[0]), None

    return horizon_limit(evaluate, cfg, label="alpha")


def beta_closed(bounds, lip, cfg):
    """sup_s fa fb fc(s) int_s^inf fd / (fa fb) Lip dr for product-form bounds."""
    fa, fb, fc, fd = bounds.product_form()
    ls = 2 * math.log(bounds.scale)
    n = cfg.sup_grid

    def evaluate(H):
        s = _s_grid(H, n, cfg)
        pre = fa.log(s) + fb.log(s) + fc.log(s)

        def logg(r, rows):
            return (ls + pre[rows][:, None] + fd.log(r) - fa.log(r) - fb.log(r)
                    + lip.log(r))

        v, e = _integrate(logg, s, s + H, cfg)
        k = int(np.argmax(v))
        return float(v[k]), float(e[k]), float(s[k])

    return horizon_limit(evaluate, cfg, label="beta")


def compute_alpha(bounds: BoundFamily, lip: LipschitzEnvelope,
                  cfg: QuadratureConfig | None = None, method: str = "auto"):
    """Returns (alpha, error_estimate).  See :func:`alpha_details`."""
    d = alpha_details(bounds, lip, cfg, method)
    return d["value"], d["error"]


def alpha_details(bounds, lip, cfg=None, method="auto") -> dict:
    """alpha with diagnostics.

    Args:
        method: ``generic``, ``closed`` or ``auto`` (closed form when the
            bounds factor, with a generic cross-check if ``cfg.cross_check``).

    Raises:
        DivergenceError: alpha is infinite.
        TruncationError: the tail could not be resolved by horizon_max.
    """
    cfg = cfg or QuadratureConfig()
    if lip.is_zero:
        return {"value": 0.0, "error": 0.0, "closed_form_used": False,
                "status": "converged", "horizon": 0.0}
    pf = bounds.product_form()
    if method == "generic" or (method == "auto" and pf is None):
        res = alpha_generic(bounds, lip, cfg)
        res["closed_form_used"] = False
    else:
        if pf is None:
            raise ValueError("closed-form alpha needs product-form bounds")
        res = alpha_closed(bounds, lip, cfg)
        res["closed_form_used"] = True
        if method == "auto" and cfg.cross_check:
            gen = alpha_generic(bounds, lip, cfg)
            res["cross_check"] = {"generic": gen["value"], "generic_error": gen["error"],
                                  "difference": abs(gen["value"] - res["value"])}
    res.pop("extra", None)
    return res


def compute_beta(bounds: BoundFamily, lip: LipschitzEnvelope,
                 cfg: QuadratureConfig | None = None, method: str = "auto"):
    d = beta_details(bounds, lip, cfg, method)
    return d["value"], d["error"]


def beta_details(bounds, lip, cfg=None, method="auto") -> dict:
    cfg = cfg or QuadratureConfig()
    if lip.is_zero:
        return {"value": 0.0, "error": 0.0, "closed_form_used": False,
                "status": "converged", "horizon": 0.0}
    pf = bounds.product_form()
    if method == "generic" or (method == "auto" and pf is None):
        res = beta_generic(bounds, lip, cfg)
        res["closed_form_used"] = False
    else:
        if pf is None:
            raise ValueError("closed-form beta needs product-form bounds")
        res = beta_closed(bounds, lip, cfg)
        res["argmax"] = res.pop("extra")
        res["closed_form_used"] = True
        if method == "auto" and cfg.cross_check:
            gen = beta_generic(bounds, lip, cfg)
            res["cross_check"] = {"generic": gen["value"], "generic_error": gen["error"],
                                  "difference": abs(gen["value"] - res["value"])}
    res.pop("extra", None)
    return res


# -- gates --------------------------------------------------------------------

def check_global_gate(alpha: float, beta: float):
    """2 alpha + max{2 beta, sqrt(beta)} < 1, with margin 1 - lhs."""
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be nonnegative")
    margin = 1.0 - (2 * alpha + max(2 * beta, math.sqrt(beta)))
    return margin > 0, margin


def check_local_gate(alpha: float, beta: float):
    """4 alpha + max{4 beta, sqrt(2 beta)} < 1, with margin 1 - lhs."""
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be nonnegative")
    margin = 1.0 - (4 * alpha + max(4 * beta, math.sqrt(2 * beta)))
    return margin > 0, margin


# -- S(s) ---------------------------------------------------------------------

def _log_deriv_order(clock: Clock) -> float:
    """Coefficient c with log clock'(t) ~ c log t."""
    if clock.kind == "quadratic" and clock.c2 > 0:
        return 1.0
    if clock.kind == "log1p":
        return -1.0
    return 0.0


def S_closed_form(bounds: BoundFamily, R: RadiusFunction):
    """Is sup_{t>=s} a(t,s)/R(t) finite?  None when no closed verdict exists.

    Only the t-dependence matters: a(t,s)/R(t) ~ 1/(fa(t) R(t)).
    """
    pf = bounds.product_form()
    if pf is not None:
        fa = pf[0]
        g = R.as_growth()
        if g is not None:
            sign = asymptotic_sign([(-fa.coef, fa.clock), (-g.coef, g.clock)])
            return sign <= 0
        # rho_form: log R = (1/q) log rho' - beta rho
        terms = [(-fa.coef, fa.clock), (R.beta, R.clock)]
        sign = asymptotic_sign(terms)
        if sign != 0:
            return sign < 0
        return -_log_deriv_order(R.clock) / R.q <= 0
    if bounds.kind == "mixed_poly_shift" and R.kind == "poly":
        return bounds.a + R.beta <= 0
    return None


def compute_S(bounds: BoundFamily, R: RadiusFunction, alpha: float, s: float,
              cfg: QuadratureConfig | None = None, n_grid: int = 400) -> dict:
    """S(s) = max{1, 2/(1-4 alpha) sup_{t>=s} a(t,s) R(s)/R(t)}.

    Returns a dict with ``S`` (``inf`` when unbounded), ``sup``, the numeric
    and closed-form verdicts, and ``entry_radius`` R(s)/(2 S(s)).
    """
    cfg = cfg or QuadratureConfig()
    if alpha >= 0.25:
        raise PreconditionError("S(s) needs alpha < 1/4", margins={"alpha": alpha})
    gaps = np.concatenate([[0.0], np.geomspace(cfg.grid_min_gap, cfg.horizon_max,
                                               n_grid)])
    t = s + gaps
    with np.errstate(over="ignore", invalid="ignore"):
        lg = bounds.log_a(t, s) + R.log(s) - R.log(t)
    tail = lg[t >= s + cfg.horizon_max / 10]
    numeric_finite = bool(np.all(np.isfinite(lg)) and np.all(np.diff(tail) <= 1e-12))
    closed = S_closed_form(bounds, R)
    finite = numeric_finite if closed is None else closed
    sup = float(np.exp(np.max(lg))) if finite else math.inf
    S = max(1.0, 2.0 / (1.0 - 4.0 * alpha) * sup) if finite else math.inf
    return {"s": float(s), "S": S, "sup": sup, "numeric_finite": numeric_finite,
            "closed_form_finite": closed,
            "entry_radius": float(R(s)) / (2 * S) if finite else 0.0}


# -- report -------------------------------------------------------------------

@dataclass
class AdmissibilityReport:
    alpha: float
    beta: float
    alpha_err: float
    beta_err: float
    decay_ok: str
    global_gate: bool
    global_margin: float
    local_gate: bool
    local_margin: float
    closed_form_used: bool
    divergent: bool = False
    details: dict = field(default_factory=dict)

    @property
    def global_ok(self) -> bool:
        return self.global_gate and self.decay_ok == "pass"

    @property
    def local_ok(self) -> bool:
        return self.local_gate and self.decay_ok == "pass"

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("alpha", "beta", "alpha_err", "beta_err", "global_margin",
                  "local_margin"):
            if not math.isfinite(d[k]):
                d[k] = "inf" if d[k] > 0 else "-inf"
        return d


def assess(bounds: BoundFamily, lip: LipschitzEnvelope, cfg: QuadratureConfig | None = None,
           method: str = "auto", decay_samples=(0.0, 1.0, 5.0, 20.0),
           decay_horizon: float = 1e6) -> AdmissibilityReport:
    """alpha, beta, decay verdict and both gates in one report.

    Divergent or unresolved constants are reported as ``inf`` with closed gates
    rather than raised.
    """
    cfg = cfg or QuadratureConfig()
    details = {}
    divergent = False
    vals = {}
    for name, fn in (("alpha", alpha_details), ("beta", beta_details)):
        try:
            d = fn(bounds, lip, cfg, method)
            vals[name] = (d["value"], d["error"], d.get("closed_form_used", False))
            details[name] = {k: v for k, v in d.items() if k not in ("value", "error")}
        except DivergenceError as exc:
            divergent = True
            vals[name] = (math.inf, math.inf, False)
            details[name] = {"status": "divergent", "message": str(exc)}
        except TruncationError as exc:
            vals[name] = (math.inf, math.inf, False)
            details[name] = {"status": "inconclusive", "message": str(exc),
                             "residual": exc.residual}
    decay = check_decay_condition(bounds, list(decay_samples), horizon=decay_horizon)
    details["decay"] = {"numeric": decay["numeric"], "closed_form": decay["closed_form"]}
    alpha, alpha_err, cf_a = vals["alpha"]
    beta, beta_err, cf_b = vals["beta"]
    if math.isfinite(alpha) and math.isfinite(beta):
        gg, gm = check_global_gate(alpha, beta)
        lg, lm = check_local_gate(alpha, beta)
    else:
        gg, gm, lg, lm = False, -math.inf, False, -math.inf
    return AdmissibilityReport(alpha=alpha, beta=beta, alpha_err=alpha_err,
                               beta_err=beta_err, decay_ok=decay["verdict"],
                               global_gate=gg, global_margin=gm, local_gate=lg,
                               local_margin=lm, closed_form_used=cf_a and cf_b,
                               divergent=divergent, details=details)
