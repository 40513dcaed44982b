"""Linear part v' = A(t) v: evolution operators and the invariant splitting.

Two kinds of system are supported:

* ``closed_form_product`` -- the 2D example whose evolution operator is known
  exactly in terms of four positive functions (a, b, c, d).  Evolution is a
  direct formula evaluation.
* ``coefficient`` -- a user supplied coefficient map ``A(t)``; transitions are
  integrated with an explicit adaptive Runge-Kutta method (DOP853) and cached.

Splittings are constant in time.  States are plain numpy vectors in the
ambient space; the product norm ``|Pv|_2 + |Qv|_2`` is used throughout.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConstraintError, DivergenceError, DomainError, InvertibilityError
from .functions import Growth

DIVERGENCE_GUARD = 1e12


class Splitting:
    """Constant projection P onto E along F = ker P."""

    def __init__(self, P):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        n = P.shape[0]
        if P.shape != (n, n):
            raise ConstraintError("projection must be square")
        if np.max(np.abs(P @ P - P)) > 1e-12:
            raise ConstraintError("projection is not idempotent")
        rank_E = int(np.linalg.matrix_rank(P))
        rank_F = int(np.linalg.matrix_rank(np.eye(n) - P))
        if rank_E == 0 or rank_F == 0 or rank_E + rank_F != n:
            raise ConstraintError("splitting must have nontrivial E and F")
        self.P = P
        self.Q = np.eye(n) - P
        self.dim = n
        self.dim_E = rank_E
        self.dim_F = rank_F
        # orthonormal bases of range(P) and range(Q)
        self.BE = _range_basis(P, rank_E)
        self.BF = _range_basis(self.Q, rank_F)

    @classmethod
    def coordinate(cls, dim_E: int, dim_F: int) -> "Splitting":
        return cls(np.diag([1.0] * dim_E + [0.0] * dim_F))

    def coords_E(self, v):
        """E-coordinates of P v (works on stacked vectors, last axis)."""
        return np.asarray(v) @ (self.BE.T @ self.P).T

    def coords_F(self, v):
        return np.asarray(v) @ (self.BF.T @ self.Q).T

    def join(self, xi, eta):
        """Ambient vector with E-coordinates xi and F-coordinates eta."""
        return np.asarray(xi) @ self.BE.T + np.asarray(eta) @ self.BF.T

    def norm(self, v):
        """Product norm |Pv|_2 + |Qv|_2 along the last axis."""
        return (np.linalg.norm(self.coords_E(v), axis=-1)
                + np.linalg.norm(self.coords_F(v), axis=-1))

    def to_dict(self) -> dict:
        return {"P": self.P.tolist()}


def _range_basis(M, rank):
    u, _, _ = np.linalg.svd(M)
    B = u[:, :rank]
    # canonical sign so coordinate splittings give +unit vectors
    for j in range(rank):
        i = np.argmax(np.abs(B[:, j]))
        if B[i, j] < 0:
            B[:, j] = -B[:, j]
    B[np.abs(B) < 1e-15] = 0.0
    return B


@dataclass
class IntegratorConfig:
    rtol: float = 1e-12
    atol: float = 1e-30
    method: str = "DOP853"


@dataclass(eq=False)
class LinearSystem:
    """v' = A(t) v with a constant invariant splitting.

    Use :func:`build_product_example` or :func:`coefficient_system` rather than
    constructing this directly.
    """

    dim: int
    splitting: Splitting
    kind: str
    growths: tuple | None = None          # (a, b, c, d) for closed_form_product
    coefficient: Callable | None = None    # t -> (dim, dim) for coefficient kind
    name: str = ""
    params: dict = field(default_factory=dict)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        self._cache: dict = {}
        self._lock = threading.Lock()

    # -- coefficient matrix ------------------------------------------------
    def matrix(self, t: float) -> np.ndarray:
        if self.kind == "coefficient":
            return np.asarray(self.coefficient(t), dtype=float)
        a, b, c, d = self.growths
        cu = (-a.dlog(t) + c.dlog(t) * (np.cos(t) - 1) / 2
              - c.log(t) * np.sin(t) / 2)
        cv = (b.dlog(t) + d.dlog(t) * (np.cos(t) - 1) / 2
              - d.log(t) * np.sin(t) / 2)
        return np.diag([float(cu), float(cv)])

    # -- closed form ------------------------------------------------------
    def log_U(self, t, s):
        a, _, c, _ = self.growths
        return (a.log(s) - a.log(t) + (np.cos(t) - 1) / 2 * c.log(t)
                - (np.cos(s) - 1) / 2 * c.log(s))

    def log_V(self, t, s):
        _, b, _, d = self.growths
        return (b.log(t) - b.log(s) + (np.cos(t) - 1) / 2 * d.log(t)
                - (np.cos(s) - 1) / 2 * d.log(s))

    # -- transitions ------------------------------------------------------
    def transition(self, t: float, s: float) -> np.ndarray:
        """Full matrix T_{t,s} for t >= s."""
        if t < s:
            raise DomainError(f"evolution needs t >= s, got t={t}, s={s}")
        if t == s:
            return np.eye(self.dim)
        if self.kind == "closed_form_product":
            lu, lv = self.log_U(t, s), self.log_V(t, s)
            if max(lu, lv) > np.log(DIVERGENCE_GUARD):
                raise DivergenceError(f"evolution diverges on [{s}, {t}]", horizon=t)
            return np.diag([np.exp(lu), np.exp(lv)])
        key = (float(t), float(s))
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        M = self._integrate(t, s)
        with self._lock:
            self._cache.setdefault(key, M)
        return M

    def _integrate(self, t, s):
        n = self.dim

        def rhs(tau, y):
            return (self.matrix(tau) @ y.reshape(n, n)).ravel()

        def guard(tau, y):
            return DIVERGENCE_GUARD - np.max(np.abs(y))

        guard.terminal = True
        cfg = self.integrator
        sol = solve_ivp(rhs, (s, t), np.eye(n).ravel(), method=cfg.method,
                        rtol=cfg.rtol, atol=cfg.atol, events=guard)
        if sol.status == 1 or not np.all(np.isfinite(sol.y[:, -1])):
            tb = float(sol.t[-1])
            raise DivergenceError(f"evolution diverges near t={tb:.6g} (from s={s})",
                                  horizon=tb)
        if sol.status != 0:
            raise DivergenceError(f"integrator failed on [{s}, {t}]: {sol.message}",
                                  horizon=t)
        return sol.y[:, -1].reshape(n, n)

    def blocks(self, t: float, s: float):
        """(E-block, F-block) of T_{t,s} in splitting coordinates."""
        if self.kind == "closed_form_product":
            if t < s:
                raise DomainError(f"evolution needs t >= s, got t={t}, s={s}")
            return (np.array([[np.exp(self.log_U(t, s))]]),
                    np.array([[np.exp(self.log_V(t, s))]]))
        T = self.transition(t, s)
        sp = self.splitting
        TE = sp.BE.T @ sp.P @ T @ sp.BE
        TF = sp.BF.T @ sp.Q @ T @ sp.BF
        return TE, TF

    def step_blocks(self, times):
        """E-blocks and inverse F-blocks of the one-step transitions.

        Returns arrays of shape (m-1, dE, dE) and (m-1, dF, dF) for the
        consecutive pairs of ``times``.
        """
        times = np.asarray(times, dtype=float)
        if self.kind == "closed_form_product":
            t1, t0 = times[1:], times[:-1]
            ME = np.exp(self.log_U(t1, t0))[:, None, None]
            NF = np.exp(-self.log_V(t1, t0))[:, None, None]
            return ME, NF
        ME, NF = [], []
        for t0, t1 in zip(times[:-1], times[1:]):
            TE, TF = self.blocks(t1, t0)
            ME.append(TE)
            NF.append(_safe_inv(TF, t1, t0))
        return np.array(ME), np.array(NF)

    def log_norm_E_from0(self, times):
        """log ||T_{t,0}|_E|| and log ||(T_{t,0}|_E)^{-1}|| on a time grid."""
        times = np.asarray(times, dtype=float)
        if self.kind == "closed_form_product":
            lu = self.log_U(times, 0.0)
            return lu, -lu
        fwd, inv = np.empty(len(times)), np.empty(len(times))
        acc = np.eye(self.splitting.dim_E)
        prev = 0.0
        for i, t in enumerate(times):
            TE, _ = self.blocks(t, prev)
            acc = TE @ acc
            prev = t
            fwd[i] = np.log(np.linalg.norm(acc, 2))
            inv[i] = np.log(np.linalg.norm(np.linalg.inv(acc), 2))
        return fwd, inv

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "dim": self.dim, "name": self.name,
             "splitting": self.splitting.to_dict()}
        if self.growths is not None:
            d["growths"] = [g.to_dict() for g in self.growths]
        if self.params:
            d["params"] = self.params
        return d


def _safe_inv(TF, t, s):
    cond = np.linalg.cond(TF)
    if not np.isfinite(cond) or cond > 1e13:
        raise InvertibilityError(
            f"T_{{t,s}}|F is numerically singular for t={t}, s={s} (cond={cond:.3g})")
    return np.linalg.inv(TF)


# -- public operations ----------------------------------------------------

def evolve(system: LinearSystem, t: float, s: float, v) -> np.ndarray:
    """T_{t,s} v."""
    if s < 0:
        raise DomainError("times must be nonnegative")
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != system.dim:
        raise DomainError(f"state must have length {system.dim}")
    out = system.transition(t, s) @ v
    if np.max(np.abs(out)) > DIVERGENCE_GUARD:
        raise DivergenceError(f"evolution exceeds guard at t={t}", horizon=t)
    return out


def evolve_inverse_F(system: LinearSystem, t: float, s: float, w) -> np.ndarray:
    """(T_{t,s}|_F)^{-1} Q w, returned as an ambient vector in F."""
    if t < s:
        raise DomainError(f"evolution needs t >= s, got t={t}, s={s}")
    sp = system.splitting
    eta = sp.coords_F(np.asarray(w, dtype=float))
    if t == s:
        return sp.BF @ eta
    _, TF = system.blocks(t, s)
    return sp.BF @ (_safe_inv(TF, t, s) @ eta)


def check_cocycle(system: LinearSystem, triples, tol: float, n_vectors: int = 8,
                  seed: int = 0) -> dict:
    """Worst |T_{t,r}T_{r,s}v - T_{t,s}v| over sampled unit v."""
    rng = np.random.default_rng(seed)
    worst, where = 0.0, None
    for (t, r, s) in triples:
        if not t >= r >= s:
            raise DomainError(f"need t >= r >= s, got {(t, r, s)}")
        V = rng.standard_normal((n_vectors, system.dim))
        V /= system.splitting.norm(V)[:, None]
        lhs = (system.transition(t, r) @ system.transition(r, s) @ V.T).T
        rhs = (system.transition(t, s) @ V.T).T
        res = float(np.max(system.splitting.norm(lhs - rhs)))
        if res > worst or where is None:
            worst, where = res, (t, r, s)
    return {"worst_residual": worst, "at": where, "tol": tol, "passed": worst <= tol}


def check_commutation(system: LinearSystem, pairs, tol: float = 1e-8) -> dict:
    """Worst |T P v - P T v| over basis vectors for the sampled (t, s)."""
    P = system.splitting.P
    worst = 0.0
    for t, s in pairs:
        T = system.transition(t, s)
        worst = max(worst, float(np.max(np.abs(T @ P - P @ T))))
    return {"worst_residual": worst, "passed": worst <= tol}


def build_product_example(a: Growth, b: Growth, c: Growth, d: Growth,
                          sample_times=None) -> LinearSystem:
    """The 2D diagonal system whose evolution is U(t,s) u, V(t,s) v.

    ``c`` and ``d`` must be >= 1; this is checked on ``sample_times``
    (default: 0..200).
    """
    if sample_times is None:
        sample_times = np.linspace(0.0, 200.0, 2001)
    ts = np.asarray(sample_times, dtype=float)
    for name, g in (("c", c), ("d", d)):
        if np.min(g.log(ts)) < -1e-14:
            raise ConstraintError(f"product example needs {name}(t) >= 1")
    return LinearSystem(dim=2, splitting=Splitting.coordinate(1, 1),
                        kind="closed_form_product", growths=(a, b, c, d),
                        name="product_example")


def coefficient_system(A: Callable, splitting: Splitting, name: str = "custom",
                       params: dict | None = None,
                       integrator: IntegratorConfig | None = None) -> LinearSystem:
    n = splitting.dim
    return LinearSystem(dim=n, splitting=splitting, kind="coefficient", coefficient=A,
                        name=name, params=params or {},
                        integrator=integrator or IntegratorConfig())


def diagonal_system(rates, dim_E: int, integrator: IntegratorConfig | None = None
                    ) -> LinearSystem:
    """Constant diagonal coefficient matrix; the first ``dim_E`` axes span E."""
    rates = [float(r) for r in rates]
    D = np.diag(rates)
    sp = Splitting.coordinate(dim_E, len(rates) - dim_E)
    return coefficient_system(lambda t: D, sp, name="diagonal_constant",
                              params={"rates": rates, "dim_E": dim_E},
                              integrator=integrator)


def as_coefficient(system: LinearSystem, integrator: IntegratorConfig | None = None
                   ) -> LinearSystem:
    """Same equation, but evolved by numerical integration of A(t)."""
    return coefficient_system(system.matrix, system.splitting,
                              name=f"{system.name}_integrated",
                              integrator=integrator)
