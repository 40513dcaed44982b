"""Perron-method solver for the Lipschitz invariant manifold.

The manifold is the graph of phi(s, xi) in F over (s, xi) in R_0^+ x E.  It
is the fixed point of

    (Phi phi)(s, xi) = - int_s^inf (T_{r,s}|F)^{-1} Q f(r, x(r), phi(r, x(r))) dr

where, for each (s, xi), x = x^phi solves the inner fixed-point problem

    x(t) = T_{t,s} xi + int_s^t T_{t,r} P f(r, x(r), phi(r, x(r))) dr,

itself the fixed point of the operator J.  Both iterations are run exactly as
written (Picard on J nested inside Picard on Phi), with trapezoid quadrature
on a uniform time grid and Banach a-posteriori stopping rules based on the
contraction constants 2 alpha (inner) and beta / (1 - 2 alpha)^2 (outer).

Discretization.  Time nodes are t_k = k h.  Every node is also a base time
s, and the trajectory from node i uses nodes i .. i + K, where K h is the
truncation horizon of the Phi integral.  Nodes with s <= s_valid carry full
horizons and form the reported manifold; later nodes are a buffer whose
integrals are truncated.  At node i the E-grid is L_i * z with z uniform on
[-1, 1]; the radii L_i form a tube that provably contains every inner
trajectory started inside it, so phi is never extrapolated.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .admissibility import (LipschitzEnvelope, QuadratureConfig, RadiusFunction,
                            assess, beta_tail, check_global_gate, check_local_gate,
                            compute_S)
from .errors import (ConvergenceError, ExtrapolationError, PreconditionError)
from .linear_system import LinearSystem, Splitting

# -- perturbations ------------------------------------------------------------


@dataclass(eq=False)
class Perturbation:
    """Nonlinear term f(t, v) with f(t, 0) = 0.

    ``func(t, V)`` must be vectorized: ``V`` has shape (..., dim) and ``t``
    broadcasts against ``V[..., 0]``.
    """

    func: Callable
    envelope: LipschitzEnvelope | None
    local_form: tuple | None = None      # (c, q)
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, t, v):
        return self.func(t, v)

    def to_dict(self) -> dict:
        d = {"name": self.name, "params": self.params}
        if self.envelope is not None:
            d["envelope"] = self.envelope.to_dict()
        if self.local_form is not None:
            d["local_form"] = list(self.local_form)
        return d


def zero_perturbation() -> Perturbation:
    return Perturbation(lambda t, V: np.zeros_like(V), LipschitzEnvelope("zero"),
                        name="zero")


def _swap_map(splitting: Splitting, g, scale):
    dE, dF = splitting.dim_E, splitting.dim_F
    m = min(dE, dF)

    def func(t, V):
        V = np.asarray(V, dtype=float)
        x = splitting.coords_E(V)
        y = splitting.coords_F(V)
        outE = np.zeros_like(x)
        outF = np.zeros_like(y)
        outE[..., :m] = g(y[..., :m])
        outF[..., :m] = g(x[..., :m])
        return scale(t)[..., None] * splitting.join(outE, outF)

    return func


def test_perturbation(envelope: LipschitzEnvelope, splitting: Splitting) -> Perturbation:
    """f(t, (u, v)) = env(t) (tanh v, tanh u); Lip(f_t) = env(t) exactly."""
    func = _swap_map(splitting, np.tanh, lambda t: envelope(np.asarray(t, float)))
    return Perturbation(func, envelope, name="tanh_swap")


test_perturbation.__test__ = False   # not a pytest test despite the name


def cq_perturbation(c: float, q: float, splitting: Splitting) -> Perturbation:
    """f(t, (u, v)) = c/(q+1) (v|v|^q, u|u|^q).

    Satisfies |f(u) - f(v)| <= c |u - v| (|u| + |v|)^q, hence is Lipschitz
    with constant 2^q c R^q on the ball of radius R.
    """
    if c <= 0 or q <= 0:
        raise ValueError("(c, q) perturbation needs c > 0 and q > 0")

    def g(u):
        return c / (q + 1) * u * np.abs(u) ** q

    func = _swap_map(splitting, g, lambda t: np.ones(np.shape(t)))
    return Perturbation(func, None, local_form=(c, q), name="cq_power",
                        params={"c": c, "q": q})


def ball_envelope(f: Perturbation, R: RadiusFunction) -> LipschitzEnvelope:
    """Envelope of Lip(f_r restricted to B(R(r)))."""
    if f.local_form is not None:
        c, q = f.local_form
        return LipschitzEnvelope("ball_power", c=c, q=q, radius=R)
    if f.envelope is None:
        raise PreconditionError("perturbation has neither envelope nor (c, q) form")
    return f.envelope


def truncate_perturbation(f: Perturbation, R: RadiusFunction,
                          splitting: Splitting) -> Perturbation:
    """f~(r, x) = f(r, x) on B(R(r)), f(r, x R(r)/|x|) outside.

    The envelope of f~ is twice the ball envelope of f.
    """

    def func(t, V):
        V = np.asarray(V, dtype=float)
        n = splitting.norm(V)
        Rt = R(np.broadcast_to(np.asarray(t, dtype=float), n.shape))
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(n > Rt, Rt / n, 1.0)
        return f.func(t, V * scale[..., None])

    env = ball_envelope(f, R).scaled(2.0)
    return Perturbation(func, env, local_form=f.local_form, name=f"{f.name}_truncated",
                        params={**f.params, "radius": R.to_dict()})


# -- configuration ------------------------------------------------------------


@dataclass
class SolverConfig:
    h: float = 0.05
    s_valid: float = 10.0
    xi_nodes: int = 33
    xi_radius: float = 1.0
    inner_tol: float = 1e-8
    outer_tol: float = 1e-8
    inner_max: int = 200
    outer_max: int = 100
    tail_tol: float = 1e-9
    t_tail_max: float = 40.0
    tube_dt: float = 0.005
    lip_tol: float = 1e-6
    block: int = 32
    ratio_floor: float = 1e-13

    def __post_init__(self):
        if self.xi_nodes < 3 or self.xi_nodes % 2 == 0:
            raise ValueError("xi_nodes must be odd and >= 3 so that 0 is a node")
        if self.h <= 0 or self.s_valid < 0:
            raise ValueError("need h > 0 and s_valid >= 0")


# -- grid ---------------------------------------------------------------------


class SolverGrid:
    """Time nodes, tube radii and one-step transitions shared by all solves."""

    def __init__(self, system: LinearSystem, bounds, envelope: LipschitzEnvelope,
                 cfg: SolverConfig, t_tail: float, base_log_radius: Callable):
        h = cfg.h
        sp = system.splitting
        self.system, self.bounds, self.cfg = system, bounds, cfg
        self.dE, self.dF = sp.dim_E, sp.dim_F
        if self.dE > 2:
            raise ValueError("E-grids are supported for dim E <= 2 only")
        self.h = h
        self.n_valid = int(round(cfg.s_valid / h))
        self.K = max(2, int(math.ceil(t_tail / h)))
        self.N = self.n_valid + self.K
        self.times = h * np.arange(self.N + 1)
        ME, NF = system.step_blocks(self.times)
        self.scalar = self.dE == 1 and self.dF == 1
        pad = self.K + 1
        self.ME = np.concatenate([ME, np.broadcast_to(np.eye(self.dE), (pad, self.dE,
                                                                         self.dE))])
        self.NF = np.concatenate([NF, np.broadcast_to(np.eye(self.dF), (pad, self.dF,
                                                                         self.dF))])
        # log T_{t_m, 0} restricted to E, and log of the F-transition (1D parts)
        if self.dE == 1:
            self.LE = np.concatenate([[0.0], np.cumsum(np.log(self.ME[:, 0, 0]))])
        if self.dF == 1:
            self.LF = np.concatenate([[0.0], np.cumsum(-np.log(self.NF[:, 0, 0]))])
        self.z = np.linspace(-1.0, 1.0, cfg.xi_nodes)
        if self.dE == 1:
            self.Z = self.z[:, None]
        else:
            a, b = np.meshgrid(self.z, self.z, indexing="ij")
            self.Z = np.column_stack([a.ravel(), b.ravel()])
        self.n_xi = len(self.Z)
        self.zero_node = int(np.argmin(np.linalg.norm(self.Z, axis=1)))
        self.logL = self._tube(system, envelope, base_log_radius)
        self.L = np.exp(self.logL)

    def _tube(self, system, envelope, base_log_radius):
        """log L(t) with L(t) = |T_{t,0}|E| e^{eta t} max_{u<=t} R0(u) |T_{u,0}|E^{-1}| e^{-eta u}.

        A Gronwall argument (|f(x, phi(x))| <= 2 Lip |x|) shows that inner
        trajectories started with |xi| <= L(s) satisfy |x(t)| <= L(t).
        """
        cfg = self.cfg
        t_end = self.times[-1]
        if system.kind == "closed_form_product":
            lattice = np.union1d(self.times, np.arange(0.0, t_end, cfg.tube_dt))
            fwd, inv = system.log_norm_E_from0(lattice)
        else:
            lattice = self.times
            fwd, inv = _log_norms_from_steps(self.ME[:self.N])
        kappa = float(np.max(np.exp(fwd + inv)))
        env_max = float(np.max(envelope(np.linspace(0.0, t_end, 4001)))) \
            if not envelope.is_zero else 0.0
        eta = 2.2 * env_max * kappa
        run = np.maximum.accumulate(base_log_radius(lattice) + inv - eta * lattice)
        logL_lat = fwd + eta * lattice + run
        pos = np.searchsorted(lattice, self.times)
        pos = np.minimum(pos, len(lattice) - 1)
        return logL_lat[pos]

    def xi_nodes(self, i):
        """E-coordinates of the xi-nodes at s-node(s) i: (..., n_xi, dE)."""
        return self.L[np.asarray(i)][..., None, None] * self.Z

    def node_index(self, s: float) -> int:
        i = int(round(s / self.h))
        if abs(i * self.h - s) > 1e-9 * max(1.0, s) or not 0 <= i <= self.N:
            raise ExtrapolationError(f"s={s} is not a solver grid node")
        return i


def _log_norms_from_steps(ME):
    """Cumulative log of one-step E-norms, and its negative.

    ``prod_{k=j}^{m-1} |ME_k|`` bounds |T_{t_m,t_j}|E| by submultiplicativity,
    so the pair plays the role of (log|T_{t,0}|E|, log|T_{t,0}|E^{-1}|) with
    condition factor 1.  For dim E = 1 it is exact.
    """
    logn = np.log(np.linalg.norm(ME, ord=2, axis=(1, 2)))
    fwd = np.concatenate([[0.0], np.cumsum(logn)])
    return fwd, -fwd


# -- interpolation of phi -----------------------------------------------------

_Z_SLACK = 1e-9


def _interp(values, L, z, dE, node_idx, X):
    """Multilinear interpolation of phi at E-points X over per-node grids.

    values: (n_nodes, n_xi, dF); node_idx broadcastable to X[..., 0];
    X: (..., dE).  Returns (..., dF).  Exactly zero where X == 0.
    """
    nz = len(z)
    dz = 2.0 / (nz - 1)
    Z = X / L[node_idx][..., None]
    if np.any(np.abs(Z) > 1 + _Z_SLACK):
        worst = float(np.max(np.abs(Z)))
        raise ExtrapolationError(f"phi queried outside its xi-grid (|z| = {worst:.6g})")
    Z = np.clip(Z, -1.0, 1.0)
    P = (Z + 1.0) / dz
    J0 = np.clip(np.floor(P).astype(np.int64), 0, nz - 2)
    Fr = P - J0
    node_idx = np.broadcast_to(node_idx, X.shape[:-1])
    flat = values.reshape(-1, values.shape[-1])
    base = node_idx * values.shape[1]
    if dE == 1:
        j = J0[..., 0]
        fr = Fr[..., 0][..., None]
        out = flat[base + j] * (1 - fr) + flat[base + j + 1] * fr
    else:
        jx, jy = J0[..., 0], J0[..., 1]
        fx, fy = Fr[..., 0][..., None], Fr[..., 1][..., None]
        k00 = base + jx * nz + jy
        out = (flat[k00] * (1 - fx) * (1 - fy) + flat[k00 + nz] * fx * (1 - fy)
               + flat[k00 + 1] * (1 - fx) * fy + flat[k00 + nz + 1] * fx * fy)
    zero = np.all(X == 0, axis=-1)
    if np.any(zero):
        out = np.where(zero[..., None], 0.0, out)
    return out


# -- data types ---------------------------------------------------------------


@dataclass
class InnerTrajectory:
    """x(t_k, xi) for k = 0..K on the solver grid starting at node s."""

    s: float
    xi: np.ndarray
    times: np.ndarray
    x: np.ndarray                      # (K+1, dE)
    weighted_norm: float
    error_bound: float = 0.0
    iterations: int = 0
    ratios: list = field(default_factory=list)


@dataclass(eq=False)
class ManifoldGraph:
    """Discrete phi on (s-node, xi-node) pairs, with multilinear interpolation.

    ``values[i, j]`` holds the F-coordinates of phi(times[i], L[i] * Z[j]).
    Only nodes ``0..n_valid`` belong to the reported manifold.
    """

    times: np.ndarray
    L: np.ndarray
    z: np.ndarray
    dim_E: int
    dim_F: int
    values: np.ndarray
    n_valid: int
    alpha: float
    beta: float
    outer_iterations: int = 0
    error_bound: float = 0.0
    error_components: dict = field(default_factory=dict)
    outer_ratios: list = field(default_factory=list)
    inner_ratios: list = field(default_factory=list)
    inner_error_bound: float = 0.0
    config: dict = field(default_factory=dict)
    S: np.ndarray | None = None
    entry_radius: np.ndarray | None = None
    grid: SolverGrid | None = None

    @property
    def Z(self):
        if self.dim_E == 1:
            return self.z[:, None]
        a, b = np.meshgrid(self.z, self.z, indexing="ij")
        return np.column_stack([a.ravel(), b.ravel()])

    @property
    def s_nodes(self):
        return self.times[: self.n_valid + 1]

    def node_xi(self, i):
        return self.L[i] * self.Z

    def lipschitz_constants(self) -> np.ndarray:
        """Grid Lipschitz constant in xi at every valid s-node."""
        out = np.empty(self.n_valid + 1)
        for i in range(self.n_valid + 1):
            out[i] = _grid_lipschitz(self.node_xi(i), self.values[i], self.dim_E,
                                     len(self.z))
        return out

    def to_dict(self) -> dict:
        nv = self.n_valid + 1
        d = {
            "dim_E": self.dim_E, "dim_F": self.dim_F,
            "times": self.times[:nv].tolist(), "L": self.L[:nv].tolist(),
            "z": self.z.tolist(), "values": self.values[:nv].tolist(),
            "alpha": self.alpha, "beta": self.beta,
            "outer_iterations": self.outer_iterations,
            "error_bound": self.error_bound,
            "error_components": self.error_components,
            "inner_error_bound": self.inner_error_bound,
            "outer_ratios": self.outer_ratios,
            "config": self.config,
        }
        if self.S is not None:
            d["S"] = [float(x) for x in self.S]
            d["entry_radius"] = [float(x) for x in self.entry_radius]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ManifoldGraph":
        times = np.asarray(d["times"], dtype=float)
        g = cls(times=times, L=np.asarray(d["L"], float), z=np.asarray(d["z"], float),
                dim_E=d["dim_E"], dim_F=d["dim_F"],
                values=np.asarray(d["values"], float), n_valid=len(times) - 1,
                alpha=d["alpha"], beta=d["beta"],
                outer_iterations=d.get("outer_iterations", 0),
                error_bound=d.get("error_bound", 0.0),
                error_components=d.get("error_components", {}),
                inner_error_bound=d.get("inner_error_bound", 0.0),
                outer_ratios=d.get("outer_ratios", []), config=d.get("config", {}))
        if "S" in d:
            g.S = np.asarray(d["S"], float)
            g.entry_radius = np.asarray(d["entry_radius"], float)
        return g


def _grid_lipschitz(XI, vals, dE, nz):
    """Max difference quotient between neighbouring xi-nodes (E and F 2-norms)."""
    if dE == 1:
        num = np.linalg.norm(np.diff(vals, axis=0), axis=-1)
        den = np.linalg.norm(np.diff(XI, axis=0), axis=-1)
        return float(np.max(num / den))
    V = vals.reshape(nz, nz, -1)
    X = XI.reshape(nz, nz, -1)
    best = 0.0
    for ax in (0, 1):
        num = np.linalg.norm(np.diff(V, axis=ax), axis=-1)
        den = np.linalg.norm(np.diff(X, axis=ax), axis=-1)
        best = max(best, float(np.max(num / den)))
    return best


# -- the solver ---------------------------------------------------------------


class PerronSolver:
    """Holds the grid and constants for one (system, bounds, f) problem."""

    def __init__(self, system: LinearSystem, bounds, f: Perturbation, alpha: float,
                 beta: float, cfg: SolverConfig, t_tail: float, tail_bound: float,
                 base_log_radius: Callable | None = None):
        self.system, self.bounds, self.f, self.cfg = system, bounds, f, cfg
        self.sp = system.splitting
        self.alpha, self.beta = alpha, beta
        self.q = beta / (1 - 2 * alpha) ** 2
        self.t_tail, self.tail_bound = t_tail, tail_bound
        if base_log_radius is None:
            lr = math.log(cfg.xi_radius)
            base_log_radius = lambda t: np.full(np.shape(t), lr)  # noqa: E731
        env = f.envelope if f.envelope is not None else LipschitzEnvelope("zero")
        self.grid = SolverGrid(system, bounds, env, cfg, t_tail, base_log_radius)

    # -- block primitives ---------------------------------------------------
    def _block_index(self, I):
        g = self.grid
        idx = I[:, None] + np.arange(g.K + 1)[None, :]
        valid = idx <= g.N
        return idx, np.minimum(idx, g.N), valid

    def _forcing(self, values, idxc, valid, X):
        """f(t, x, phi(t, x)) along trajectories X: (B, n, K+1, dE)."""
        g = self.grid
        eta = _interp(values, g.L, g.z, g.dE, idxc[:, None, :], X)
        V = self.sp.join(X, eta)
        t = g.times[idxc][:, None, :]
        F = self.f(t, V)
        return F * valid[:, None, :, None]

    def _evolve_E(self, I, idx, Xi, gE, stride=1):
        """Y(k) = T_{t_k,s} xi + trapezoid int_s^{t_k} T_{t_k,r} gE(r) dr.

        With ``stride=2`` the same sum is taken over even nodes only (step
        2h); entries at odd k are then left as NaN.
        """
        g = self.grid
        h = g.h * stride
        if g.dE == 1:
            rel = g.LE[idx] - g.LE[I][:, None]                      # (B, K+1)
            w = np.exp(-rel)[:, None, :, None] * gE
            ks = np.arange(0, g.K + 1, stride)
            ws = w[:, :, ks]
            cum = np.concatenate([np.zeros_like(ws[:, :, :1]),
                                  np.cumsum(0.5 * h * (ws[:, :, 1:] + ws[:, :, :-1]),
                                            axis=2)], axis=2)
            Ys = np.exp(rel[:, ks])[:, None, :, None] * (Xi[:, :, None, :] + cum)
            if stride == 1:
                return Ys
            Y = np.full(gE.shape, np.nan)
            Y[:, :, ks] = Ys
            return Y
        Y = np.full(gE.shape, np.nan)
        Y[:, :, 0] = Xi
        for k in range(stride, g.K + 1, stride):
            M = g.ME[idx[:, k - stride]]
            for j in range(1, stride):
                M = g.ME[idx[:, k - stride + j]] @ M
            prev = Y[:, :, k - stride] + 0.5 * h * gE[:, :, k - stride]
            Y[:, :, k] = np.einsum("bij,bnj->bni", M, prev) + 0.5 * h * gE[:, :, k]
        return Y

    def _weighted(self, I, idxc, valid, D, Xi):
        """sup_t |D(t)| / (a(t,s) |xi|) per (node, xi); zero rows for xi = 0."""
        g = self.grid
        la = self.bounds.log_a(g.times[idxc], g.times[I][:, None])
        nrm = np.linalg.norm(D, axis=-1) * np.exp(-la)[:, None, :]
        nrm = np.where(valid[:, None, :] & np.isfinite(nrm), nrm, 0.0)
        xin = np.linalg.norm(Xi, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.max(nrm, axis=2) / xin
        return np.where(xin > 0, out, 0.0)

    def inner_block(self, values, I, Xi, X0=None):
        """Picard iteration of J for base nodes I and E-points Xi (B, n, dE).

        Returns (X, F, stats) with X the last iterate and F the forcing
        evaluated on it.
        """
        g, cfg = self.grid, self.cfg
        idx, idxc, valid = self._block_index(I)
        if X0 is None:
            X0 = self._evolve_E(I, idx, Xi, np.zeros(Xi.shape[:2] + (g.K + 1, g.dE)))
        X = X0
        c = 2 * self.alpha
        ratios, d_prev, d = [], None, 0.0
        for it in range(1, cfg.inner_max + 1):
            F = self._forcing(values, idxc, valid, X)
            Xn = self._evolve_E(I, idx, Xi, self.sp.coords_E(F))
            d = float(np.max(self._weighted(I, idxc, valid, Xn - X, Xi)))
            if d_prev is not None and d_prev > cfg.ratio_floor:
                ratios.append(d / d_prev)
            X, d_prev = Xn, d
            if d == 0.0 or d * c / (1 - c) < cfg.inner_tol:
                break
        else:
            raise ConvergenceError(
                f"inner iteration did not converge in {cfg.inner_max} steps",
                ratio=ratios[-1] if ratios else None)
        F = self._forcing(values, idxc, valid, X)
        stats = {"iterations": it, "last_difference": d,
                 "error_bound": d * c / (1 - c), "ratios": ratios}
        return X, F, stats

    def quad_error_E(self, I, Xi, F):
        """Richardson estimate (I_h - I_2h)/3 of the trapezoid error in J."""
        g = self.grid
        idx, idxc, valid = self._block_index(I)
        gE = self.sp.coords_E(F)
        Y1 = self._evolve_E(I, idx, Xi, gE)
        Y2 = self._evolve_E(I, idx, Xi, gE, stride=2)
        D = np.where(np.isnan(Y2), 0.0, (Y1 - Y2) / 3.0)
        return float(np.max(self._weighted(I, idxc, valid, D, Xi)))

    def phi_integral(self, I, F):
        """(Phi phi) at nodes I from forcing F, with a Richardson estimate."""
        g = self.grid
        h = g.h
        idx, idxc, valid = self._block_index(I)
        gF = self.sp.coords_F(F)                                  # (B, n, K+1, dF)
        keff = np.minimum(g.K, g.N - I)                          # last valid k
        k = np.arange(g.K + 1)
        if g.dF == 1:
            rel = g.LF[idxc] - g.LF[I][:, None]
            integrand = np.exp(-rel)[:, None, :, None] * gF
        else:
            integrand = np.empty_like(gF)
            W = np.broadcast_to(np.eye(g.dF), (len(I), g.dF, g.dF)).copy()
            integrand[:, :, 0] = gF[:, :, 0]
            for kk in range(1, g.K + 1):
                W = W @ g.NF[idx[:, kk - 1]]
                integrand[:, :, kk] = np.einsum("bij,bnj->bni", W, gF[:, :, kk])
        integrand = integrand * valid[:, None, :, None]

        def trap(step, kmax):
            on = (k % step == 0) & (k[None, :] <= kmax[:, None])
            w = np.where(on, step * h, 0.0)
            w[:, 0] = 0.5 * step * h
            w[np.arange(len(I)), kmax] = 0.5 * step * h
            return np.einsum("bk,bnkd->bnd", w, integrand)

        full = trap(1, keff)
        even = keff - keff % 2
        est = np.abs(trap(1, even) - trap(2, even)) / 3.0
        return 0.0 - full, est   # 0 - x keeps +0.0 where x == 0

    # -- public steps -----------------------------------------------------
    def apply_Phi(self, values):
        """One outer step over all nodes; returns (new values, stats)."""
        g, cfg = self.grid, self.cfg
        new = np.zeros_like(values)
        ratios, inner_err, quad_err, jquad_err, iters = [], 0.0, 0.0, 0.0, 0
        xin = np.linalg.norm(g.Z, axis=1)
        nz = xin > 0
        for start in range(0, g.N + 1, cfg.block):
            I = np.arange(start, min(start + cfg.block, g.N + 1))
            Xi = g.xi_nodes(I)
            X, F, st = self.inner_block(values, I, Xi)
            out, est = self.phi_integral(I, F)
            new[I] = out
            vmask = I <= g.n_valid
            if np.any(vmask):
                ratios.extend(st["ratios"])
                iters = max(iters, st["iterations"])
                inner_err = max(inner_err, st["error_bound"])
                Iv = I[vmask]
                scale = (g.L[Iv][:, None] * xin[None, :])[:, nz]
                quad_err = max(quad_err, float(np.max(
                    np.linalg.norm(est[vmask][:, nz], axis=-1) / scale)))
        new[:, g.zero_node] = 0.0
        return new, {"inner_ratios": ratios, "inner_error": inner_err,
                     "quad_error": quad_err, "inner_iterations": iters}

    def jquad_error(self, values):
        """Worst J-trapezoid error estimate over valid nodes (weighted norm)."""
        g, cfg = self.grid, self.cfg
        worst = 0.0
        for start in range(0, g.n_valid + 1, cfg.block):
            I = np.arange(start, min(start + cfg.block, g.n_valid + 1))
            Xi = g.xi_nodes(I)
            X, F, _ = self.inner_block(values, I, Xi)
            worst = max(worst, self.quad_error_E(I, Xi, F))
        return worst

    def metric(self, A, B):
        """d(phi, psi) = sup |phi - psi| / |xi| over valid nodes, xi != 0."""
        g = self.grid
        nv = g.n_valid + 1
        xin = np.linalg.norm(g.Z, axis=1)
        nz = xin > 0
        diff = np.linalg.norm(A[:nv] - B[:nv], axis=-1)[:, nz]
        return float(np.max(diff / (g.L[:nv, None] * xin[None, nz])))

    def interp_error(self, values):
        """Estimated xi-interpolation error of the graph, metric units."""
        g = self.grid
        nv = g.n_valid + 1
        nzp = len(g.z)
        V = values[:nv].reshape((nv,) + (nzp,) * g.dE + (g.dF,))
        worst = 0.0
        for ax in range(1, g.dE + 1):
            lo = np.take(V, range(0, nzp - 2), axis=ax)
            mid = np.take(V, range(1, nzp - 1), axis=ax)
            hi = np.take(V, range(2, nzp), axis=ax)
            dev = np.linalg.norm(mid - 0.5 * (lo + hi), axis=-1) / 4.0
            zmid = np.abs(g.z[1:-1])
            shape = [1] * dev.ndim
            shape[ax] = len(zmid)
            den = g.L[:nv].reshape((nv,) + (1,) * (dev.ndim - 1)) * np.maximum(
                zmid.reshape(shape), g.z[1] - g.z[0])
            worst = max(worst, float(np.max(dev / den)))
        return worst

    def node_trajectory(self, values, i, xi):
        """Inner fixed point for one base node and one E-point."""
        I = np.array([i])
        Xi = np.asarray(xi, dtype=float).reshape(1, 1, -1)
        X, F, st = self.inner_block(values, I, Xi)
        return X[0, 0], F, st


def find_tail_horizon(bounds, envelope, alpha, s_max, cfg: SolverConfig,
                      qcfg: QuadratureConfig):
    """Smallest T (up to cfg.t_tail_max) whose truncation bound is < tail_tol.

    The bound, per unit |xi|, is 2/(1-2 alpha) sup_s int_{s+T}^inf b a Lip.
    Returns (T, bound).
    """
    if envelope is None or envelope.is_zero:
        return 2 * cfg.h, 0.0
    fac = 2.0 / (1.0 - 2.0 * alpha)

    def bound(T):
        return fac * beta_tail(bounds, envelope, T, s_max, qcfg)

    T = 1.0
    while bound(T) >= cfg.tail_tol and T < cfg.t_tail_max:
        T = min(2 * T, cfg.t_tail_max)
    if bound(T) >= cfg.tail_tol:
        return T, bound(T)
    lo, hi = T / 2, T
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        if bound(mid) < cfg.tail_tol:
            hi = mid
        else:
            lo = mid
        if hi - lo < cfg.h:
            break
    return hi, bound(hi)


# -- operations ---------------------------------------------------------------


def _check_gate(alpha, beta):
    ok, margin = check_global_gate(alpha, beta)
    if not ok or 2 * alpha >= 1:
        raise PreconditionError("global gate 2 alpha + max{2 beta, sqrt beta} < 1 fails",
                                margins={"global": margin, "alpha": alpha, "beta": beta})


def build_solver(system, bounds, f, cfg: SolverConfig | None = None,
                 qcfg: QuadratureConfig | None = None, alpha=None, beta=None,
                 base_log_radius=None) -> PerronSolver:
    """Compute (or accept) alpha, beta and the tail horizon; check the gate."""
    cfg = cfg or SolverConfig()
    qcfg = qcfg or QuadratureConfig(cross_check=False)
    env = f.envelope
    if alpha is None or beta is None:
        if env is None:
            raise PreconditionError("global solve needs a Lipschitz envelope")
        rep = assess(bounds, env, qcfg)
        if rep.decay_ok != "pass":
            raise PreconditionError("decay condition lim a(t,s) b(t,s) = 0 not verified",
                                    margins={"decay": rep.decay_ok})
        alpha, beta = rep.alpha, rep.beta
    _check_gate(alpha, beta)
    T, tail = find_tail_horizon(bounds, env, alpha, cfg.s_valid, cfg, qcfg)
    return PerronSolver(system, bounds, f, alpha, beta, cfg, T, tail, base_log_radius)


def solve_manifold(system: LinearSystem, bounds, f: Perturbation,
                   cfg: SolverConfig | None = None, qcfg: QuadratureConfig | None = None,
                   alpha: float | None = None, beta: float | None = None,
                   base_log_radius=None, solver: PerronSolver | None = None
                   ) -> ManifoldGraph:
    """Outer Picard iteration phi_{m+1} = Phi phi_m from phi_0 = 0.

    Raises:
        PreconditionError: the global gate or decay condition fails.
        ConvergenceError: an iteration cap is reached.
    """
    solver = solver or build_solver(system, bounds, f, cfg, qcfg, alpha, beta,
                                    base_log_radius)
    cfg, g = solver.cfg, solver.grid
    q = solver.q
    values = np.zeros((g.N + 1, g.n_xi, g.dF))
    outer_ratios, inner_ratios = [], []
    d_prev, d = None, 0.0
    inner_err = quad_err = 0.0
    for m in range(1, cfg.outer_max + 1):
        new, st = solver.apply_Phi(values)
        d = solver.metric(new, values)
        inner_ratios.extend(st["inner_ratios"])
        inner_err, quad_err = st["inner_error"], st["quad_error"]
        if d_prev is not None and d_prev > cfg.ratio_floor:
            outer_ratios.append(d / d_prev)
        values, d_prev = new, d
        if d == 0.0 or q / (1 - q) * d < cfg.outer_tol:
            break
    else:
        raise ConvergenceError(f"outer iteration did not converge in {cfg.outer_max} "
                               "steps", ratio=outer_ratios[-1] if outer_ratios else None)
    jq = solver.jquad_error(values) if d > 0 else 0.0
    interp = solver.interp_error(values)
    tail_m = solver.tail_bound
    comps = {
        "outer": q / (1 - q) * d,
        "inner": 2 * solver.beta * (inner_err + jq) / (1 - q),
        "quadrature": quad_err / (1 - q),
        "interpolation": interp,
        "tail": tail_m / (1 - q),
    }
    return ManifoldGraph(
        times=g.times, L=g.L, z=g.z, dim_E=g.dE, dim_F=g.dF, values=values,
        n_valid=g.n_valid, alpha=solver.alpha, beta=solver.beta, outer_iterations=m,
        error_bound=float(sum(comps.values())), error_components=comps,
        outer_ratios=outer_ratios, inner_ratios=inner_ratios,
        inner_error_bound=inner_err + jq,
        config={"solver": asdict(cfg), "t_tail": solver.t_tail, "q": q,
                "perturbation": f.to_dict()},
        grid=g)


def solve_local(system: LinearSystem, bounds, f: Perturbation, R: RadiusFunction,
                cfg: SolverConfig | None = None, qcfg: QuadratureConfig | None = None,
                alpha: float | None = None, beta: float | None = None):
    """Local theorem: solve for the truncated f~ and attach S(s), entry radii.

    alpha and beta refer to the ball envelope of f (not of f~); the gate is
    4 alpha + max{4 beta, sqrt(2 beta)} < 1.
    """
    cfg = cfg or SolverConfig()
    qcfg = qcfg or QuadratureConfig(cross_check=False)
    if alpha is None or beta is None:
        rep = assess(bounds, ball_envelope(f, R), qcfg)
        if rep.decay_ok != "pass":
            raise PreconditionError("decay condition not verified",
                                    margins={"decay": rep.decay_ok})
        alpha, beta = rep.alpha, rep.beta
    ok, margin = check_local_gate(alpha, beta)
    if not ok:
        raise PreconditionError("local gate 4 alpha + max{4 beta, sqrt(2 beta)} < 1 fails",
                                margins={"local": margin, "alpha": alpha, "beta": beta})
    s_nodes = cfg.h * np.arange(int(round(cfg.s_valid / cfg.h)) + 1)
    S_rec = [compute_S(bounds, R, alpha, float(s), qcfg) for s in s_nodes]
    S = np.array([r["S"] for r in S_rec])
    if not np.all(np.isfinite(S)):
        raise PreconditionError("S(s) is infinite: sup_t a(t,s) R(s)/R(t) unbounded",
                                margins={"S": "inf"})
    ft = truncate_perturbation(f, R, system.splitting)
    graph = solve_manifold(system, bounds, ft, cfg, qcfg, alpha=2 * alpha, beta=2 * beta,
                           base_log_radius=R.log)
    graph.S = S
    graph.entry_radius = R(s_nodes) / (2 * S)
    graph.config["local"] = {"alpha_ball": alpha, "beta_ball": beta,
                             "radius": R.to_dict(), "local_margin": margin}
    return graph, S


def eval_manifold(graph: ManifoldGraph, s: float, xi) -> np.ndarray:
    """phi(s, xi) in F-coordinates; linear in s, multilinear in xi.

    Raises:
        ExtrapolationError: (s, xi) outside the valid grid hull.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    times = graph.times[: graph.n_valid + 1]
    if not times[0] - 1e-12 <= s <= times[-1] + 1e-12:
        raise ExtrapolationError(f"s={s} outside [{times[0]}, {times[-1]}]")
    if np.all(xi == 0):
        return np.zeros(graph.dim_F)
    h = times[1] - times[0] if len(times) > 1 else 1.0
    p = (s - times[0]) / h
    i0 = int(min(max(math.floor(p + 1e-9), 0), max(len(times) - 2, 0)))
    fr = min(max(p - i0, 0.0), 1.0)
    if abs(fr) < 1e-9 or len(times) == 1:
        nodes, wts = [i0], [1.0]
    elif abs(fr - 1) < 1e-9:
        nodes, wts = [i0 + 1], [1.0]
    else:
        nodes, wts = [i0, i0 + 1], [1 - fr, fr]
    hull = min(graph.L[n] for n in nodes)
    if np.max(np.abs(xi)) > hull * (1 + 1e-12):
        raise ExtrapolationError(f"xi={xi} outside the grid hull {hull:.6g} at s={s}")
    out = np.zeros(graph.dim_F)
    for n, w in zip(nodes, wts):
        out += w * _interp(graph.values, graph.L, graph.z, graph.dim_E, np.array(n),
                           xi[None, :])[0]
    return out


def apply_J(graph: ManifoldGraph, solver: PerronSolver, s: float,
            x: InnerTrajectory) -> InnerTrajectory:
    """One application of J to a trajectory based at the node s."""
    g = solver.grid
    i = g.node_index(s)
    I = np.array([i])
    idx, idxc, valid = solver._block_index(I)
    Xi = x.xi.reshape(1, 1, -1)
    X = x.x.reshape(1, 1, g.K + 1, -1)
    F = solver._forcing(_full_values(graph, g), idxc, valid, X)
    Y = solver._evolve_E(I, idx, Xi, solver.sp.coords_E(F))
    wn = float(solver._weighted(I, idxc, valid, Y, Xi)[0, 0])
    return InnerTrajectory(s=s, xi=x.xi, times=g.times[idxc[0]], x=Y[0, 0],
                           weighted_norm=wn)


def seed_trajectory(solver: PerronSolver, s: float, xi) -> InnerTrajectory:
    """x_0(t) = T_{t,s} P xi on the solver grid."""
    g = solver.grid
    i = g.node_index(s)
    I = np.array([i])
    idx, idxc, valid = solver._block_index(I)
    Xi = np.asarray(xi, dtype=float).reshape(1, 1, -1)
    Y = solver._evolve_E(I, idx, Xi, np.zeros((1, 1, g.K + 1, g.dE)))
    wn = float(solver._weighted(I, idxc, valid, Y, Xi)[0, 0])
    return InnerTrajectory(s=s, xi=Xi[0, 0], times=g.times[idxc[0]], x=Y[0, 0],
                           weighted_norm=wn)


def solve_inner(graph: ManifoldGraph, solver: PerronSolver, s: float, xi
                ) -> InnerTrajectory:
    """Inner fixed point x^phi(., xi) from the base node s."""
    g = solver.grid
    i = g.node_index(s)
    I = np.array([i])
    idx, idxc, valid = solver._block_index(I)
    Xi = np.asarray(xi, dtype=float).reshape(1, 1, -1)
    X, F, st = solver.inner_block(_full_values(graph, g), I, Xi)
    wn = float(solver._weighted(I, idxc, valid, X, Xi)[0, 0])
    return InnerTrajectory(s=s, xi=Xi[0, 0], times=g.times[idxc[0]], x=X[0, 0],
                           weighted_norm=wn, error_bound=st["error_bound"],
                           iterations=st["iterations"], ratios=st["ratios"])


def _full_values(graph, g):
    if graph.values.shape[0] != g.N + 1:
        raise ValueError("graph does not carry buffer nodes of this solver grid")
    return graph.values


def zero_graph(solver: PerronSolver) -> ManifoldGraph:
    g = solver.grid
    return ManifoldGraph(times=g.times, L=g.L, z=g.z, dim_E=g.dE, dim_F=g.dF,
                         values=np.zeros((g.N + 1, g.n_xi, g.dF)), n_valid=g.n_valid,
                         alpha=solver.alpha, beta=solver.beta, grid=g)


def apply_Phi(graph: ManifoldGraph, solver: PerronSolver) -> ManifoldGraph:
    """One outer step; the result shares the grid of ``graph``."""
    new, st = solver.apply_Phi(_full_values(graph, solver.grid))
    out = zero_graph(solver)
    out.values = new
    out.inner_ratios = st["inner_ratios"]
    out.inner_error_bound = st["inner_error"]
    return out


# -- serialization ------------------------------------------------------------


def write_manifold_csv(graph: ManifoldGraph, path) -> None:
    dE, dF = graph.dim_E, graph.dim_F
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s"] + [f"xi_{k + 1}" for k in range(dE)]
                   + [f"phi_{k + 1}" for k in range(dF)])
        for i in range(graph.n_valid + 1):
            XI = graph.node_xi(i)
            for j in range(len(XI)):
                w.writerow([_fmt(graph.times[i])] + [_fmt(v) for v in XI[j]]
                           + [_fmt(v) for v in graph.values[i, j]])


def _fmt(x) -> str:
    return "%.17g" % float(x)


def write_manifold_json(graph: ManifoldGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(graph.to_dict()), fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_manifold_json(path) -> ManifoldGraph:
    with open(path, encoding="utf-8") as fh:
        return ManifoldGraph.from_dict(json.load(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj
