"""Vectorized quadrature for the admissibility integrals.

Integrals ``int_lo^hi exp(logg(r)) dr`` are evaluated for many (lo, hi)
pairs at once.  The substitution ``r = lo + h0 (e^u - 1)`` grades the nodes
geometrically away from ``lo`` (where the integrands peak), and composite
Gauss-Legendre panels are applied uniformly in ``u``.  Each pair is refined by
panel doubling until two successive estimates agree.

Improper integrals are handled by :func:`horizon_limit`, which doubles a
horizon and extrapolates the increments geometrically (exact for power-law
tails, conservative for exponential ones).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import DivergenceError, TruncationError

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss(order: int):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def _composite(logg, lo, hi, n_panels, order, h0):
    """One composite Gauss-Legendre estimate per pair (no refinement)."""
    x, w = _gauss(order)
    U = np.log1p((hi - lo) / h0)                       # (m,)
    k = np.arange(n_panels)
    # panel p covers [U p / n, U (p+1) / n]
    u = (U[:, None, None] / n_panels) * (k[None, :, None] + 0.5 * (x[None, None, :] + 1))
    u = u.reshape(len(lo), -1)
    r = lo[:, None] + h0 * np.expm1(u)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        lg = logg(r) + np.log(h0) + u
        vals = np.exp(lg)
    weights = np.tile(w, n_panels)[None, :] * (U[:, None] / n_panels) * 0.5
    with np.errstate(invalid="ignore"):
        return np.sum(vals * weights, axis=1)


def integrate_pairs(logg, lo, hi, tol=1e-10, order=10, n_panels=16, max_panels=4096,
                    h0=1e-2, threads=1):
    """Integrate ``exp(logg(r, rows))`` over ``[lo_i, hi_i]`` for every pair.

    Args:
        logg: vectorized log-integrand.  ``r`` has shape (k, N) and ``rows``
            (shape (k,)) gives the index of the pair each row belongs to, so
            closures can look up per-pair data such as (t, s).
        lo, hi: arrays of shape (m,), ``hi >= lo``.
        tol: per-pair target, absolute below 1 and relative above.
        threads: split the pairs across this many worker threads.

    Returns:
        (values, error_estimates), both of shape (m,).  Non-finite values are
        returned as ``inf`` with error ``inf``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    m = len(lo)
    idx_all = np.arange(m)
    if threads > 1 and m >= 2 * threads:
        chunks = np.array_split(idx_all, threads)

        def run(idx):
            return _integrate_rows(logg, idx, lo, hi, tol, order, n_panels,
                                   max_panels, h0)

        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, chunks))
        return (np.concatenate([p[0] for p in parts]),
                np.concatenate([p[1] for p in parts]))
    return _integrate_rows(logg, idx_all, lo, hi, tol, order, n_panels, max_panels, h0)


def _integrate_rows(logg, rows, lo, hi, tol, order, n_panels, max_panels, h0):
    m = len(rows)
    vals = np.zeros(m)
    errs = np.full(m, np.inf)
    active = np.arange(m)
    n = n_panels
    coarse = _composite(lambda r: logg(r, rows), lo[rows], hi[rows], n, order, h0)
    while True:
        sel = rows[active]
        fine = _composite(lambda r: logg(r, sel), lo[sel], hi[sel], 2 * n, order, h0)
        with np.errstate(invalid="ignore"):
            err = np.abs(fine - coarse)
        vals[active] = fine
        errs[active] = err
        bad = ~np.isfinite(fine)
        vals[active[bad]] = np.inf
        errs[active[bad]] = np.inf
        done = bad | (err <= tol * np.maximum(1.0, np.abs(fine)))
        n *= 2
        if np.all(done) or 2 * n > max_panels:
            break
        active = active[~done]
        coarse = fine[~done]
    return vals, errs


def horizon_limit(evaluate, cfg, label="integral"):
    """Limit of a nondecreasing quantity V(H) as the horizon H doubles.

    ``evaluate(H)`` returns ``(value, error, extra)``.  Stops once the
    geometric extrapolation of the increments is below ``cfg.tail_tol``.

    Returns:
        dict with ``value`` (including the extrapolated tail), ``error``
        (quadrature error plus tail), ``horizon``, ``tail``, ``status``
        (``converged`` or ``extrapolated``) and the last ``extra``.

    Raises:
        DivergenceError: non-finite values, or increments that keep growing.
        TruncationError: horizon_max reached with a slowly decaying tail.
    """
    H = float(cfg.horizon_init)
    values, incs = [], []
    growing = 0
    while True:
        v, e, extra = evaluate(H)
        if not np.isfinite(v):
            raise DivergenceError(f"{label} is infinite (non-finite at horizon {H:g})",
                                  horizon=H)
        if values:
            v = max(v, values[-1])
            incs.append(v - values[-1])
        values.append(v)
        tail = np.inf
        if len(incs) >= 2:
            if incs[-1] <= cfg.tail_tol and incs[-2] <= cfg.tail_tol:
                tail = incs[-1]
            elif incs[-2] > 0:
                ratio = incs[-1] / incs[-2]
                growing = growing + 1 if ratio >= 1 and incs[-1] > cfg.tail_tol else 0
                if ratio < 1:
                    tail = incs[-1] * ratio / (1 - ratio)
            if growing >= 4:
                raise DivergenceError(f"{label} diverges: increments grow up to horizon"
                                      f" {H:g}", horizon=H)
        if tail < cfg.tail_tol:
            return {"value": v + tail, "error": e + tail, "horizon": H, "tail": tail,
                    "status": "converged", "extra": extra}
        if 2 * H > cfg.horizon_max:
            ratio = incs[-1] / incs[-2] if len(incs) >= 2 and incs[-2] > 0 else np.inf
            if ratio < 0.9:
                return {"value": v + tail, "error": e + tail, "horizon": H,
                        "tail": tail, "status": "extrapolated", "extra": extra}
            if ratio >= 1:
                raise DivergenceError(f"{label} diverges: increments do not decay by "
                                      f"horizon {H:g}", horizon=H)
            raise TruncationError(f"{label}: tail still {tail:.3g} at horizon {H:g}",
                                  residual=tail)
        H *= 2
