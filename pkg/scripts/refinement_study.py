#!/usr/bin/env python3
"""Grid refinement for the exponential demo.

Solves at step h, h/2, ... (xi-spacing halved along with h) and compares
each refinement with the previous one at the coarse nodes, in units of
|xi| and against the sum of the two reported error bounds.
"""

import argparse
import time

import numpy as np

from invmanifold import bounds as B
from invmanifold.admissibility import LipschitzEnvelope
from invmanifold.linear_system import build_product_example
from invmanifold.perron import (SolverConfig, eval_manifold, solve_manifold,
                                test_perturbation)


def max_change(coarse, fine):
    worst = 0.0
    for i in range(coarse.n_valid + 1):
        s = float(coarse.times[i])
        for j, xi in enumerate(coarse.node_xi(i)):
            n = float(np.linalg.norm(xi))
            if n:
                d = np.linalg.norm(eval_manifold(fine, s, xi) - coarse.values[i, j])
                worst = max(worst, float(d) / n)
    return worst


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=0.1)
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--s-valid", type=float, default=5.0)
    args = ap.parse_args()
    bd = B.exponential(a=-1.0, b=0.0, eps=0.1)
    sys_ = build_product_example(*bd.product_form())
    f = test_perturbation(LipschitzEnvelope("exp_decay", delta=0.01, rate=0.2),
                          sys_.splitting)
    prev = None
    print(f"{'h':>8} {'xi nodes':>8} {'error bound':>12} {'change':>10} "
          f"{'change/(4 sum)':>15} {'time':>7}")
    for k in range(args.levels):
        cfg = SolverConfig(h=args.h / 2 ** k, s_valid=args.s_valid,
                           xi_nodes=16 * 2 ** k + 1, tube_dt=0.005 / 2 ** k)
        t0 = time.perf_counter()
        g = solve_manifold(sys_, bd, f, cfg, alpha=0.1, beta=0.01 / 1.1)
        dt = time.perf_counter() - t0
        if prev is None:
            change = ratio = float("nan")
        else:
            change = max_change(prev, g)
            ratio = change / (4 * (prev.error_bound + g.error_bound))
        print(f"{cfg.h:8.4f} {cfg.xi_nodes:8d} {g.error_bound:12.3e} {change:10.3e} "
              f"{ratio:15.3f} {dt:6.1f}s", flush=True)
        prev = g


if __name__ == "__main__":
    main()
