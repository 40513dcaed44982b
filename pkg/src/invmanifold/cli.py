"""Command-line front end: check, solve, verify and named demos.

Exit codes: 0 success, 1 a gate / decay / verification check failed,
2 configuration error or missing input files, 3 divergent admissibility
constants.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import demos
from .admissibility import QuadratureConfig, assess, compute_S
from .config import (ScenarioConfig, build_bounds, build_perturbation, build_radius,
                     build_system, parse_overrides, scenario_from_file)
from .errors import (ConfigError, ConvergenceError, DivergenceError, PreconditionError)
from .perron import (ball_envelope, read_manifold_json, solve_local, solve_manifold,
                     write_manifold_csv, write_manifold_json, _jsonable)
from .verification import (check_decay_bound, decay_pairs, local_sample,
                           run_verification)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGENT = 0, 1, 2, 3


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=1, ensure_ascii=False)
        fh.write("\n")


def _say(msg: str, quiet: bool = False) -> None:
    if not quiet:
        print(msg)


class Scenario:
    """Everything built from a config: bounds, system, f, radius, configs."""

    def __init__(self, cfg: ScenarioConfig, qcfg: QuadratureConfig | None = None):
        self.cfg = cfg
        self.bounds = build_bounds(cfg)
        self.system = build_system(cfg, self.bounds)
        self.f = build_perturbation(cfg, self.system)
        self.R = build_radius(cfg)
        if self.R is None and self.f.envelope is None:
            raise ConfigError("a (c, q) perturbation needs a radius (radius.kind)")
        self.qcfg = qcfg or cfg.section("quadrature")
        self.scfg = cfg.section("solver")
        self.vcfg = cfg.section("verify")

    @property
    def local(self) -> bool:
        return self.R is not None

    @property
    def envelope(self):
        return ball_envelope(self.f, self.R) if self.local else self.f.envelope


# -- pipeline -----------------------------------------------------------------

def run_check(sc: Scenario, out: Path, quiet: bool = False):
    """Admissibility report.  Returns (report dict, exit code)."""
    rep = assess(sc.bounds, sc.envelope, sc.qcfg)
    d = {"scenario": sc.cfg.name, "mode": "local" if sc.local else "global",
         "report": rep.to_dict()}
    ok = rep.local_ok if sc.local else rep.global_ok
    margin = rep.local_margin if sc.local else rep.global_margin
    if sc.local and ok:
        s0 = compute_S(sc.bounds, sc.R, rep.alpha, 0.0, sc.qcfg)
        d["S0"] = s0
        if not math.isfinite(s0["S"]):
            ok = False
    d["gate"] = {"kind": "local" if sc.local else "global",
                 "passed": bool(rep.local_gate if sc.local else rep.global_gate),
                 "margin": margin}
    d["passed"] = bool(ok)
    code = EXIT_OK if ok else (EXIT_DIVERGENT if rep.divergent else EXIT_FAIL)
    d["exit_code"] = code
    _write_json(out / "admissibility.json", d)
    _say(f"alpha = {rep.alpha:.10g} (±{rep.alpha_err:.2g}), beta = {rep.beta:.10g} "
         f"(±{rep.beta_err:.2g}), decay {rep.decay_ok}, {d['gate']['kind']} gate "
         f"{'pass' if d['gate']['passed'] else 'FAIL'} (margin {margin:.10g})", quiet)
    return d, code, rep


def _decay_curve(sc: Scenario, graph, alpha_used: float, seed: int):
    if sc.local:
        sample = local_sample(graph, sc.R, sc.vcfg, seed)
        pairs = [(sample[k][0], sample[k][1], sample[k + 1][1])
                 for k in range(len(sample) - 1) if sample[k][0] == sample[k + 1][0]]
        pref = 2.0 / (1.0 - 4.0 * alpha_used)
    else:
        pairs = decay_pairs(graph, sc.vcfg, seed)
        pref = 2.0 / (1.0 - 2.0 * alpha_used)
    gaps = [g for g in sc.vcfg.decay_gaps]
    return check_decay_bound(graph, sc.system, sc.f, sc.bounds, alpha_used, pairs,
                             gaps, sc.vcfg.tol_factor, prefactor=pref)


def _write_decay_csv(path: Path, curve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "t", "a_ts", "separation", "bound"])
        for c in curve:
            w.writerow(["%.17g" % c[k] for k in ("s", "t", "a", "separation", "bound")])


def run_solve(sc: Scenario, out: Path, seed: int = 0, quiet: bool = False):
    """check, then solve; writes manifold and decay-curve files."""
    chk, code, rep = run_check(sc, out, quiet)
    if code != EXIT_OK:
        _say("admissibility check failed; not solving", quiet)
        return None, code
    t0 = time.perf_counter()
    try:
        if sc.local:
            graph, _ = solve_local(sc.system, sc.bounds, sc.f, sc.R, sc.scfg, sc.qcfg,
                                   alpha=rep.alpha, beta=rep.beta)
            alpha_used = rep.alpha
        else:
            graph = solve_manifold(sc.system, sc.bounds, sc.f, sc.scfg, sc.qcfg,
                                   alpha=rep.alpha, beta=rep.beta)
            alpha_used = rep.alpha
    except PreconditionError as exc:
        _say(f"precondition failed: {exc}", quiet)
        return None, EXIT_FAIL
    except ConvergenceError as exc:
        _say(f"solver did not converge: {exc}", quiet)
        return None, EXIT_FAIL
    dt = time.perf_counter() - t0
    graph.config["scenario"] = sc.cfg.to_dict()
    write_manifold_csv(graph, out / "manifold.csv")
    write_manifold_json(graph, out / "manifold.json")
    dec = _decay_curve(sc, graph, alpha_used, seed)
    _write_decay_csv(out / "decay_curve.csv", dec["curve"])
    _say(f"solved in {dt:.1f} s: {graph.outer_iterations} outer iterations, "
         f"error bound {graph.error_bound:.3g}, max outer ratio "
         f"{max(graph.outer_ratios, default=0.0):.3g}, max inner ratio "
         f"{max(graph.inner_ratios, default=0.0):.3g}", quiet)
    return graph, EXIT_OK


def run_verify(sc: Scenario, out: Path, seed: int = 0, negative_controls: bool = False,
               strict: bool = False, quiet: bool = False):
    path = out / "manifold.json"
    if not path.is_file():
        _say(f"missing manifold file {path}; run 'solve' first", quiet)
        return None, EXIT_CONFIG
    graph = read_manifold_json(path)
    local = {"f": sc.f, "R": sc.R} if sc.local else None
    try:
        rep = run_verification(graph, sc.system, sc.f, sc.bounds, sc.vcfg, seed=seed,
                               negative_controls=negative_controls, strict=strict,
                               scenario=sc.cfg.name, local=local)
    except DivergenceError as exc:
        _say(f"semiflow diverged: {exc}", quiet)
        return None, EXIT_FAIL
    d = rep.to_dict()
    for r in d["records"]:
        r.pop("curve", None)
    _write_json(out / "verification.json", d)
    for r in rep.records:
        exp = " (expected failure)" if r["expected"] == "fail" else ""
        _say(f"  {r['check']:<22} worst {r['worst_residual']:.3g} tol {r['tol']:.3g} "
             f"n={r['n_samples']} skipped={r['n_skipped']} "
             f"{'ok' if r['ok'] else 'NOT OK'}{exp}", quiet)
    return rep, EXIT_OK if rep.passed else EXIT_FAIL


def run_demo(name: str, out: Path | None = None, seed: int = 0,
             overrides: dict | None = None, negative_controls: bool = True,
             qcfg_overrides: dict | None = None, quiet: bool = False):
    """check -> solve -> verify for a named demo, plus the condition table."""
    cfg = demos.demo_config(name).with_overrides(overrides or {})
    out = Path(out or cfg["output.dir"])
    sc = Scenario(cfg)
    if qcfg_overrides:
        sc.qcfg = replace(sc.qcfg, **qcfg_overrides)
    family = demos.DEMO_FAMILY[name]
    rows = demos.evaluate_conditions(family, demos.params_from_config(cfg))
    _say(f"== demo {name}", quiet)
    _say("parameter conditions (closed form vs numerics):", quiet)
    for r in rows:
        _say("  " + r.line(), quiet)
    summary = {"demo": name, "conditions": [r.to_dict() for r in rows]}
    graph, code = run_solve(sc, out, seed, quiet)
    summary["solve_exit"] = code
    if code == EXIT_OK:
        rep, code = run_verify(sc, out, seed, negative_controls, quiet=quiet)
        summary["verify_exit"] = code
    elif code == EXIT_DIVERGENT:
        code = EXIT_FAIL
    summary["exit_code"] = code
    _write_json(out / "summary.json", summary)
    _say(f"demo {name}: {'PASS' if code == EXIT_OK else 'FAIL'} (exit {code})", quiet)
    return code


# -- argparse -----------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="invmanifold",
        description="Compute and verify Lipschitz invariant manifolds of "
                    "perturbed nonautonomous linear equations.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario file (key = value or JSON)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="sampling seed (default 0)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads for quadrature")
    common.add_argument("--strict", action="store_true",
                        help="treat skipped verification samples as failures")
    common.add_argument("--negative-controls", action="store_true",
                        help="add checks that must fail (off-manifold, out-of-ball)")
    common.add_argument("--quad-tol", type=float)
    common.add_argument("--tail-tol", type=float)
    common.add_argument("--horizon-init", type=float)
    common.add_argument("--horizon-max", type=float)
    common.add_argument("--sup-grid", type=int)
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, hlp in (("check", "admissibility constants and gates"),
                      ("solve", "check, then compute the manifold"),
                      ("verify", "verify a computed manifold by direct integration")):
        sub.add_parser(name, parents=[common], help=hlp)
    d = sub.add_parser("demo", parents=[common], help="run a named demo end to end")
    d.add_argument("name", help="one of: " + ", ".join(demos.DEMOS))
    return p


def _quad_overrides(args) -> dict:
    m = {"quad_tol": args.quad_tol, "tail_tol": args.tail_tol,
         "horizon_init": args.horizon_init, "horizon_max": args.horizon_max,
         "sup_grid": args.sup_grid, "threads": args.threads}
    return {f"quadrature.{k}": v for k, v in m.items() if v is not None}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        overrides = parse_overrides(args.set)
        overrides.update(_quad_overrides(args))
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.command == "demo":
            if args.name not in demos.DEMOS:
                print(f"unknown demo {args.name!r}; available: "
                      + ", ".join(demos.DEMOS), file=sys.stderr)
                return EXIT_CONFIG
            if args.config:
                print("--config is ignored for demos; use --set", file=sys.stderr)
            cfg = demos.demo_config(args.name).with_overrides(overrides)
            return run_demo(args.name, args.out, cfg["seed"], overrides,
                            negative_controls=True, quiet=args.quiet)
        if args.config is None:
            print("--config is required", file=sys.stderr)
            return EXIT_CONFIG
        cfg = scenario_from_file(args.config, overrides)
        out = Path(args.out or cfg["output.dir"])
        sc = Scenario(cfg)
        seed = cfg["seed"]
        if args.command == "check":
            return run_check(sc, out, args.quiet)[1]
        if args.command == "solve":
            return run_solve(sc, out, seed, args.quiet)[1]
        return run_verify(sc, out, seed, args.negative_controls, args.strict,
                          args.quiet)[1]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
