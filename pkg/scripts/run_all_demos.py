#!/usr/bin/env python3
"""Run every named demo end to end and print a one-line summary per demo.

Outputs go to <out>/<demo>/ (admissibility.json, manifold.csv/json,
decay_curve.csv, verification.json, summary.json), plus <out>/demos.json.
"""

import argparse
import json
import time
from pathlib import Path

from invmanifold import demos
from invmanifold.cli import run_demo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--only", nargs="*", help="subset of demo names")
    args = ap.parse_args()
    names = args.only or list(demos.DEMOS)
    rows = []
    for name in names:
        t0 = time.perf_counter()
        code = run_demo(name, args.out / name, seed=args.seed, quiet=True)
        dt = time.perf_counter() - t0
        summary = json.loads((args.out / name / "summary.json").read_text())
        agree = all(c["agree"] for c in summary["conditions"])
        rows.append({"demo": name, "exit_code": code, "seconds": round(dt, 1),
                     "conditions_agree": agree})
        print(f"{name:<14} exit {code}  conditions {'agree' if agree else 'DISAGREE'}"
              f"  {dt:6.1f} s", flush=True)
    (args.out / "demos.json").write_text(json.dumps(rows, indent=1) + "\n")
    failed = [r["demo"] for r in rows if r["exit_code"] != 0]
    print("all demos passed" if not failed else f"failed: {', '.join(failed)}")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
