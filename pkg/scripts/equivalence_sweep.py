#!/usr/bin/env python3
"""Closed-form parameter conditions against numeric verdicts on every sweep.

Prints each row and writes a CSV with one line per (family, point, condition).
"""

import argparse
import csv
from pathlib import Path

from invmanifold.demos import SWEEPS, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--csv", type=Path, default=Path("out/equivalence_sweep.csv"))
    ap.add_argument("--family", nargs="*", choices=sorted(SWEEPS))
    args = ap.parse_args()
    args.csv.parent.mkdir(parents=True, exist_ok=True)
    total = bad = 0
    with open(args.csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family", "params", "condition", "kind", "target", "lhs", "rhs",
                    "closed_form", "numeric", "agree"])
        for family in args.family or SWEEPS:
            print(f"== {family}")
            for p, rows in run_sweep(family):
                print(f"  {p}")
                for r in rows:
                    print(f"    {r.line()}")
                    w.writerow([family, p, r.label, r.kind, r.target, r.lhs, r.rhs,
                                r.closed, r.numeric, r.agree])
                    total += 1
                    bad += r.agree is not True
    print(f"{total - bad}/{total} rows agree; table written to {args.csv}")
    return 1 if bad else 0


if __name__ == "__main__":
    raise SystemExit(main())
