#!/usr/bin/env python3
"""Convergence ladders: obstacle grid vs oracle, penalty parameter,
Monte Carlo standard-error law. Prints one table per study and flags any
non-monotone error sequence.

Usage:
    python scripts/refinement_study.py [--json out.json]
"""

import argparse
import json

from amerikan.harness import SuiteConfig, refinement_study


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--json", help="optional JSON output path")
    args = ap.parse_args()

    tables = refinement_study(SuiteConfig.default())
    for tbl in tables:
        print(f"== {tbl.study} (monotone={tbl.monotone}"
              + (f", fitted order={tbl.fitted_order:.2f}" if tbl.fitted_order is not None else "")
              + ")")
        for row in tbl.rows:
            print(f"   {row.rung:>14s}  {row.error:.6e}")
        if not tbl.monotone:
            print("   WARNING: error sequence is not monotone")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([t.to_dict() for t in tables], fh, indent=2)


if __name__ == "__main__":
    main()
