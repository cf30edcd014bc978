#!/usr/bin/env python3
"""Run the full cross-method equivalence suite and write the report.

Usage:
    python scripts/run_suite.py [--config suite.json] [--out report.json]
                                [--csv report.csv]
"""

import argparse
import sys
import time

from amerikan.harness import SuiteConfig, run_equivalence_suite


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="suite configuration JSON (default: shipped config)")
    ap.add_argument("--out", default="suite_report.json")
    ap.add_argument("--csv", default="suite_report.csv")
    args = ap.parse_args()

    if args.config:
        with open(args.config) as fh:
            cfg = SuiteConfig.from_json(fh.read())
    else:
        cfg = SuiteConfig.default()

    t0 = time.time()
    report = run_equivalence_suite(cfg)
    with open(args.out, "w") as fh:
        fh.write(report.to_json())
    report.write_csv(args.csv)

    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status:4s} {c.param_set}/{c.check}: "
              f"measured={c.measured:.6g} tolerance={c.tolerance:.6g} ({c.runtime:.1f}s)")
    print(f"total {time.time() - t0:.1f}s -> {args.out}, {args.csv}")
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
