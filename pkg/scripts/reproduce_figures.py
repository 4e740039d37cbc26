#!/usr/bin/env python3
"""Run every built-in suite (or a chosen subset) and write CSVs, optionally plots.

    python3 scripts/reproduce_figures.py --scale 0.2 --seeds 2 --out runs/ci
    python3 scripts/reproduce_figures.py fig9_large --scale 0.25
"""

import argparse
import logging
import time
from pathlib import Path

from podt.suites import build_suites, run_suite

DEFAULT = [n for n in build_suites() if n != "fig9_large"]


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("suites", nargs="*", default=DEFAULT)
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--plot", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.WARNING)
    suites = build_suites()
    for name in args.suites:
        t0 = time.perf_counter()
        where = run_suite(suites[name], args.out, range(args.seeds), args.scale, args.jobs, args.plot)
        print(f"{name}: {time.perf_counter() - t0:.1f}s -> {where}", flush=True)


if __name__ == "__main__":
    main()
