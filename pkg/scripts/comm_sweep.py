#!/usr/bin/env python3
"""Margin of ABS over the best baseline as communication cost grows.

ABS hides communication behind extra reference batches, so its lead grows
with the sync time relative to per-batch compute. With sync time at or
below the slowest worker's batch time there is little to hide, and DBS
(which balances compute without overlapping it) can come out ahead.
"""

from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor

from abssgd.algorithms import POLICIES
from abssgd.config import ExperimentConfig
from abssgd.runner import run_experiment


def converged(cfg):
    return run_experiment(cfg)[1].converged_time


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--alphas", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 8.0])
    p.add_argument("--cluster", default="static-1234")
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--jobs", type=int, default=4)
    args = p.parse_args()

    grid = [(a, pol) for a in args.alphas for pol in POLICIES]
    cfgs = [
        ExperimentConfig(seed=args.seed, policy=pol, cluster=args.cluster, comm_alpha=a, iterations=20000,
                         stop_on_converge=True, theory_report=False)
        for a, pol in grid
    ]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        times = dict(zip(grid, pool.map(converged, cfgs)))

    print("comm_alpha " + " ".join(f"{pol:>8}" for pol in POLICIES) + "  best_baseline  margin")
    for a in args.alphas:
        row = {pol: times[(a, pol)] for pol in POLICIES}
        base = {k: v for k, v in row.items() if k != "abs" and v is not None}
        best = min(base, key=base.get) if base else None
        margin = f"{base[best] / row['abs']:.2f}x" if best and row["abs"] else "n/a"
        cells = " ".join(f"{v:8.0f}" if v is not None else "     n/a" for v in row.values())
        print(f"{a:10.2f} {cells}  {best or 'n/a':>13}  {margin}")


if __name__ == "__main__":
    main()
