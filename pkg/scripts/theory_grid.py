#!/usr/bin/env python3
"""Formula grid plus the empirical bound check for ABS over several seeds."""

from __future__ import annotations

import argparse

from abssgd.config import ExperimentConfig
from abssgd.runner import run_experiment
from abssgd.theory import formula_grid


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--iterations", type=int, default=1500)
    p.add_argument("--cluster", default="static-1234")
    args = p.parse_args()

    print("grid: gamma bound rate feasible")
    for r in formula_grid():
        print(f"  {r.gamma:.3e} {r.bound:.4e} {r.rate:.4e} {r.feasible}")

    print("empirical: seed criterion bound satisfied feasible K")
    for seed in args.seeds:
        cfg = ExperimentConfig(seed=seed, cluster=args.cluster, iterations=args.iterations)
        rep = run_experiment(cfg)[1].theory
        print(f"  {seed} {rep.criterion:.4e} {rep.bound:.4e} {rep.satisfied} {rep.feasible} {rep.K}")


if __name__ == "__main__":
    main()
