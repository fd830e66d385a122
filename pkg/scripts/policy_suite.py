#!/usr/bin/env python3
"""Five policies on three heterogeneity presets, tabulated by time to threshold."""

from __future__ import annotations

import argparse
from pathlib import Path

from abssgd.config import load_config
from abssgd.runner import compare_policies, format_table, write_comparison_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs" / "suite"


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, help="override the seed in every config")
    p.add_argument("--jobs", type=int, default=4)
    p.add_argument("--out", default="suite.csv")
    args = p.parse_args()

    configs = [load_config(f) for f in sorted(CONFIGS.glob("*.cfg"))]
    if args.seed is not None:
        configs = [c.replace(seed=args.seed) for c in configs]
    rows = compare_policies(configs, jobs=args.jobs)
    write_comparison_csv(rows, args.out)
    print(format_table(rows), end="")


if __name__ == "__main__":
    main()
