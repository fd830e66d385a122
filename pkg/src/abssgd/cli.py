"""Command line entry point: ``run``, ``compare`` and ``verify-theory``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from abssgd.config import KEYS, load_config
from abssgd.models import full_loss
from abssgd.runner import (
    build,
    compare_policies,
    emit_csv,
    estimate_constants,
    format_table,
    run_experiment,
    write_comparison_csv,
)
from abssgd.theory import TheoryParams, default_grid, formula_grid


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    records, summary = run_experiment(cfg)
    out = Path(args.out)
    emit_csv(records, out, cfg.n_workers)
    text = summary.as_text()
    out.with_suffix(".summary.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def _cmd_compare(args) -> int:
    configs = [load_config(p) for p in args.configs]
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        # same policy on the same cluster twice: disambiguate by file stem
        configs = [c.replace(label=Path(p).stem) for c, p in zip(configs, args.configs)]
    outputs = {}
    rows = compare_policies(configs, jobs=args.jobs, outputs=outputs)
    write_comparison_csv(rows, args.out)
    if args.runs_dir:
        runs = Path(args.runs_dir)
        runs.mkdir(parents=True, exist_ok=True)
        for cfg in configs:
            records, summary = outputs[cfg.name]
            stem = cfg.name.replace("@", "_").replace("/", "_")
            emit_csv(records, runs / f"{stem}.csv", cfg.n_workers)
            (runs / f"{stem}.summary.txt").write_text(summary.as_text())
    sys.stdout.write(format_table(rows))
    return 0


def _cmd_verify_theory(args) -> int:
    grid = default_grid()
    if args.config:
        cfg = load_config(args.config)
        s = build(cfg)
        L, sigma_sq, delta = estimate_constants(cfg, s)
        n = cfg.n_workers
        # no simulation: use the k_max envelope as K
        grid.append(TheoryParams(L, sigma_sq, delta, n, n * cfg.k_max, cfg.ref_batch, cfg.iterations))
        print(f"config f(x0)={full_loss(s.model, s.x0, s.train)!r} L={L!r} sigma_sq={sigma_sq!r} delta={delta!r}")
    rows = formula_grid(grid)
    print("L,sigma_sq,delta,N,K,M_r,T,gamma,bound,rate,consistent,feasible")
    for r in rows:
        p = r.params
        print(",".join(repr(v) if isinstance(v, float) else str(v) for v in (
            p.L, p.sigma_sq, p.delta, p.N, p.K, p.M_r, p.T, r.gamma, r.bound, r.rate,
            str(r.consistent).lower(), str(r.feasible).lower())))
    infeasible = sum(not r.feasible for r in rows)
    print(f"consistent={sum(r.consistent for r in rows)}/{len(rows)} step_condition_violations={infeasible}")
    if not all(r.consistent for r in rows):
        raise RuntimeError("ergodic bound exceeds the closed-form rate on at least one grid point")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abssgd",
        description="Simulate distributed SGD policies on heterogeneous clusters.",
        epilog="config keys: " + ", ".join(KEYS),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment and write its metrics CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="run several configs and tabulate convergence times")
    p.add_argument("--configs", nargs="+", required=True)
    p.add_argument("--out", required=True, help="comparison table CSV")
    p.add_argument("--runs-dir", help="also write each run's CSV and summary here")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("verify-theory", help="formula-level checks of the convergence bounds")
    p.add_argument("--config", help="add a grid point with constants measured on this config's data")
    p.set_defaults(func=_cmd_verify_theory)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one parsable line instead of a traceback
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
