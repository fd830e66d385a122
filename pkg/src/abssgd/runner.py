"""Seeded experiment execution, CSV output and policy comparison."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from abssgd.algorithms import POLICIES, HyperParams, IterationRecord, PolicyRun, Problem
from abssgd.cluster import Cluster, CommModel, WorkerProfile, preset_profiles
from abssgd.config import ExperimentConfig
from abssgd.models import (
    Dataset,
    Model,
    accuracy,
    estimate_lipschitz,
    estimate_sigma_sq,
    full_loss,
    generate_synthetic,
    logistic_smoothness_bound,
    minimize_full_batch,
)
from abssgd.numeric import ContractViolation, RngStream
from abssgd.theory import BoundReport, TheoryParams, trajectory_from_records, verify_bound

# stream ids under the config seed
DATA_STREAM, TIMING_STREAM, SAMPLING_STREAM, THEORY_STREAM, INIT_STREAM = range(5)

CLUSTER_LABELS = {
    "static-1234": "Only static",
    "dynamic-50": "Only dynamic",
    "both": "Both static and dynamic",
    "homogeneous": "Homogeneous",
    "custom": "Custom",
}


@dataclass
class Setup:
    model: Model
    train: Dataset
    test: Dataset | None
    cluster: Cluster
    problem: Problem
    hp: HyperParams
    x0: np.ndarray


def build(cfg: ExperimentConfig) -> Setup:
    """Materialise every object a run needs from its config."""
    data, _ = generate_synthetic(
        cfg.features, cfg.samples, cfg.label_noise, RngStream(cfg.seed, DATA_STREAM), cfg.feature_scale
    )
    n_test = int(round(cfg.holdout * cfg.samples))
    if n_test:
        if cfg.samples - n_test < 1:
            raise ContractViolation("holdout leaves no training samples")
        train, test = data.subset(range(cfg.samples - n_test)), data.subset(range(cfg.samples - n_test, cfg.samples))
    else:
        train, test = data, None
    model = Model(cfg.model, cfg.features, width=cfg.mlp_width, curvature=cfg.curvature or None)

    if cfg.cluster == "custom":
        ranges = cfg.dynamic_ranges or (0.0,) * len(cfg.static_factors)
        profiles = [WorkerProfile(cfg.base_batch_time, f, r) for f, r in zip(cfg.static_factors, ranges)]
    else:
        profiles = preset_profiles(cfg.cluster, cfg.base_batch_time)
    cluster = Cluster(
        profiles, CommModel(cfg.comm_alpha, cfg.comm_beta), RngStream(cfg.seed, TIMING_STREAM),
        k_max=cfg.k_max, jitter=cfg.jitter,
    )
    hp = HyperParams(cfg.ref_batch, cfg.lr, cfg.lam, cfg.iterations, cfg.staleness, cfg.dbs_epoch)
    problem = Problem(model, train, RngStream(cfg.seed, SAMPLING_STREAM))
    x0 = model.init_params(RngStream(cfg.seed, INIT_STREAM))
    return Setup(model, train, test, cluster, problem, hp, x0)


@dataclass
class Summary:
    name: str
    policy: str
    cluster: str
    seed: int
    steps: int
    sim_time: float
    converged_time: float | None
    converged_step: int | None
    final_loss: float
    observed_K: float
    theory: BoundReport | None = None

    def as_text(self) -> str:
        rows = [
            ("name", self.name),
            ("policy", self.policy),
            ("cluster", self.cluster),
            ("seed", self.seed),
            ("steps", self.steps),
            ("sim_time", self.sim_time),
            ("converged_time", "not reached" if self.converged_time is None else self.converged_time),
            ("converged_step", "not reached" if self.converged_step is None else self.converged_step),
            ("final_loss", self.final_loss),
            ("observed_K", self.observed_K),
        ]
        text = "".join(f"{k}={repr(v) if isinstance(v, float) else v}\n" for k, v in rows)
        if self.theory is not None:
            text += self.theory.as_text()
        return text


def _reached(cfg: ExperimentConfig, value: float) -> bool:
    if math.isnan(value):
        return False
    if cfg.threshold_metric == "test_accuracy":
        return value >= cfg.threshold
    return value <= cfg.threshold


def run_experiment(cfg: ExperimentConfig) -> tuple[list[IterationRecord], Summary]:
    """Run one seeded experiment.

    Records are kept every ``cadence`` steps. Convergence is the first
    emitted record whose metric crosses ``threshold``; with an infinite
    loss threshold this is the first record.
    """
    cfg.validate()
    s = build(cfg)
    run = PolicyRun(cfg.policy, s.x0, s.cluster, s.problem, s.hp)
    steps = cfg.iterations * (s.cluster.n_workers if cfg.policy in ("asp", "ssp") else 1)
    want_theory = cfg.policy == "abs" and cfg.theory_report
    records, every = [], []
    hit_time = hit_step = None
    for i in range(steps):
        tick = i % cfg.cadence == 0
        rec = run.step(measure=tick or want_theory)
        if want_theory:
            every.append(rec)
        if not tick:
            continue
        records.append(rec)
        if hit_time is None:
            metric = {
                "train_loss": rec.train_loss,
                "grad_norm_sq": rec.grad_norm_sq,
                "test_accuracy": accuracy(s.model, run.params, s.test) if s.test is not None else float("nan"),
            }[cfg.threshold_metric]
            if _reached(cfg, metric):
                hit_time, hit_step = rec.sim_time, rec.t
                if cfg.stop_on_converge:
                    break

    final_loss = full_loss(s.model, run.params, s.train)
    observed_k = max(r.total_batch for r in records) / cfg.ref_batch if records else 0.0
    report = theory_report(cfg, s, every, run.params) if want_theory and len(every) >= 2 else None
    summary = Summary(
        cfg.name, cfg.policy, cfg.cluster, cfg.seed, i + 1, s.cluster.clock,
        hit_time, hit_step, final_loss, observed_k, report,
    )
    return records, summary


def estimate_constants(cfg: ExperimentConfig, s: Setup, x_end: np.ndarray | None = None):
    """Measured smoothness, gradient variance and initial suboptimality for ``s``.

    ``f(x*)`` comes from long full-batch descent started at ``x0``. The
    variance estimate is the larger of the estimates at ``x0`` and ``x_end``.
    """
    rng = RngStream(cfg.seed, THEORY_STREAM)
    if s.model.kind == "logistic":
        l_upper = logistic_smoothness_bound(s.train)
    elif s.model.kind == "quadratic":
        l_upper = max(s.model.curvature)
    else:
        l_upper = estimate_lipschitz(s.model, s.train, cfg.theory_probes, 1.0, rng.child(0), s.x0)
    x_star = minimize_full_batch(s.model, s.train, s.x0, 1.0 / l_upper, cfg.theory_gd_iters, tol=1e-26)
    f_star = full_loss(s.model, x_star, s.train)
    delta = full_loss(s.model, s.x0, s.train) - f_star
    radius = float(np.linalg.norm(x_star - s.x0)) or 1.0
    L = estimate_lipschitz(s.model, s.train, cfg.theory_probes, radius, rng.child(1), s.x0)
    points = [s.x0] + ([x_end] if x_end is not None else [])
    sigma_sq = max(
        estimate_sigma_sq(s.model, p, s.train, cfg.theory_sigma_samples, rng.child(2, j))
        for j, p in enumerate(points)
    )
    return L, sigma_sq, delta


def theory_report(cfg: ExperimentConfig, s: Setup, records, x_end: np.ndarray | None = None) -> BoundReport:
    """Check an ABS trajectory against the ergodic bound with measured constants."""
    stats = trajectory_from_records(records, cfg.lr)
    L, sigma_sq, delta = estimate_constants(cfg, s, x_end)
    n = s.cluster.n_workers
    # delta can only be zero if x0 is already optimal; keep TheoryParams valid
    p = TheoryParams(L, sigma_sq, max(delta, 1e-300), n, n, cfg.ref_batch, len(stats), cfg.lr)
    return verify_bound(stats, p)


# ------------------------------------------------------------------ CSV

def _header(n_workers: int) -> list[str]:
    return ["t", "sim_time", "total_batch", "train_loss", "grad_norm_sq"] + [f"k_{i + 1}" for i in range(n_workers)]


def emit_csv(records, path, n_workers: int | None = None) -> None:
    """Write records as CSV with shortest round-trip float formatting."""
    records = list(records)
    if n_workers is None:
        if not records:
            raise ContractViolation("n_workers is required to write an empty CSV")
        n_workers = len(records[0].k)
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(_header(n_workers))
            for r in records:
                w.writerow([r.t, repr(float(r.sim_time)), r.total_batch, repr(float(r.train_loss)),
                            repr(float(r.grad_norm_sq)), *r.k])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path) -> list[IterationRecord]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:5] != _header(0):
        raise ContractViolation(f"{path}: not a metrics CSV")
    return [
        IterationRecord(int(r[0]), float(r[1]), int(r[2]), float(r[3]), float(r[4]), tuple(int(v) for v in r[5:]))
        for r in rows[1:]
    ]


# ----------------------------------------------------------- comparison

SHARED_KEYS = ("model", "features", "samples", "label_noise", "feature_scale", "holdout",
               "mlp_width", "curvature", "seed", "threshold", "threshold_metric")


@dataclass
class ComparisonRow:
    name: str
    policy: str
    cluster: str
    converged_time: float | None
    speedup: float | None

    @property
    def speedup_text(self) -> str:
        return "n/a" if self.speedup is None else f"{self.speedup:.2f}x"


def _run_one(cfg):
    return run_experiment(cfg)


def compare_policies(configs, jobs: int = 1, outputs: dict | None = None) -> list[ComparisonRow]:
    """Run each config and report convergence times with speedups.

    Speedup is ``time / time_of_reference`` where the reference is the first
    config on the same cluster, so a run compared with itself reads 1.00x.
    Runs that never reach the threshold get ``None`` (shown as ``n/a``).
    Per-run records and summaries are stored in ``outputs`` if given.
    """
    configs = list(configs)
    if not configs:
        raise ContractViolation("nothing to compare")
    ref = configs[0]
    for c in configs[1:]:
        diff = [k for k in SHARED_KEYS if getattr(c, k) != getattr(ref, k)]
        if diff:
            raise ContractViolation(f"config {c.name!r} differs from {ref.name!r} on comparison keys: {', '.join(diff)}")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, configs))
    else:
        results = [run_experiment(c) for c in configs]

    rows, base = [], {}
    for cfg, (records, summary) in zip(configs, results):
        if outputs is not None:
            outputs[cfg.name] = (records, summary)
        t = summary.converged_time
        if cfg.cluster not in base:
            base[cfg.cluster] = t
        b = base[cfg.cluster]
        speed = None if (t is None or b is None or b <= 0) else t / b
        rows.append(ComparisonRow(cfg.name, cfg.policy, cfg.cluster, t, speed))
    return rows


def write_comparison_csv(rows, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["name", "policy", "cluster", "converged_time", "speedup"])
            for r in rows:
                w.writerow([r.name, r.policy, r.cluster,
                            "n/a" if r.converged_time is None else repr(r.converged_time),
                            "n/a" if r.speedup is None else repr(r.speedup)])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def format_table(rows) -> str:
    """Render rows as one line per cluster with ``time(speedup)`` cells per policy.

    Clusters and policies appear in canonical order whatever the input order.
    """
    order = list(CLUSTER_LABELS)
    policies = sorted({r.policy for r in rows}, key=POLICIES.index)
    clusters = sorted({r.cluster for r in rows}, key=order.index)
    header = ["Cluster heterogeneity"] + [f"{p.upper()}-SGD" for p in policies]
    body = []
    for c in clusters:
        cells = [CLUSTER_LABELS.get(c, c)]
        for p in policies:
            hit = [r for r in rows if r.cluster == c and r.policy == p]
            if not hit:
                cells.append("-")
                continue
            r = hit[0]
            t = "not reached" if r.converged_time is None else f"{r.converged_time:.0f}"
            cells.append(f"{t}({r.speedup_text})")
        body.append(cells)
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in [header] + body]
    return "\n".join(lines) + "\n"
