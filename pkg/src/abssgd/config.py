"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, list values are comma
separated. Every key is typed and documented in :data:`KEYS`; unknown keys
are rejected. ``seed`` is mandatory so no run ever pulls entropy from the
clock.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from abssgd.algorithms import POLICIES
from abssgd.cluster import PRESETS
from abssgd.models import MODEL_KINDS
from abssgd.numeric import ContractViolation

METRICS = ("train_loss", "grad_norm_sq", "test_accuracy")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    policy: str = "abs"
    cluster: str = "static-1234"
    base_batch_time: float = 1.0
    static_factors: tuple[float, ...] = ()
    dynamic_ranges: tuple[float, ...] = ()
    jitter: str = "batch"
    k_max: int = 64
    comm_alpha: float = 3.0
    comm_beta: float = 0.0
    ref_batch: int = 32
    lr: float = 0.01
    lam: float = 0.5
    iterations: int = 1500
    staleness: int = 10
    dbs_epoch: int = 20
    model: str = "logistic"
    mlp_width: int = 8
    curvature: tuple[float, ...] = ()
    features: int = 10
    samples: int = 2000
    label_noise: float = 0.1
    feature_scale: float = 1.0
    holdout: float = 0.0
    threshold: float = 0.45
    threshold_metric: str = "train_loss"
    cadence: int = 1
    stop_on_converge: bool = False
    theory_report: bool = True
    theory_gd_iters: int = 100_000
    theory_probes: int = 200
    theory_sigma_samples: int = 4000
    label: str = field(default="", compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ContractViolation(f"invalid config: {msg}")

        need(self.policy in POLICIES, f"policy {self.policy!r} not in {POLICIES}")
        need(self.cluster in PRESETS or self.cluster == "custom",
             f"cluster {self.cluster!r} is neither a preset {sorted(PRESETS)} nor 'custom'")
        if self.cluster == "custom":
            need(len(self.static_factors) >= 1, "custom cluster needs static_factors")
            need(len(self.dynamic_ranges) in (0, len(self.static_factors)),
                 "dynamic_ranges must be empty or match static_factors")
        else:
            need(not self.static_factors and not self.dynamic_ranges,
                 "static_factors/dynamic_ranges only apply to cluster = custom")
        need(self.model in MODEL_KINDS, f"model {self.model!r} not in {MODEL_KINDS}")
        need(self.threshold_metric in METRICS, f"threshold_metric not in {METRICS}")
        need(self.threshold_metric != "test_accuracy" or self.holdout > 0,
             "test_accuracy threshold needs holdout > 0")
        need(0 <= self.holdout < 1, "holdout must be in [0, 1)")
        need(self.seed >= 0, "seed must be >= 0")
        need(self.jitter in ("batch", "iteration"), "jitter must be batch or iteration")
        need(self.cadence >= 1 and self.iterations >= 1 and self.k_max >= 1, "cadence, iterations, k_max >= 1")
        need(self.features >= 1 and self.samples >= 2, "features >= 1 and samples >= 2")
        need(not self.curvature or len(self.curvature) == self.features, "curvature needs one entry per feature")
        need(not math.isnan(self.threshold), "threshold must not be NaN")

    @property
    def n_workers(self) -> int:
        return len(self.static_factors) if self.cluster == "custom" else len(PRESETS[self.cluster][0])

    @property
    def name(self) -> str:
        return self.label or f"{self.policy}@{self.cluster}"

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "label" and not v:
                continue
            lines.append(f"{f.name} = {_render(v)}")
        return "\n".join(lines) + "\n"


KEYS = {
    "seed": "root seed for every random stream (required)",
    "policy": "abs | bsp | dbs | asp | ssp",
    "cluster": "preset name (homogeneous, static-1234, dynamic-50, both) or custom",
    "base_batch_time": "simulated seconds for one reference batch on an unslowed worker",
    "static_factors": "custom cluster: fractional fixed prolongation per worker, e.g. 0,1,2,3",
    "dynamic_ranges": "custom cluster: upper bound of uniform random prolongation per worker",
    "jitter": "batch (redraw dynamic prolongation per reference batch) or iteration",
    "k_max": "cap on reference batches per worker per ABS iteration",
    "comm_alpha": "synchronisation latency in simulated seconds",
    "comm_beta": "synchronisation seconds per parameter",
    "ref_batch": "reference batch size (baseline per-worker batch size)",
    "lr": "learning rate",
    "lam": "delay compensation coefficient",
    "iterations": "synchronous iterations; asynchronous policies run iterations * N pushes",
    "staleness": "SSP iteration-count lead bound",
    "dbs_epoch": "iterations per DBS re-allocation epoch",
    "model": "logistic | mlp | quadratic",
    "mlp_width": "hidden units of the mlp model",
    "curvature": "quadratic model diagonal curvature (defaults to ones)",
    "features": "input dimension d",
    "samples": "dataset size before the holdout split",
    "label_noise": "label flip probability of the synthetic data",
    "feature_scale": "standard deviation of synthetic features",
    "holdout": "fraction of samples held out for test accuracy",
    "threshold": "convergence threshold on threshold_metric (inf allowed)",
    "threshold_metric": "train_loss | grad_norm_sq (reached when <=) or test_accuracy (reached when >=)",
    "cadence": "emit a CSV row every this many iterations",
    "stop_on_converge": "stop as soon as the threshold is reached",
    "theory_report": "for abs: estimate L, sigma^2, f(x*) and check the ergodic bound",
    "theory_gd_iters": "full-batch descent iterations used to approximate f(x*)",
    "theory_probes": "probe pairs for the smoothness estimate",
    "theory_sigma_samples": "samples for each gradient-variance estimate",
    "label": "free-form name used in comparison tables",
}

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
assert set(KEYS) == set(_FIELDS)


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_render(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(key: str, raw: str):
    kind = _FIELDS[key].type
    try:
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            return tuple(float(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ContractViolation(f"config key {key!r}: cannot parse {raw!r} as {kind}") from None


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractViolation(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ContractViolation(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ContractViolation(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    if "seed" not in values:
        raise ContractViolation(f"{source}: missing required key 'seed'")
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ContractViolation(f"{path}: {exc.strerror or exc}") from None
    return parse_config(text, str(path))
