"""Discrete-event timing model of a heterogeneous worker pool.

Time is simulated seconds. A worker's cost for one reference batch is
``base * (1 + static_factor) * (1 + U)`` with ``U ~ Uniform[0, dynamic_range)``.
Synchronisation of ``n`` parameters costs ``alpha + beta * n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from abssgd.numeric import ContractViolation, RngStream, draw_uniform

DEFAULT_K_MAX = 64


@dataclass(frozen=True)
class WorkerProfile:
    base_batch_time: float
    static_factor: float = 0.0
    dynamic_range: float = 0.0

    def __post_init__(self):
        if not self.base_batch_time > 0:
            raise ContractViolation("base_batch_time must be > 0")
        if self.static_factor < 0 or self.dynamic_range < 0:
            raise ContractViolation("static_factor and dynamic_range must be >= 0")

    @property
    def static_time(self) -> float:
        """Batch time before dynamic jitter."""
        return self.base_batch_time * (1.0 + self.static_factor)


@dataclass(frozen=True)
class CommModel:
    alpha: float
    beta: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or (self.alpha == 0 and self.beta == 0):
            raise ContractViolation("comm model needs alpha, beta >= 0 and not both zero")


@dataclass(frozen=True)
class BatchTrace:
    worker: int
    t: int
    completions: tuple[float, ...]

    def __post_init__(self):
        if not self.completions:
            raise ContractViolation("a trace holds at least one batch")
        if any(b <= a for a, b in zip(self.completions, self.completions[1:])):
            raise ContractViolation("completion times must be strictly increasing")

    @property
    def k(self) -> int:
        return len(self.completions)

    @property
    def finish(self) -> float:
        return self.completions[-1]


def sample_batch_time(profile: WorkerProfile, rng: RngStream) -> float:
    jitter = draw_uniform(rng, 0.0, profile.dynamic_range)
    return profile.static_time * (1.0 + jitter)


def sync_duration(comm: CommModel, n: int) -> float:
    if n < 1:
        raise ContractViolation("n must be >= 1")
    return comm.alpha + comm.beta * n


def run_compute_until_sync(
    profile: WorkerProfile,
    sync_done_at: float,
    start: float,
    rng: RngStream,
    *,
    worker: int = 0,
    t: int = 0,
    k_max: int = DEFAULT_K_MAX,
    batch_time: float | None = None,
) -> BatchTrace:
    """Compute reference batches from ``start`` until synchronisation has finished.

    The worker checks the sync state only after finishing a batch, so at
    least one batch is always computed, and a batch ending exactly at
    ``sync_done_at`` stops the loop (its gradients are kept). Elapsed time is
    accumulated from zero and compared with ``sync_done_at - start`` so the
    tie rule does not depend on the magnitude of the clock. ``batch_time``
    pins the per-batch cost for a whole iteration (per-iteration jitter);
    otherwise jitter is redrawn for every batch. ``k_max`` caps the number of
    batches.
    """
    if sync_done_at < start:
        raise ContractViolation("sync cannot finish before the iteration starts")
    window = sync_done_at - start
    elapsed = 0.0
    completions = []
    while True:
        elapsed += batch_time if batch_time is not None else sample_batch_time(profile, rng)
        completions.append(start + elapsed)
        if elapsed >= window or len(completions) >= k_max:
            break
    return BatchTrace(worker, t, tuple(completions))


def closed_form_k(window: float, batch_time: float, k_max: int = DEFAULT_K_MAX) -> int:
    """``max(1, ceil(window / batch_time))`` capped at ``k_max``, for jitter-free workers."""
    return min(k_max, max(1, math.ceil(window / batch_time)))


def iteration_span(traces, sync_done_at: float) -> float:
    """Clock value at which every worker and the synchronisation are done."""
    traces = list(traces)
    if not traces:
        raise ContractViolation("need at least one trace")
    return max(sync_done_at, max(tr.finish for tr in traces))


# name -> (static factors, dynamic range); base batch time comes from config
PRESETS: dict[str, tuple[tuple[float, ...], float]] = {
    "homogeneous": ((0.0, 0.0, 0.0, 0.0), 0.0),
    "static-1234": ((0.0, 1.0, 2.0, 3.0), 0.0),
    "dynamic-50": ((0.0, 0.0, 0.0, 0.0), 0.5),
    "both": ((0.0, 1.0, 2.0, 3.0), 0.5),
}


def preset_profiles(name: str, base_batch_time: float = 1.0) -> list[WorkerProfile]:
    try:
        factors, dyn = PRESETS[name]
    except KeyError:
        raise ContractViolation(f"unknown cluster preset {name!r}; known: {sorted(PRESETS)}") from None
    return [WorkerProfile(base_batch_time, f, dyn) for f in factors]


@dataclass
class Cluster:
    """Mutable cluster state: profiles, the global clock and per-worker timing streams.

    ``jitter`` selects whether dynamic prolongation is redrawn per reference
    batch (``"batch"``) or once per worker per iteration (``"iteration"``).
    """

    profiles: list[WorkerProfile]
    comm: CommModel
    rng: RngStream
    k_max: int = DEFAULT_K_MAX
    jitter: str = "batch"
    clock: float = 0.0
    streams: list[RngStream] = field(init=False)

    def __post_init__(self):
        if not self.profiles:
            raise ContractViolation("a cluster needs at least one worker")
        if self.jitter not in ("batch", "iteration"):
            raise ContractViolation(f"jitter must be 'batch' or 'iteration', got {self.jitter!r}")
        if self.k_max < 1:
            raise ContractViolation("k_max must be >= 1")
        self.streams = [self.rng.child(i) for i in range(len(self.profiles))]

    @property
    def n_workers(self) -> int:
        return len(self.profiles)

    def batch_time(self, worker: int) -> float:
        return sample_batch_time(self.profiles[worker], self.streams[worker])

    def compute_until_sync(self, n_params: int, t: int) -> tuple[list[BatchTrace], float]:
        """Run one overlapped iteration from the current clock.

        Returns the traces and the sync completion instant; the clock is not
        advanced here (see :meth:`advance`).
        """
        start = self.clock
        done = start + sync_duration(self.comm, n_params)
        traces = []
        for i, prof in enumerate(self.profiles):
            pinned = self.batch_time(i) if self.jitter == "iteration" else None
            traces.append(
                run_compute_until_sync(
                    prof, done, start, self.streams[i], worker=i, t=t, k_max=self.k_max, batch_time=pinned
                )
            )
        return traces, done

    def advance(self, to: float) -> None:
        if to < self.clock:
            raise ContractViolation(f"clock cannot move backwards ({self.clock} -> {to})")
        self.clock = to
