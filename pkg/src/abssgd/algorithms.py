"""Training policies driven by the simulated cluster clock.

* ``abs`` : adaptive-batch delayed synchronous SGD. Each iteration overlaps
  the synchronisation of last iteration's gradients with computation of
  new reference batches, averages the delayed gradients weighted by batch
  size, applies first-order delay compensation and updates.
* ``bsp`` : bulk-synchronous SGD with a fixed per-worker batch.
* ``dbs`` : BSP whose per-worker batch is re-split every epoch in proportion
  to the throughput measured over the previous epoch.
* ``asp`` / ``ssp`` : parameter-server style asynchronous updates, the latter
  with a bounded iteration-count lead.

Asynchronous updates step by ``lr / N`` per worker push so that one push
from every worker moves the parameters as far as one synchronous step;
with ``staleness=0`` SSP reproduces the BSP trajectory on the same batches.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from abssgd.cluster import Cluster, iteration_span, sync_duration
from abssgd.models import Dataset, Model, full_gradient, full_loss, grad_sum, sample_batch
from abssgd.numeric import ContractViolation, RngStream, axpy, digest, hadamard

POLICIES = ("abs", "bsp", "dbs", "asp", "ssp")


@dataclass(frozen=True)
class HyperParams:
    ref_batch: int = 32
    lr: float = 0.01
    lam: float = 0.5
    iterations: int = 6200
    staleness: int = 10
    dbs_epoch: int = 20

    def __post_init__(self):
        if self.ref_batch < 1 or self.iterations < 1 or self.dbs_epoch < 1:
            raise ContractViolation("ref_batch, iterations and dbs_epoch must be >= 1")
        if not self.lr > 0 or self.lam < 0 or self.staleness < 0:
            raise ContractViolation("need lr > 0, lam >= 0, staleness >= 0")


@dataclass(frozen=True)
class IterationRecord:
    t: int
    sim_time: float
    total_batch: int
    train_loss: float
    grad_norm_sq: float
    k: tuple[int, ...]


@dataclass
class Problem:
    """Objective, data and the root of the per-worker sampling streams."""

    model: Model
    data: Dataset
    rng: RngStream
    _streams: dict = field(default_factory=dict, init=False, repr=False)

    def stream(self, worker: int) -> RngStream:
        if worker not in self._streams:
            self._streams[worker] = self.rng.child(worker)
        return self._streams[worker]

    def draw(self, worker: int, size: int):
        return sample_batch(self.data, size, self.stream(worker))

    def measure(self, x: np.ndarray) -> tuple[float, float]:
        g = full_gradient(self.model, x, self.data)
        return full_loss(self.model, x, self.data), float(g @ g)


def _metrics(problem: Problem, x: np.ndarray, measure: bool) -> tuple[float, float]:
    return problem.measure(x) if measure else (float("nan"), float("nan"))


# ---------------------------------------------------------------- ABS-SGD


@dataclass(frozen=True, eq=False)
class GradientBundle:
    grad_sum: np.ndarray
    batch_size: int
    param_digest: str | None = None


def weighted_average(bundles) -> np.ndarray:
    """Sum of gradient sums divided by the total batch size."""
    bundles = list(bundles)
    total = sum(b.batch_size for b in bundles)
    if total < 1:
        raise ContractViolation("weighted average needs a positive total batch size")
    dims = {b.grad_sum.shape for b in bundles}
    if len(dims) != 1:
        raise ContractViolation(f"bundles disagree on dimension: {sorted(dims)}")
    acc = np.zeros_like(bundles[0].grad_sum)
    for b in bundles:
        acc += b.grad_sum
    return acc / total


def compensate(g_prev: np.ndarray, x_t: np.ndarray, x_prev: np.ndarray, lam: float) -> np.ndarray:
    """Delay compensation ``g + lam * g * g * (x_t - x_prev)``."""
    g_prev = np.asarray(g_prev, dtype=np.float64)
    step = axpy(-1.0, x_prev, x_t)
    return axpy(lam, hadamard(hadamard(g_prev, g_prev), step), g_prev)


@dataclass(frozen=True, eq=False)
class AbsState:
    x: np.ndarray
    x_prev: np.ndarray
    pending: tuple[GradientBundle, ...]
    t: int = 0
    consumed: tuple[str | None, ...] = ()

    @classmethod
    def initial(cls, x0: np.ndarray, n_workers: int) -> "AbsState":
        x0 = np.array(x0, dtype=np.float64)
        zero = tuple(GradientBundle(np.zeros_like(x0), 0) for _ in range(n_workers))
        return cls(x0, x0.copy(), zero, 0)


def abs_sgd_iteration(
    state: AbsState, cluster: Cluster, problem: Problem, hp: HyperParams, measure: bool = True
) -> tuple[AbsState, IterationRecord]:
    model, data = problem.model, problem.data
    traces, sync_done = cluster.compute_until_sync(model.n, state.t)

    x_digest = digest(state.x)
    fresh = []
    for tr in traces:
        acc = np.zeros(model.n)
        for _ in range(tr.k):
            acc += grad_sum(model, state.x, problem.draw(tr.worker, hp.ref_batch), data)
        fresh.append(GradientBundle(acc, tr.k * hp.ref_batch, x_digest))

    if state.t == 0:
        g_bar = np.zeros(model.n)
    else:
        g_bar = weighted_average(state.pending)
    g_tilde = compensate(g_bar, state.x, state.x_prev, hp.lam)
    x_next = axpy(-hp.lr, g_tilde, state.x)

    cluster.advance(iteration_span(traces, sync_done))
    loss_val, gn = _metrics(problem, x_next, measure)
    ks = tuple(tr.k for tr in traces)
    record = IterationRecord(state.t, cluster.clock, sum(ks) * hp.ref_batch, loss_val, gn, ks)
    new_state = AbsState(
        x_next, state.x, tuple(fresh), state.t + 1, tuple(b.param_digest for b in state.pending)
    )
    return new_state, record


# ------------------------------------------------------------- BSP / DBS


@dataclass(frozen=True, eq=False)
class SyncState:
    x: np.ndarray
    t: int = 0
    alloc: tuple[int, ...] = ()
    work: tuple[float, ...] = ()
    busy: tuple[float, ...] = ()


def bsp_iteration(
    state: SyncState,
    cluster: Cluster,
    problem: Problem,
    hp: HyperParams,
    measure: bool = True,
) -> tuple[SyncState, IterationRecord]:
    """One barrier iteration; per-worker batch sizes come from ``state.alloc`` if set.

    A worker's compute time for ``b`` samples is ``b / ref_batch`` times one
    draw of its reference-batch time.
    """
    model, data = problem.model, problem.data
    n_workers = cluster.n_workers
    alloc = state.alloc or (hp.ref_batch,) * n_workers
    if len(alloc) != n_workers:
        raise ContractViolation("allocation length differs from worker count")

    acc = np.zeros(model.n)
    times = []
    for i, b in enumerate(alloc):
        times.append(b / hp.ref_batch * cluster.batch_time(i))
        acc += grad_sum(model, state.x, problem.draw(i, b), data)
    total = sum(alloc)
    x_next = axpy(-hp.lr / total, acc, state.x)

    cluster.advance(cluster.clock + max(times) + sync_duration(cluster.comm, model.n))
    loss_val, gn = _metrics(problem, x_next, measure)
    ks = alloc if state.alloc else (1,) * n_workers
    record = IterationRecord(state.t, cluster.clock, total, loss_val, gn, tuple(ks))
    work = state.work or (0.0,) * n_workers
    busy = state.busy or (0.0,) * n_workers
    new_state = SyncState(
        x_next,
        state.t + 1,
        state.alloc,
        tuple(w + b for w, b in zip(work, alloc)),
        tuple(u + s for u, s in zip(busy, times)),
    )
    return new_state, record


def dbs_reallocate(throughputs, total_batch: int) -> tuple[int, ...]:
    """Split ``total_batch`` proportionally to throughput, every worker >= 1.

    Largest-remainder rounding; remainder ties go to the lower worker id.
    """
    w = np.asarray(throughputs, dtype=np.float64)
    n = len(w)
    if n == 0 or np.any(w <= 0):
        raise ContractViolation("throughputs must be positive")
    if total_batch < n:
        raise ContractViolation("total batch must give every worker at least one sample")
    quota = total_batch * w / w.sum()
    alloc = np.floor(quota).astype(np.int64)
    order = sorted(range(n), key=lambda i: (-(quota[i] - alloc[i]), i))
    for i in order[: total_batch - int(alloc.sum())]:
        alloc[i] += 1
    for i in range(n):
        while alloc[i] < 1:
            donor = max(range(n), key=lambda j: (alloc[j], -j))
            alloc[donor] -= 1
            alloc[i] += 1
    return tuple(int(a) for a in alloc)


def dbs_iteration(
    state: SyncState, cluster: Cluster, problem: Problem, hp: HyperParams, measure: bool = True
) -> tuple[SyncState, IterationRecord]:
    """BSP with per-epoch, throughput-proportional batch re-allocation.

    The total batch stays ``N * ref_batch``; the first epoch splits it evenly.
    """
    n_workers = cluster.n_workers
    if not state.alloc:
        state = SyncState(state.x, state.t, (hp.ref_batch,) * n_workers)
    elif state.t % hp.dbs_epoch == 0 and state.busy:
        rates = [w / b for w, b in zip(state.work, state.busy)]
        state = SyncState(state.x, state.t, dbs_reallocate(rates, n_workers * hp.ref_batch))
    return bsp_iteration(state, cluster, problem, hp, measure)


# ------------------------------------------------------------- ASP / SSP


@dataclass
class AsyncState:
    """Global parameters plus per-worker push counters and in-flight work.

    ``staleness=None`` means unbounded (ASP). ``spreads`` logs, at every
    admission decision, the lead of the most advanced computing worker
    over the slowest worker's counter.
    """

    x: np.ndarray
    counters: list[int]
    staleness: int | None = None
    updates: int = 0
    inflight: dict = field(default_factory=dict)
    blocked: list[int] = field(default_factory=list)
    events: list = field(default_factory=list)
    spreads: list[int] = field(default_factory=list)

    @classmethod
    def initial(cls, x0, n_workers: int, staleness: int | None = None) -> "AsyncState":
        return cls(np.array(x0, dtype=np.float64), [0] * n_workers, staleness)

    def spread(self) -> int:
        low = min(self.counters)
        return max((self.counters[w] for w in self.inflight), default=low) - low


def _admit(state: AsyncState, worker: int, now: float, cluster: Cluster, problem: Problem, hp: HyperParams):
    batch = problem.draw(worker, hp.ref_batch)
    state.inflight[worker] = (state.x.copy(), batch)
    done = now + cluster.batch_time(worker) + sync_duration(cluster.comm, problem.model.n)
    heapq.heappush(state.events, (done, worker))
    state.spreads.append(state.spread())


def _may_run(state: AsyncState, worker: int) -> bool:
    return state.staleness is None or state.counters[worker] - min(state.counters) <= state.staleness


def async_start(state: AsyncState, cluster: Cluster, problem: Problem, hp: HyperParams) -> None:
    """Launch every worker at the current clock."""
    for w in range(len(state.counters)):
        _admit(state, w, cluster.clock, cluster, problem, hp)


def async_step(
    state: AsyncState,
    worker: int,
    cluster: Cluster,
    problem: Problem,
    hp: HyperParams,
    measure: bool = True,
) -> IterationRecord:
    """Apply ``worker``'s finished push to the current parameters and reschedule.

    The gradient was computed at the snapshot the worker pulled when it was
    admitted, however many updates have landed since.
    """
    snapshot, batch = state.inflight.pop(worker)
    n_workers = len(state.counters)
    g = grad_sum(problem.model, snapshot, batch, problem.data)
    state.x = axpy(-hp.lr / (n_workers * batch.size), g, state.x)
    state.counters[worker] += 1
    state.updates += 1
    now = cluster.clock

    state.blocked.append(worker)
    waiting = sorted(state.blocked)
    state.blocked = []
    for w in waiting:
        if _may_run(state, w):
            _admit(state, w, now, cluster, problem, hp)
        else:
            state.blocked.append(w)

    loss_val, gn = _metrics(problem, state.x, measure)
    ks = tuple(1 if w == worker else 0 for w in range(n_workers))
    return IterationRecord(state.updates - 1, now, batch.size, loss_val, gn, ks)


def next_event(state: AsyncState, cluster: Cluster) -> int:
    """Pop the earliest completion (ties by worker id) and move the clock there."""
    if not state.events:
        raise ContractViolation("no worker is running; the staleness rule deadlocked")
    when, worker = heapq.heappop(state.events)
    cluster.advance(when)
    return worker


def asp_step(state, worker, cluster, problem, hp, measure=True) -> IterationRecord:
    if state.staleness is not None:
        raise ContractViolation("ASP state must have unbounded staleness")
    return async_step(state, worker, cluster, problem, hp, measure)


def ssp_step(state, worker, cluster, problem, hp, measure=True) -> IterationRecord:
    if state.staleness is None:
        raise ContractViolation("SSP state needs a staleness threshold")
    return async_step(state, worker, cluster, problem, hp, measure)


# ---------------------------------------------------------------- drivers


class PolicyRun:
    """Step-by-step driver for one policy on one cluster.

    ``step()`` advances one synchronous iteration, or one push for the
    asynchronous policies, and returns its record. ``state`` is the policy
    state after the last step.
    """

    def __init__(self, policy: str, x0, cluster: Cluster, problem: Problem, hp: HyperParams):
        if policy not in POLICIES:
            raise ContractViolation(f"unknown policy {policy!r}; expected one of {POLICIES}")
        self.policy = policy
        self.cluster = cluster
        self.problem = problem
        self.hp = hp
        n = cluster.n_workers
        if policy in ("asp", "ssp"):
            self.state = AsyncState.initial(x0, n, None if policy == "asp" else hp.staleness)
            async_start(self.state, cluster, problem, hp)
        elif policy == "abs":
            self.state = AbsState.initial(x0, n)
        else:
            self.state = SyncState(np.array(x0, dtype=np.float64))

    @property
    def params(self) -> np.ndarray:
        return self.state.x

    def step(self, measure: bool = True) -> IterationRecord:
        if self.policy in ("asp", "ssp"):
            worker = next_event(self.state, self.cluster)
            fn = asp_step if self.policy == "asp" else ssp_step
            return fn(self.state, worker, self.cluster, self.problem, self.hp, measure)
        fn = {"abs": abs_sgd_iteration, "bsp": bsp_iteration, "dbs": dbs_iteration}[self.policy]
        self.state, rec = fn(self.state, self.cluster, self.problem, self.hp, measure)
        return rec
