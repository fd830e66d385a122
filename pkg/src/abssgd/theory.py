"""Convergence-analysis formulas and their empirical counterparts.

Notation: ``delta`` is ``f(x_1) - f(x*)``, ``K`` the batch-size envelope in
units of the reference batch, ``M_r`` the reference batch size.

The analysis writes the update as ``x_{t+1} = x_t - gamma_t * sum_m g_m``
over the ``M_t`` samples of the (delayed) batch, whereas the algorithm
steps by ``lr`` times the batch *mean*. A run with learning rate ``lr``
therefore corresponds to ``gamma_t = lr / M_t``; :func:`trajectory_from_records`
performs that conversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from abssgd.numeric import ContractViolation


@dataclass(frozen=True)
class TheoryParams:
    L: float
    sigma_sq: float
    delta: float
    N: int
    K: float
    M_r: int
    T: int
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("L", "sigma_sq", "delta", "N", "K", "M_r", "T"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be positive, got {getattr(self, name)}")
        if self.gamma < 0:
            raise ContractViolation("gamma must be >= 0")
        if self.K < self.N:
            raise ContractViolation(f"K={self.K} is below the worker count N={self.N}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_sq)

    @property
    def envelope(self) -> float:
        """``K * M_r``, the largest per-iteration batch."""
        return self.K * self.M_r


@dataclass(frozen=True)
class TrajectoryStats:
    gammas: tuple[float, ...]
    batch_sizes: tuple[int, ...]
    grad_norms_sq: tuple[float, ...]

    def __post_init__(self):
        n = len(self.gammas)
        if len(self.batch_sizes) != n or len(self.grad_norms_sq) != n:
            raise ContractViolation("trajectory columns differ in length")
        vals = np.asarray(self.gammas + self.grad_norms_sq, dtype=np.float64)
        if not np.all(np.isfinite(vals)) or min(self.grad_norms_sq, default=0.0) < 0:
            raise ContractViolation("trajectory entries must be finite with non-negative norms")

    def __len__(self):
        return len(self.gammas)


def check_lr_condition(gamma: float, L: float, M: float) -> bool:
    """``gamma^2 L M^2 + L gamma M <= 1``."""
    if not L > 0 or M < 1 or gamma < 0:
        raise ContractViolation("need L > 0, M >= 1, gamma >= 0")
    return gamma * gamma * L * M * M + L * gamma * M <= 1.0


def max_feasible_gamma(L: float, M: float) -> float:
    """Positive root of ``L M^2 g^2 + L M g - 1``; the largest step passing :func:`check_lr_condition`."""
    a, b = L * M * M, L * M
    return (-b + math.sqrt(b * b + 4 * a)) / (2 * a)


def corollary2_gamma(p: TheoryParams) -> float:
    """Constant step ``sqrt(delta / (K M_r L T sigma^2))``."""
    return math.sqrt(p.delta / (p.envelope * p.L * p.T * p.sigma_sq))


def min_iterations(p: TheoryParams) -> int:
    """Smallest integer ``T >= delta K M_r / (9 sigma^2 L)``, at least 1."""
    return max(1, math.ceil(p.delta * p.envelope / (9.0 * p.sigma_sq * p.L)))


def rate_bound(p: TheoryParams) -> float:
    """``6 sigma sqrt(delta L / (T K M_r))``, the constant-step ergodic rate."""
    return 6.0 * p.sigma * math.sqrt(p.delta * p.L / (p.T * p.envelope))


def ergodic_criterion(stats: TrajectoryStats) -> float:
    """Step-weighted mean of the squared full-gradient norms."""
    if len(stats) == 0:
        raise ContractViolation("empty trajectory")
    g = np.asarray(stats.gammas, dtype=np.float64)
    total = g.sum()
    if not total > 0:
        raise ContractViolation("step sizes sum to zero")
    return float(g @ np.asarray(stats.grad_norms_sq, dtype=np.float64) / total)


def theorem1_bound(p: TheoryParams, gammas, strict: bool = True) -> float:
    """Right-hand side of the ergodic bound for the step sequence ``gammas``.

    Each step must satisfy the step-size condition with ``M = K M_r``;
    outside that region the bound says nothing, so ``strict`` raises.
    """
    g = np.asarray(list(gammas), dtype=np.float64)
    if g.size == 0 or np.any(g <= 0):
        raise ContractViolation("need a non-empty sequence of positive steps")
    if strict:
        bad = [float(x) for x in g if not check_lr_condition(float(x), p.L, p.envelope)]
        if bad:
            raise ContractViolation(
                f"{len(bad)} step(s) violate gamma^2 L M^2 + L gamma M <= 1 with M = K M_r (first: {bad[0]:.3e})"
            )
    km = p.envelope
    num = float(np.sum(km * g**3 * p.L * p.sigma_sq + p.L * g**2 * p.sigma_sq)) + 2.0 * p.delta / km
    return num / float(g.sum())


@dataclass(frozen=True)
class BoundReport:
    criterion: float
    bound: float
    satisfied: bool
    feasible: bool
    K: float
    L: float
    sigma_sq: float
    delta: float
    T: int

    def as_text(self) -> str:
        """Flat ``key=value`` block, one pair per line."""
        lines = [f"theory.{k}={_fmt(v)}" for k, v in self.__dict__.items()]
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def verify_bound(run: TrajectoryStats, p: TheoryParams) -> BoundReport:
    """Compare a run's ergodic criterion with the bound, reporting rather than raising.

    ``K`` is taken as the largest observed ``M_t / M_r`` (at least ``N``)
    and ``T`` as the trajectory length; the other constants come from ``p``.
    """
    k_obs = max(max(run.batch_sizes) / p.M_r, p.N)
    params = TheoryParams(p.L, p.sigma_sq, p.delta, p.N, k_obs, p.M_r, len(run), p.gamma)
    crit = ergodic_criterion(run)
    feasible = all(check_lr_condition(g, params.L, params.envelope) for g in run.gammas)
    bound = theorem1_bound(params, run.gammas, strict=False)
    return BoundReport(crit, bound, crit <= bound, feasible, k_obs, p.L, p.sigma_sq, p.delta, len(run))


def trajectory_from_records(records, lr: float) -> TrajectoryStats:
    """Build analysis-side statistics from an ABS run.

    Record ``t`` holds the batch computed during iteration ``t`` (consumed at
    ``t + 1``) and the gradient norm at ``x_{t+1}``. The analysis indexes
    from the first real update: for ``t >= 1`` the step uses ``M_t`` = batch
    computed at ``t - 1`` and ``gamma_t = lr / M_t``, measured at ``x_t``,
    i.e. the norm stored in record ``t - 1``.
    """
    recs = list(records)
    if len(recs) < 2:
        raise ContractViolation("need at least two iterations")
    batches = tuple(r.total_batch for r in recs[:-1])
    norms = tuple(r.grad_norm_sq for r in recs[:-1])
    gammas = tuple(lr / m for m in batches)
    return TrajectoryStats(gammas, batches, norms)


@dataclass(frozen=True)
class GridRow:
    params: TheoryParams
    gamma: float
    bound: float
    rate: float
    consistent: bool
    feasible: bool


def formula_grid(grid=None, slack: float = 1e-9) -> list[GridRow]:
    """Evaluate the constant-step corollary over a parameter grid.

    Each point uses ``T = max(T_grid, min_iterations)`` and the corollary's
    step. ``consistent`` is ``bound <= rate + slack``; ``feasible`` records
    whether that step also meets the step-size condition at ``M = K M_r``,
    which the corollary does not guarantee.
    """
    rows = []
    for p in grid if grid is not None else default_grid():
        p = _with_min_T(p)
        gamma = corollary2_gamma(p)
        bound = theorem1_bound(p, [gamma] * p.T, strict=False)
        rate = rate_bound(p)
        rows.append(
            GridRow(p, gamma, bound, rate, bound <= rate + slack, check_lr_condition(gamma, p.L, p.envelope))
        )
    return rows


def _with_min_T(p: TheoryParams) -> TheoryParams:
    t_min = min_iterations(p)
    if p.T >= t_min:
        return p
    return TheoryParams(p.L, p.sigma_sq, p.delta, p.N, p.K, p.M_r, t_min, p.gamma)


def default_grid() -> list[TheoryParams]:
    """Ten points spanning smoothness, noise, suboptimality and envelope size."""
    combos = [
        (1.0, 1.0, 1.0, 4, 4, 32, 1000),
        (0.25, 0.5, 0.3, 4, 8, 32, 500),
        (10.0, 2.0, 5.0, 4, 16, 32, 10_000),
        (0.1, 0.01, 2.0, 2, 2, 16, 100),
        (3.0, 4.0, 0.7, 8, 8, 64, 6200),
        (1.0, 0.1, 9.0, 4, 4, 32, 10),
        (50.0, 10.0, 1.0, 4, 12, 32, 2000),
        (0.5, 1e-3, 0.05, 4, 25, 32, 1),
        (2.0, 0.5, 20.0, 16, 64, 8, 300),
        (1.0, 1.0, 1e-3, 1, 1, 1, 50),
    ]
    return [TheoryParams(L, s2, d, n, k, m, t) for L, s2, d, n, k, m, t in combos]

