"""Seeded Monte Carlo ensembles and exact one-step drift probes.

Trajectory ``i`` of an ensemble always uses ``derive_seed(master_seed, i)``
and per-step aggregates are exact integer sums taken in index order, so an
ensemble gives bit-identical output whatever the worker count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from llp.errors import DomainError
from llp.models import Action, LoadBalancing, ModelSpec, Region, Vec2, jump_law
from llp.process import (
    DEFAULT_ENV_CAP,
    AgentSpec,
    CostKind,
    FixedAction,
    QLearning,
    QueueState,
    Schedule,
    Trajectory,
    World,
    derive_seed,
    run_trajectory,
)
from llp.renewal import ConeSpec, escaped, estimate_alpha, success_time

BENCHMARK_LOAD_BALANCING = LoadBalancing(lam=1.5, mu1=0.1, mu2=0.35, mu_tilde=10.8, p_r=0.45, p_g=0.8)
N_BATCHES = 20

SETTINGS = {
    "i": (Schedule.CONSTANT, CostKind.LOCAL_DELTA),
    "ii": (Schedule.CONSTANT, CostKind.QUEUE_TOTAL),
    "iii": (Schedule.HARMONIC, CostKind.LOCAL_DELTA),
    "iv": (Schedule.HARMONIC, CostKind.QUEUE_TOTAL),
}


def q_learning_setting(name: str, epsilon: float = 0.1, gamma: float = 0.1, step_size: float = 0.2, q0: float = 0.0) -> QLearning:
    """Q-learning agent for one of the four (step schedule, cost) combinations."""
    schedule, cost = SETTINGS[name]
    return QLearning(epsilon=epsilon, gamma=gamma, step_size=step_size, schedule=schedule, cost=cost, q0=q0)


@dataclass(frozen=True)
class ExperimentConfig:
    world: World
    agent: AgentSpec
    x0: QueueState = (0, 0)
    horizon: int = 10_000
    n_trajectories: int = 200
    master_seed: int = 0
    metrics: tuple[str, ...] = ()
    output_dir: str | None = None
    env_cap: int = DEFAULT_ENV_CAP
    probe_radius: int = 0
    probe_burn_in: int = 100
    cone_l: tuple[float, float] = (1 / math.sqrt(2), 1 / math.sqrt(2))
    success_margin: int | None = None

    def __post_init__(self):
        if self.horizon < 0:
            raise DomainError("horizon must be nonnegative")
        if self.n_trajectories < 1:
            raise DomainError("n_trajectories must be at least 1")


METRICS = ("final_state", "alpha", "escaped", "success_time")


@dataclass
class TrajectorySummary:
    index: int
    seed: int
    norms: np.ndarray
    final_state: QueueState
    alpha: float | None = None
    escaped: bool | None = None
    success_time: int | None = None
    discounted: dict = field(default_factory=dict)


@dataclass
class EnsembleResult:
    mean: np.ndarray
    se: np.ndarray
    n_trajectories: int
    summaries: list[TrajectorySummary]

    def window_mean(self, start: int, stop: int) -> float:
        return float(self.mean[start:stop].mean())

    def mean_increment(self, start: int, stop: int) -> float:
        """Average per-step growth of the mean L1 norm between two indices."""
        return float((self.mean[stop] - self.mean[start]) / (stop - start))


@dataclass
class CostCurve:
    gamma_grid: list[float]
    mean: np.ndarray
    se: np.ndarray
    ref_mean: np.ndarray
    ref_se: np.ndarray
    truncation_bound: list[float | None]


def discounted_cost(traj: Trajectory, gamma: float, kind: CostKind = CostKind.LOCAL_DELTA) -> float:
    """Finite-horizon partial sum of discounted costs along ``traj``."""
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    return _discounted(_costs(traj.states, CostKind(kind)), gamma)


def _costs(states: np.ndarray, kind: CostKind) -> np.ndarray:
    norms = states[:, 0] + states[:, 1]
    if kind is CostKind.LOCAL_DELTA:
        return np.diff(norms).astype(float)
    return norms[:-1].astype(float)


def _discounted(costs: np.ndarray, gamma: float) -> float:
    if len(costs) == 0:
        return 0.0
    return float(np.dot(np.power(gamma, np.arange(len(costs), dtype=float)), costs))


def truncation_bound(gamma: float, horizon: int, kind: CostKind) -> float | None:
    """Bound on the dropped tail ``sum_{i >= H} gamma^i c_i`` for bounded costs."""
    if kind is not CostKind.LOCAL_DELTA or gamma >= 1.0:
        return None
    return gamma**horizon / (1.0 - gamma)


def _run_one(config: ExperimentConfig, index: int, gammas: tuple, cost_kind: CostKind) -> TrajectorySummary:
    seed = derive_seed(config.master_seed, index)
    traj = run_trajectory(config.world, config.agent, config.x0, config.horizon, seed, config.env_cap)
    states = traj.states
    summary = TrajectorySummary(
        index=index,
        seed=seed,
        norms=(states[:, 0] + states[:, 1]).astype(np.int64),
        final_state=(int(states[-1, 0]), int(states[-1, 1])),
    )
    metrics = set(config.metrics)
    if "alpha" in metrics and traj.horizon > 0:
        summary.alpha = estimate_alpha(traj)[0]
    if "escaped" in metrics and config.probe_burn_in < traj.horizon:
        summary.escaped = escaped(states, config.probe_radius, config.probe_burn_in)
    if "success_time" in metrics:
        margin = config.success_margin if config.success_margin is not None else config.horizon // 10
        summary.success_time = success_time(traj, ConeSpec(Vec2(*config.cone_l)), margin)
    if gammas:
        costs = _costs(states, cost_kind)
        summary.discounted = {g: _discounted(costs, g) for g in gammas}
    return summary


def _worker(args):
    return _run_one(*args)


def thread_count(threads: int | None = None) -> int:
    """Worker count: explicit value, else ``LLP_THREADS``, else CPU count."""
    if threads is None:
        env = os.environ.get("LLP_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def _summaries(config: ExperimentConfig, threads: int | None, gammas=(), cost_kind=CostKind.LOCAL_DELTA) -> list[TrajectorySummary]:
    jobs = [(config, i, tuple(gammas), cost_kind) for i in range(config.n_trajectories)]
    workers = min(thread_count(threads), len(jobs))
    if workers <= 1:
        return [_worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, len(jobs) // (4 * workers))
        return list(pool.map(_worker, jobs, chunksize=chunk))


def _aggregate(summaries: list[TrajectorySummary]) -> tuple[np.ndarray, np.ndarray]:
    norms = np.stack([s.norms for s in sorted(summaries, key=lambda s: s.index)])
    n = norms.shape[0]
    total = norms.sum(axis=0)
    squares = (norms * norms).sum(axis=0)
    mean = total / n
    if n < 2:
        return mean, np.full_like(mean, np.nan)
    # exact integer numerator before the single float division
    var = (n * squares - total * total) / (n * (n - 1))
    return mean, np.sqrt(np.maximum(var, 0.0) / n)


def run_ensemble(config: ExperimentConfig, threads: int | None = None) -> EnsembleResult:
    summaries = _summaries(config, threads)
    mean, se = _aggregate(summaries)
    return EnsembleResult(mean, se, config.n_trajectories, summaries)


def _mean_se(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return float(values.mean()), float("nan")
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))


def cost_curve(
    config: ExperimentConfig,
    gamma_grid,
    kind: CostKind = CostKind.LOCAL_DELTA,
    threads: int | None = None,
) -> CostCurve:
    """Mean discounted cost per discount factor, for the agent and for always-green."""
    grid = sorted(float(g) for g in gamma_grid)
    for g in grid:
        if not 0.0 < g < 1.0:
            raise DomainError(f"discount factors must lie in (0, 1), got {g}")
    empty = np.empty(0)
    if not grid:
        return CostCurve([], empty, empty, empty, empty, [])
    kind = CostKind(kind)
    rows = []
    for cfg in (config, replace(config, agent=FixedAction(Action.GREEN), metrics=())):
        summaries = _summaries(cfg, threads, grid, kind)
        rows.append([_mean_se([s.discounted[g] for s in summaries]) for g in grid])
    return CostCurve(
        gamma_grid=grid,
        mean=np.array([m for m, _ in rows[0]]),
        se=np.array([s for _, s in rows[0]]),
        ref_mean=np.array([m for m, _ in rows[1]]),
        ref_se=np.array([s for _, s in rows[1]]),
        truncation_bound=[truncation_bound(g, config.horizon, kind) for g in grid],
    )


def stationary_mean(norms: np.ndarray) -> tuple[float, float | None]:
    """Time average over the second half of each row, with a batch-means SE.

    Rows are independent runs.  The retained columns are cut into 20
    contiguous batches; each batch is averaged over all rows and the SE is
    that of the 20 batch means.  Fewer than 20 retained columns give no SE.
    """
    norms = np.atleast_2d(np.asarray(norms, dtype=float))
    kept = norms[:, norms.shape[1] // 2 :] if norms.shape[1] > 1 else norms
    estimate = float(kept.mean())
    if kept.shape[1] < N_BATCHES:
        return estimate, None
    batches = np.array([b.mean() for b in np.array_split(kept, N_BATCHES, axis=1)])
    return estimate, float(batches.std(ddof=1) / math.sqrt(N_BATCHES))


def green_reference(config: ExperimentConfig, threads: int | None = None) -> tuple[float, float | None]:
    """Long-run mean of ``x1 + x2`` under always-green."""
    cfg = replace(config, agent=FixedAction(Action.GREEN), metrics=())
    summaries = sorted(_summaries(cfg, threads), key=lambda s: s.index)
    return stationary_mean(np.stack([s.norms for s in summaries]))


@dataclass
class LyapunovReport:
    feasible: bool
    c: float | None
    B: float | None
    max_f_drift: float
    interior_f_drift: float | None
    witnesses: list[QueueState]
    grid_max: int

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "c": self.c,
            "B": self.B,
            "max_f_drift": self.max_f_drift,
            "interior_f_drift": self.interior_f_drift,
            "witnesses": [list(w) for w in self.witnesses],
            "grid_max": self.grid_max,
        }


def lyapunov_probe(model: ModelSpec, v, grid_max: int, max_witnesses: int = 10) -> LyapunovReport:
    """Exact check of ``E[V(X1) - V(x)] <= -c F(x) + B`` for always-green.

    ``F(x) = <x, v>`` and ``V = F**2``.  The one-step change is
    ``2 F(x) m(x) + s(x)`` with ``m``, ``s`` the first and second moments
    of ``<xi, v>`` under the law at ``x``.  Since ``m`` and ``s`` only
    depend on the region, the inequality holds on the whole quarter
    lattice with ``c > 0`` iff ``m(x) < 0`` wherever ``F(x) > 0``; the
    largest such ``c`` is ``-2 max m`` and ``B`` is the grid maximum of
    ``E[V(X1) - V(x)] + c F(x)``.
    """
    v1, v2 = float(v[0]), float(v[1])
    if v1 < 0 or v2 < 0 or (v1 == 0 and v2 == 0):
        raise DomainError("v must be a nonzero vector with nonnegative coordinates")
    states, f_vals, changes, drifts = [], [], [], []
    for x1 in range(grid_max + 1):
        for x2 in range(grid_max + 1):
            law = jump_law(model, (x1, x2), Action.GREEN)
            f = x1 * v1 + x2 * v2
            change = sum(p * ((2 * x1 + dx) * v1 + (2 * x2 + dy) * v2) * (dx * v1 + dy * v2) for (dx, dy), p in zip(law.steps, law.probs))
            m = sum(p * (dx * v1 + dy * v2) for (dx, dy), p in zip(law.steps, law.probs))
            states.append((x1, x2))
            f_vals.append(f)
            changes.append(change)
            drifts.append(m)
    f_vals = np.array(f_vals)
    changes = np.array(changes)
    drifts = np.array(drifts)
    active = f_vals > 0
    max_m = float(drifts[active].max()) if active.any() else -math.inf
    interior = None
    if grid_max >= 1:
        law = jump_law(model, (1, 1), Action.GREEN)
        interior = sum(p * (dx * v1 + dy * v2) for (dx, dy), p in zip(law.steps, law.probs))
    bad = np.flatnonzero(active & (drifts >= 0))
    witnesses = [states[i] for i in bad[np.argsort(-f_vals[bad], kind="stable")][:max_witnesses]]
    if not active.any() or max_m >= 0:
        return LyapunovReport(False, None, None, max_m, interior, witnesses, grid_max)
    c = -2.0 * max_m
    B = float(np.max(changes + c * f_vals))
    return LyapunovReport(True, c, B, max_m, interior, [], grid_max)
