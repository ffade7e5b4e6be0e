"""Local learning processes on two-queue worlds.

A local learning process keeps a pair of numbers per visited state (the
*environment*), picks an action from the pair stored at the current state,
moves according to the world's jump law and then rewrites only the entry
of the (state, action) pair it just used.  Epsilon-greedy asynchronous
Q-learning is the main instance; fixed-action and coin-flipping agents are
included as baselines whose long-run behaviour is known in closed form.

Randomness: each trajectory owns one PCG64 generator seeded from a 64-bit
integer.  Step ``n`` consumes two uniforms, ``u[n, 0]`` for the decision
and ``u[n, 1]`` for the jump, drawn in that order.  :func:`derive_seed`
maps ``(master_seed, index)`` to per-trajectory seeds through
:class:`numpy.random.SeedSequence`, so ensembles are reproducible
regardless of how trajectories are scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Union

import numpy as np

from llp.errors import DomainError, EnvironmentOverflowError, ParameterError
from llp.models import Action, ModelSpec, QueueState, Region, free_jump_law, jump_law, region_of, sample_step

DEFAULT_ENV_CAP = 10**7


class CostKind(Enum):
    LOCAL_DELTA = "local_delta"  # (y1 - x1) + (y2 - x2)
    QUEUE_TOTAL = "queue_total"  # x1 + x2


class Greedy(Enum):
    ARGMIN = "argmin"
    ARGMAX = "argmax"  # literal reading of the decision rule


class Schedule(Enum):
    CONSTANT = "constant"
    HARMONIC = "harmonic"


class HarmonicIndex(Enum):
    GLOBAL = "global"  # delta_n = 1/(n+1), n the global step
    VISIT = "visit"  # delta = 1/(k+1), k prior updates of the (state, action) pair


@dataclass(frozen=True)
class QLearning:
    epsilon: float = 0.1
    gamma: float = 0.1
    step_size: float = 0.2
    schedule: Schedule = Schedule.CONSTANT
    harmonic_index: HarmonicIndex = HarmonicIndex.GLOBAL
    cost: CostKind = CostKind.LOCAL_DELTA
    q0: float = 0.0
    greedy: Greedy = Greedy.ARGMIN

    kind = "q_learning"

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ParameterError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not 0.0 < self.gamma <= 1.0:
            raise ParameterError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.step_size <= 1.0:
            raise ParameterError(f"step_size must lie in [0, 1], got {self.step_size}")
        for name, enum in (("schedule", Schedule), ("harmonic_index", HarmonicIndex), ("cost", CostKind), ("greedy", Greedy)):
            object.__setattr__(self, name, enum(getattr(self, name)))


@dataclass(frozen=True)
class FixedAction:
    action: Action

    kind = "fixed"

    def __post_init__(self):
        object.__setattr__(self, "action", Action.parse(self.action))


@dataclass(frozen=True)
class Coin:
    """Plays red with probability ``q`` at every step, ignoring the environment."""

    q: float

    kind = "coin"

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ParameterError(f"q must lie in [0, 1], got {self.q}")


AgentSpec = Union[QLearning, FixedAction, Coin]


@dataclass(frozen=True)
class World:
    model: ModelSpec
    free: bool = False

    def law(self, state: QueueState, action: Action):
        if self.free:
            return free_jump_law(self.model, action)
        return jump_law(self.model, state, action)

    def check_state(self, state: QueueState) -> None:
        if not self.free:
            region_of(state)


class Environment:
    """Sparse per-state value pairs; unvisited states read as ``default``."""

    def __init__(self, default: tuple[float, float] = (0.0, 0.0), cap: int = DEFAULT_ENV_CAP):
        self.default = (float(default[0]), float(default[1]))
        self.cap = cap
        self.table: dict[QueueState, list[float]] = {}
        self.visits: dict[tuple[QueueState, int], int] = {}

    def __contains__(self, state) -> bool:
        return tuple(state) in self.table

    def __len__(self) -> int:
        return len(self.table)

    def values(self, state: QueueState) -> tuple[float, float]:
        entry = self.table.get(tuple(state))
        return self.default if entry is None else (entry[0], entry[1])

    def touch(self, state: QueueState) -> list[float]:
        """Return the mutable entry for ``state``, creating it on first visit."""
        state = tuple(state)
        entry = self.table.get(state)
        if entry is None:
            if len(self.table) >= self.cap:
                raise EnvironmentOverflowError(f"environment table exceeded {self.cap} entries")
            entry = [self.default[0], self.default[1]]
            self.table[state] = entry
        return entry


@dataclass(frozen=True)
class StepRecord:
    n: int
    state: QueueState
    action: Action
    next_state: QueueState
    cost: float
    first_visit: bool


def _red_probs(epsilon: float) -> tuple[float, float, float]:
    """Red probability when red is the unique greedy action, tied, or not greedy."""
    return (1.0 - epsilon) + epsilon / 2, (1.0 - epsilon) / 2 + epsilon / 2, epsilon / 2


def red_probability(agent: AgentSpec, values: tuple[float, float]) -> float:
    if isinstance(agent, Coin):
        return agent.q
    if isinstance(agent, FixedAction):
        return 1.0 if agent.action is Action.RED else 0.0
    p_greedy, p_tie, p_other = _red_probs(agent.epsilon)
    red, green = values
    if red == green:
        return p_tie
    red_better = red < green if agent.greedy is Greedy.ARGMIN else red > green
    return p_greedy if red_better else p_other


def decide(agent: AgentSpec, values: tuple[float, float], u: float) -> Action:
    """Red iff ``u`` falls below the agent's red probability at ``values``."""
    if isinstance(agent, FixedAction):
        return agent.action
    return Action.RED if u < red_probability(agent, values) else Action.GREEN


def transition_cost(kind: CostKind, x: QueueState, y: QueueState) -> float:
    if CostKind(kind) is CostKind.LOCAL_DELTA:
        return float((y[0] - x[0]) + (y[1] - x[1]))
    return float(x[0] + x[1])


def agent_cost_kind(agent: AgentSpec) -> CostKind:
    return agent.cost if isinstance(agent, QLearning) else CostKind.LOCAL_DELTA


def _step_size(agent: QLearning, env: Environment, state, action: int, n: int) -> float:
    if agent.schedule is Schedule.CONSTANT:
        return agent.step_size
    if agent.harmonic_index is HarmonicIndex.GLOBAL:
        return 1.0 / (n + 1)
    return 1.0 / (env.visits.get((state, action), 0) + 1)


def update_env(agent: AgentSpec, env: Environment, rec: StepRecord) -> Environment:
    """Apply the agent's update for ``rec`` in place and return ``env``.

    Only the entry at ``(rec.state, rec.action)`` changes.  Baseline agents
    leave every value untouched.
    """
    if not isinstance(agent, QLearning):
        return env
    state, a = tuple(rec.state), int(rec.action)
    nxt = env.values(rec.next_state)
    delta = _step_size(agent, env, state, a, rec.n)
    entry = env.touch(state)
    m = nxt[0] if nxt[0] < nxt[1] else nxt[1]
    entry[a] = (1.0 - delta) * entry[a] + delta * (rec.cost + agent.gamma * m)
    if agent.schedule is Schedule.HARMONIC and agent.harmonic_index is HarmonicIndex.VISIT:
        env.visits[(state, a)] = env.visits.get((state, a), 0) + 1
    return env


def llp_step(world: World, agent: AgentSpec, state: QueueState, env: Environment, n: int, rng: np.random.Generator):
    """One decide / move / update cycle; returns ``(record, env, next_state)``."""
    state = (int(state[0]), int(state[1]))
    world.check_state(state)
    u_action, u_jump = rng.random(2)
    first = state not in env
    values = env.values(state)
    action = decide(agent, values, u_action)
    dx, dy = sample_step(world.law(state, action), u_jump)
    nxt = (state[0] + dx, state[1] + dy)
    rec = StepRecord(n, state, action, nxt, transition_cost(agent_cost_kind(agent), state, nxt), first)
    env.touch(state)
    update_env(agent, env, rec)
    return rec, env, nxt


@dataclass
class Trajectory:
    """Columnar record of one run; ``states`` has one more row than the others."""

    x0: QueueState
    states: np.ndarray
    actions: np.ndarray
    costs: np.ndarray
    first_visit: np.ndarray
    seed: int | None = None
    agent: AgentSpec | None = None
    world: World | None = None
    environment: Environment | None = field(default=None, repr=False, compare=False)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def norms(self) -> np.ndarray:
        return self.states[:, 0] + self.states[:, 1]

    @property
    def steps(self) -> Iterator[StepRecord]:
        for n in range(self.horizon):
            yield StepRecord(
                n,
                (int(self.states[n, 0]), int(self.states[n, 1])),
                Action(int(self.actions[n])),
                (int(self.states[n + 1, 0]), int(self.states[n + 1, 1])),
                float(self.costs[n]),
                bool(self.first_visit[n]),
            )

    def same_path(self, other: "Trajectory") -> bool:
        return (
            np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.costs, other.costs)
            and np.array_equal(self.first_visit, other.first_visit)
        )


def derive_seed(master_seed: int, index: int) -> int:
    """Per-trajectory 64-bit seed mixed from ``(master_seed, index)``."""
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _compiled_laws(world: World):
    """``table[region_code][action]`` -> tuple of ``(threshold, dx, dy)``.

    Region code is ``(x1 > 0) + 2 * (x2 > 0)``.  Thresholds replay
    :func:`llp.models.sample_step` exactly: zero-mass entries are dropped and
    the last threshold is widened to cover the rounding gap below 1.
    """
    regions = {0: Region.ORIGIN, 1: Region.X_EDGE, 2: Region.Y_EDGE, 3: Region.INTERIOR}
    table = []
    for code in range(4):
        region = Region.INTERIOR if world.free else regions[code]
        per_action = []
        for action in Action:
            law = world.model.law(region, action)
            entries, acc = [], 0.0
            for (dx, dy), p in zip(law.steps, law.probs):
                if p <= 0.0:
                    continue
                acc += p
                entries.append([acc, dx, dy])
            entries[-1][0] = float("inf")
            per_action.append(tuple(tuple(e) for e in entries))
        table.append(tuple(per_action))
    return tuple(table)


def run_trajectory(
    world: World,
    agent: AgentSpec,
    x0: QueueState,
    horizon: int,
    seed: int,
    env_cap: int = DEFAULT_ENV_CAP,
) -> Trajectory:
    """Simulate ``horizon`` steps from ``x0`` with a fresh environment.

    Produces the same path as iterating :func:`llp_step` with a generator
    seeded by ``seed``; this loop is the inlined fast version.
    """
    if horizon < 0:
        raise DomainError("horizon must be nonnegative")
    x1, x2 = int(x0[0]), int(x0[1])
    world.check_state((x1, x2))
    rng = np.random.default_rng(seed)
    uniforms = rng.random((horizon, 2)).tolist()
    laws = _compiled_laws(world)
    free = world.free

    is_q = isinstance(agent, QLearning)
    default = (agent.q0, agent.q0) if is_q else (0.0, 0.0)
    env = Environment(default, env_cap)
    table = env.table
    visits = env.visits
    if is_q:
        p_greedy, p_tie, p_other = _red_probs(agent.epsilon)
        argmin = agent.greedy is Greedy.ARGMIN
        gamma = agent.gamma
        constant = agent.schedule is Schedule.CONSTANT
        by_visit = not constant and agent.harmonic_index is HarmonicIndex.VISIT
        step_size = agent.step_size
        local_cost = agent.cost is CostKind.LOCAL_DELTA
    else:
        local_cost = True
        coin_q = agent.q if isinstance(agent, Coin) else None
        fixed = int(agent.action) if isinstance(agent, FixedAction) else 0

    xs1 = [x1]
    xs2 = [x2]
    actions = bytearray(horizon)
    first_visit = bytearray(horizon)
    costs = [0.0] * horizon
    d0, d1 = default
    cap = env_cap

    for n in range(horizon):
        u_a, u_j = uniforms[n]
        key = (x1, x2)
        entry = table.get(key)
        if entry is None:
            if len(table) >= cap:
                raise EnvironmentOverflowError(f"environment table exceeded {cap} entries")
            entry = [d0, d1]
            table[key] = entry
            first_visit[n] = 1
        if is_q:
            qr = entry[0]
            qg = entry[1]
            if qr == qg:
                pr = p_tie
            elif (qr < qg) == argmin:
                pr = p_greedy
            else:
                pr = p_other
            a = 0 if u_a < pr else 1
        elif coin_q is not None:
            a = 0 if u_a < coin_q else 1
        else:
            a = fixed

        code = 3 if free else (x1 > 0) + 2 * (x2 > 0)
        for threshold, dx, dy in laws[code][a]:
            if u_j < threshold:
                break
        y1 = x1 + dx
        y2 = x2 + dy
        cost = float(dx + dy) if local_cost else float(x1 + x2)

        if is_q:
            nxt = table.get((y1, y2))
            if nxt is None:
                m = d0 if d0 < d1 else d1
            else:
                m = nxt[0] if nxt[0] < nxt[1] else nxt[1]
            if constant:
                delta = step_size
            elif by_visit:
                k = visits.get((key, a), 0)
                delta = 1.0 / (k + 1)
                visits[(key, a)] = k + 1
            else:
                delta = 1.0 / (n + 1)
            entry[a] = (1.0 - delta) * entry[a] + delta * (cost + gamma * m)

        actions[n] = a
        costs[n] = cost
        x1 = y1
        x2 = y2
        xs1.append(x1)
        xs2.append(x2)

    states = np.empty((horizon + 1, 2), dtype=np.int64)
    states[:, 0] = xs1
    states[:, 1] = xs2
    return Trajectory(
        x0=(int(x0[0]), int(x0[1])),
        states=states,
        actions=np.frombuffer(bytes(actions), dtype=np.int8).copy(),
        costs=np.asarray(costs, dtype=np.float64),
        first_visit=np.frombuffer(bytes(first_visit), dtype=np.bool_).copy(),
        seed=seed,
        agent=agent,
        world=world,
        environment=env,
    )
