"""Embedded-chain transition laws for two-queue decision processes.

Every model here is the jump chain of a continuous-time queueing system on
the quarter lattice.  A state is a pair ``(x1, x2)`` of queue lengths, the
agent picks between two actions (red or green) and the chain moves by one
unit step.  The law of the step depends only on the action and on which
boundary region of the quarter lattice the state sits in, which is what
makes the "free" relaxation on the full lattice well defined.

Three families are provided:

* :class:`LoadBalancing` -- a dispatcher routes arrivals to queue 1 with
  probability ``p_r`` or ``p_g``.
* :class:`ServerAllocation` -- a single server chooses which of two queues to
  serve.
* :class:`CustomModel` -- arbitrary per-region, per-action unit-step laws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Mapping, NamedTuple, Union

from llp.errors import DomainError, ParameterError

PROB_TOL = 1e-12

E1 = (1, 0)
E2 = (0, 1)
NEG_E1 = (-1, 0)
NEG_E2 = (0, -1)
# Canonical entry order; inverse-CDF sampling walks entries in this order.
UNIT_STEPS = (E1, E2, NEG_E1, NEG_E2)
STEP_LABELS = {E1: "+e1", E2: "+e2", NEG_E1: "-e1", NEG_E2: "-e2"}
LABEL_STEPS = {v: k for k, v in STEP_LABELS.items()}

QueueState = tuple[int, int]


class Action(IntEnum):
    RED = 0
    GREEN = 1

    @property
    def label(self) -> str:
        return "r" if self is Action.RED else "g"

    @classmethod
    def parse(cls, value) -> "Action":
        if isinstance(value, Action):
            return value
        key = str(value).strip().lower()
        if key in ("r", "red", "0"):
            return cls.RED
        if key in ("g", "green", "1"):
            return cls.GREEN
        raise ParameterError(f"unknown action {value!r}")


class Region(Enum):
    INTERIOR = "interior"
    X_EDGE = "x_edge"  # x1 > 0, x2 = 0
    Y_EDGE = "y_edge"  # x1 = 0, x2 > 0
    ORIGIN = "origin"


class Vec2(NamedTuple):
    x1: float
    x2: float

    def dot(self, other) -> float:
        return self.x1 * other[0] + self.x2 * other[1]

    def norm(self) -> float:
        return math.hypot(self.x1, self.x2)

    def __sub__(self, other):  # type: ignore[override]
        return Vec2(self.x1 - other[0], self.x2 - other[1])


def region_of(state: QueueState) -> Region:
    x1, x2 = state
    if x1 < 0 or x2 < 0:
        raise DomainError(f"state {state} lies outside the quarter lattice")
    if x1 > 0:
        return Region.INTERIOR if x2 > 0 else Region.X_EDGE
    return Region.Y_EDGE if x2 > 0 else Region.ORIGIN


# steps that would leave the quarter lattice from each region
_FORBIDDEN = {
    Region.INTERIOR: frozenset(),
    Region.X_EDGE: frozenset({NEG_E2}),
    Region.Y_EDGE: frozenset({NEG_E1}),
    Region.ORIGIN: frozenset({NEG_E1, NEG_E2}),
}


@dataclass(frozen=True)
class JumpLaw:
    """Finite distribution over lattice steps, entries kept in insertion order."""

    steps: tuple[tuple[int, int], ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.steps) != len(self.probs) or not self.steps:
            raise ParameterError("a jump law needs one probability per step")
        if len(set(self.steps)) != len(self.steps):
            raise ParameterError(f"duplicate steps in jump law: {self.steps}")
        for p in self.probs:
            if not (0.0 <= p <= 1.0) or math.isnan(p):
                raise ParameterError(f"probability {p} outside [0, 1]")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > PROB_TOL:
            raise ParameterError(f"jump law probabilities sum to {total!r}, not 1")

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "JumpLaw":
        """Build a law from ``{step: prob}``; unit steps are put in canonical order.

        Keys may be integer pairs or the labels ``"+e1"``, ``"-e2"`` and so on.
        """
        entries = {}
        for key, prob in mapping.items():
            step = LABEL_STEPS[key] if isinstance(key, str) else tuple(int(c) for c in key)
            entries[step] = float(prob)
        order = [s for s in UNIT_STEPS if s in entries]
        order += sorted(s for s in entries if s not in UNIT_STEPS)
        return cls(tuple(order), tuple(entries[s] for s in order))

    def as_dict(self) -> dict:
        return dict(zip(self.steps, self.probs))

    def to_json(self) -> dict:
        return {STEP_LABELS.get(s, f"{s[0]},{s[1]}"): p for s, p in zip(self.steps, self.probs)}

    def prob(self, step) -> float:
        return self.as_dict().get(tuple(step), 0.0)

    def support(self) -> tuple[tuple[int, int], ...]:
        return tuple(s for s, p in zip(self.steps, self.probs) if p > 0.0)

    def cumulative(self) -> tuple[float, ...]:
        out, acc = [], 0.0
        for p in self.probs:
            acc += p
            out.append(acc)
        return tuple(out)


def drift(law: JumpLaw) -> Vec2:
    """Mean jump vector of ``law``."""
    return Vec2(
        math.fsum(s[0] * p for s, p in zip(law.steps, law.probs)),
        math.fsum(s[1] * p for s, p in zip(law.steps, law.probs)),
    )


def sample_step(law: JumpLaw, u: float) -> tuple[int, int]:
    """Inverse-CDF draw: the first entry whose cumulative mass exceeds ``u``."""
    acc = 0.0
    last = None
    for step, p in zip(law.steps, law.probs):
        if p <= 0.0:
            continue
        acc += p
        last = step
        if u < acc:
            return step
    # u fell into the rounding gap above the last cumulative value
    return last


def _check_rate(name: str, value: float) -> None:
    if not (value > 0.0) or math.isinf(value):
        raise ParameterError(f"{name} must be a positive finite rate, got {value}")


def _check_prob(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise ParameterError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class LoadBalancing:
    """Dispatcher example: arrivals at rate ``lam`` go to queue 1 w.p. ``p_a``."""

    lam: float
    mu1: float
    mu2: float
    mu_tilde: float
    p_r: float
    p_g: float

    kind = "load_balancing"

    def __post_init__(self):
        for name in ("lam", "mu1", "mu2", "mu_tilde"):
            _check_rate(name, getattr(self, name))
        _check_prob("p_r", self.p_r)
        _check_prob("p_g", self.p_g)

    def routing(self, action: Action) -> float:
        return self.p_r if action is Action.RED else self.p_g

    def law(self, region: Region, action: Action) -> JumpLaw:
        lam, p = self.lam, self.routing(Action(action))
        if region is Region.INTERIOR:
            total = lam + self.mu1 + self.mu2
            return JumpLaw(
                UNIT_STEPS,
                (lam * p / total, lam * (1 - p) / total, self.mu1 / total, self.mu2 / total),
            )
        if region is Region.ORIGIN:
            return JumpLaw((E1, E2), (p, 1 - p))
        total = lam + self.mu_tilde
        served = NEG_E1 if region is Region.X_EDGE else NEG_E2
        return JumpLaw((E1, E2, served), (lam * p / total, lam * (1 - p) / total, self.mu_tilde / total))


@dataclass(frozen=True)
class ServerAllocation:
    """Single server, two job classes arriving at rate ``lam`` each.

    Red serves queue 1 and green serves queue 2 when both are busy; on an
    edge the nonempty queue is served at rate ``mu_tilde``.  The origin law
    is ``(1/2, 1/2)`` since both arrival streams share the same rate.
    """

    lam: float
    mu: float
    mu_tilde: float

    kind = "server_allocation"

    def __post_init__(self):
        for name in ("lam", "mu", "mu_tilde"):
            _check_rate(name, getattr(self, name))

    def law(self, region: Region, action: Action) -> JumpLaw:
        lam = self.lam
        if region is Region.ORIGIN:
            return JumpLaw((E1, E2), (0.5, 0.5))
        if region is Region.INTERIOR:
            rate = self.mu
            served = NEG_E1 if Action(action) is Action.RED else NEG_E2
        else:
            rate = self.mu_tilde
            served = NEG_E1 if region is Region.X_EDGE else NEG_E2
        total = 2 * lam + rate
        return JumpLaw((E1, E2, served), (lam / total, lam / total, rate / total))


@dataclass(frozen=True)
class CustomModel:
    """User-supplied laws, each a pair indexed by :class:`Action` (red, green)."""

    interior: tuple[JumpLaw, JumpLaw]
    x_edge: tuple[JumpLaw, JumpLaw]
    y_edge: tuple[JumpLaw, JumpLaw]
    origin: tuple[JumpLaw, JumpLaw]

    kind = "custom"

    def __post_init__(self):
        for region in Region:
            laws = self._laws(region)
            if len(laws) != 2:
                raise ParameterError(f"{region.value}: need one law per action")
            for law in laws:
                bad = [s for s in law.support() if s not in UNIT_STEPS]
                if bad:
                    raise ParameterError(f"{region.value}: non-unit steps {bad}")
                exits = [s for s in law.support() if s in _FORBIDDEN[region]]
                if exits:
                    raise ParameterError(f"{region.value}: steps {exits} leave the quarter lattice")

    def _laws(self, region: Region) -> tuple[JumpLaw, JumpLaw]:
        return getattr(self, region.value)

    def law(self, region: Region, action: Action) -> JumpLaw:
        return self._laws(region)[int(action)]


ModelSpec = Union[LoadBalancing, ServerAllocation, CustomModel]


def jump_law(model: ModelSpec, state: QueueState, action: Action) -> JumpLaw:
    """Law of ``X_{n+1} - X_n`` given ``X_n = state`` and ``A_n = action``."""
    return model.law(region_of(state), Action(action))


def free_jump_law(model: ModelSpec, action: Action) -> JumpLaw:
    """Interior law, used everywhere on the full lattice by free worlds."""
    return model.law(Region.INTERIOR, Action(action))


def region_drifts(model: ModelSpec, action: Action) -> tuple[Vec2, Vec2, Vec2]:
    """Drifts ``(interior, x-edge, y-edge)`` of the laws for ``action``."""
    return tuple(drift(model.law(r, Action(action))) for r in (Region.INTERIOR, Region.X_EDGE, Region.Y_EDGE))


# -- JSON ------------------------------------------------------------------

_LB_FIELDS = {"lambda": "lam", "mu1": "mu1", "mu2": "mu2", "mu_tilde": "mu_tilde", "p_r": "p_r", "p_g": "p_g"}
_SA_FIELDS = {"lambda": "lam", "mu": "mu", "mu_tilde": "mu_tilde"}


def model_to_dict(model: ModelSpec) -> dict:
    if isinstance(model, LoadBalancing):
        return {"kind": model.kind, **{k: getattr(model, a) for k, a in _LB_FIELDS.items()}}
    if isinstance(model, ServerAllocation):
        return {"kind": model.kind, **{k: getattr(model, a) for k, a in _SA_FIELDS.items()}}
    out: dict = {"kind": "custom"}
    for region in Region:
        for action in Action:
            out[f"{region.value}_{action.name.lower()}"] = model.law(region, action).to_json()
    return out


def model_from_dict(data: Mapping) -> ModelSpec:
    """Inverse of :func:`model_to_dict`; unknown keys raise :class:`ParameterError`."""
    data = dict(data)
    kind = data.pop("kind", None)
    if kind == "load_balancing":
        fields = _LB_FIELDS
        cls = LoadBalancing
    elif kind == "server_allocation":
        fields = _SA_FIELDS
        cls = ServerAllocation
    elif kind == "custom":
        laws = {}
        for region in Region:
            pair = []
            for action in Action:
                key = f"{region.value}_{action.name.lower()}"
                if key not in data:
                    raise ParameterError(f"custom model is missing {key!r}")
                pair.append(JumpLaw.from_mapping(data.pop(key)))
            laws[region.value] = tuple(pair)
        if data:
            raise ParameterError(f"unknown model keys: {sorted(data)}")
        return CustomModel(**laws)
    else:
        raise ParameterError(f"unknown model kind {kind!r}")
    unknown = set(data) - set(fields)
    if unknown:
        raise ParameterError(f"unknown model keys: {sorted(unknown)}")
    missing = set(fields) - set(data)
    if missing:
        raise ParameterError(f"missing model keys: {sorted(missing)}")
    return cls(**{attr: float(data[key]) for key, attr in fields.items()})
