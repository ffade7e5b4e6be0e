"""JSON run configurations: strict parsing, defaults, overrides and hashing.

A configuration document describes one world, one agent and the knobs of
every CLI subcommand.  Only ``world.model`` is required; every other field
has a default (see ``DEFAULTS``).  Parsing is strict: unknown keys, wrong
types and out-of-range values are rejected with a :class:`ConfigError`
whose ``field`` is the dotted path of the offending key.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from llp.conditions import Strategy
from llp.errors import ConfigError, LLPError
from llp.experiments import ExperimentConfig
from llp.models import Action, model_from_dict, model_to_dict
from llp.process import DEFAULT_ENV_CAP, AgentSpec, Coin, CostKind, FixedAction, QLearning, World

DEFAULTS = {
    "experiment": "experiment",
    "agent": {"kind": "q_learning"},
    "x0": [0, 0],
    "horizon": 10_000,
    "n_trajectories": 200,
    "master_seed": 0,
    "metrics": [],
    "env_cap": DEFAULT_ENV_CAP,
    "gamma_grid": [0.9, 0.95, 0.99],
    "curve_cost": "local_delta",
    "check": {"strategy": None, "direction": None},
    "probe": {"radius": 0, "burn_in": 100},
    "success": {"l": [1 / math.sqrt(2), 1 / math.sqrt(2)], "margin": None},
    "renewal": {"l": [1.0, 0.0], "margin": 1000, "trajectory": None},
    "lyapunov": {"v": None, "grid_max": 50},
}


@dataclass(frozen=True)
class RunConfig:
    """An :class:`ExperimentConfig` plus the settings of the other subcommands.

    ``lyapunov_v = None`` means "use the green stability vector of the model".
    """

    experiment: ExperimentConfig
    name: str = "experiment"
    gamma_grid: tuple[float, ...] = (0.9, 0.95, 0.99)
    curve_cost: CostKind = CostKind.LOCAL_DELTA
    strategy: Strategy | None = None
    direction: tuple[float, float] | None = None
    renewal_l: tuple[float, float] = (1.0, 0.0)
    renewal_margin: int = 1000
    renewal_trajectory: str | None = None
    lyapunov_v: tuple[float, float] | None = None
    lyapunov_grid_max: int = 50


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("llp").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def _merge(defaults: dict, data: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in data.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "agent":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _error_field(err: jsonschema.ValidationError) -> str:
    path = [str(p) for p in err.absolute_path]
    names = re.findall(r"'([^']+)'", err.message)
    if err.validator == "required" and names:
        path.append(names[0])
    elif err.validator in ("additionalProperties", "propertyNames") and names:
        path.append(names[0] if err.validator == "additionalProperties" else str(err.instance))
    return ".".join(path) or "<root>"


def validate(data) -> None:
    """Check ``data`` against the shipped JSON schema."""
    validator = jsonschema.Draft202012Validator(schema())
    errors = list(validator.iter_errors(data))
    if not errors:
        return
    err = jsonschema.exceptions.best_match(errors)
    # prefer the deepest error so the message names a leaf field
    err = max(errors, key=lambda e: len(e.absolute_path)) if err.validator in ("allOf", "oneOf") else err
    raise ConfigError(err.message, _error_field(err))


def agent_to_dict(agent: AgentSpec) -> dict:
    if isinstance(agent, QLearning):
        return {
            "kind": agent.kind,
            "epsilon": agent.epsilon,
            "gamma": agent.gamma,
            "step_size": agent.step_size,
            "schedule": agent.schedule.value,
            "harmonic_index": agent.harmonic_index.value,
            "cost": agent.cost.value,
            "q0": agent.q0,
            "greedy": agent.greedy.value,
        }
    if isinstance(agent, FixedAction):
        return {"kind": agent.kind, "action": agent.action.name.lower()}
    return {"kind": agent.kind, "q": agent.q}


def agent_from_dict(data: dict) -> AgentSpec:
    data = dict(data)
    kind = data.pop("kind")
    if kind == "q_learning":
        return QLearning(**data)
    if kind == "fixed":
        return FixedAction(Action.parse(data["action"]))
    return Coin(**data)


def _vec(value):
    return None if value is None else (float(value[0]), float(value[1]))


def from_dict(data) -> RunConfig:
    """Validate ``data`` and build a :class:`RunConfig`, filling defaults."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object", "<root>")
    validate(data)
    d = _merge(DEFAULTS, data)
    validate(d)
    try:
        model = model_from_dict(d["world"]["model"])
    except (LLPError, ValueError) as exc:
        raise ConfigError(str(exc), "world.model") from exc
    try:
        agent = agent_from_dict(d["agent"])
    except (LLPError, ValueError) as exc:
        raise ConfigError(str(exc), "agent") from exc
    try:
        experiment = ExperimentConfig(
            world=World(model, bool(d["world"].get("free", False))),
            agent=agent,
            x0=(int(d["x0"][0]), int(d["x0"][1])),
            horizon=d["horizon"],
            n_trajectories=d["n_trajectories"],
            master_seed=d["master_seed"],
            metrics=tuple(d["metrics"]),
            env_cap=d["env_cap"],
            probe_radius=d["probe"]["radius"],
            probe_burn_in=d["probe"]["burn_in"],
            cone_l=_vec(d["success"]["l"]),
            success_margin=d["success"]["margin"],
        )
    except (LLPError, ValueError) as exc:
        raise ConfigError(str(exc), "experiment") from exc
    if not d["world"].get("free", False) and min(experiment.x0) < 0:
        raise ConfigError("initial state must lie in the quarter lattice", "x0")
    strategy = d["check"]["strategy"]
    return RunConfig(
        experiment=experiment,
        name=d["experiment"],
        gamma_grid=tuple(sorted(float(g) for g in d["gamma_grid"])),
        curve_cost=CostKind(d["curve_cost"]),
        strategy=None if strategy is None else Strategy(strategy),
        direction=_vec(d["check"]["direction"]),
        renewal_l=_vec(d["renewal"]["l"]),
        renewal_margin=d["renewal"]["margin"],
        renewal_trajectory=d["renewal"]["trajectory"],
        lyapunov_v=_vec(d["lyapunov"]["v"]),
        lyapunov_grid_max=d["lyapunov"]["grid_max"],
    )


def to_dict(cfg: RunConfig) -> dict:
    """Full document with every default spelled out; ``from_dict`` inverts it."""
    e = cfg.experiment
    return {
        "experiment": cfg.name,
        "world": {"model": model_to_dict(e.world.model), "free": e.world.free},
        "agent": agent_to_dict(e.agent),
        "x0": list(e.x0),
        "horizon": e.horizon,
        "n_trajectories": e.n_trajectories,
        "master_seed": e.master_seed,
        "metrics": list(e.metrics),
        "env_cap": e.env_cap,
        "gamma_grid": list(cfg.gamma_grid),
        "curve_cost": cfg.curve_cost.value,
        "check": {
            "strategy": None if cfg.strategy is None else cfg.strategy.value,
            "direction": None if cfg.direction is None else list(cfg.direction),
        },
        "probe": {"radius": e.probe_radius, "burn_in": e.probe_burn_in},
        "success": {"l": list(e.cone_l), "margin": e.success_margin},
        "renewal": {"l": list(cfg.renewal_l), "margin": cfg.renewal_margin, "trajectory": cfg.renewal_trajectory},
        "lyapunov": {
            "v": None if cfg.lyapunov_v is None else list(cfg.lyapunov_v),
            "grid_max": cfg.lyapunov_grid_max,
        },
    }


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.sub=value`` assignments; values are JSON when they parse as JSON."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value", key or item)
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            if isinstance(node, list):
                node = node[int(part)]
                continue
            if not isinstance(node.get(part), (dict, list)):
                node[part] = {}
            node = node[part]
        last = parts[-1]
        try:
            if isinstance(node, list):
                node[int(last)] = _parse_value(raw)
            else:
                node[last] = _parse_value(raw)
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"cannot assign {raw!r}", key) from exc
    return data


def load_config(path, overrides=(), seed: int | None = None) -> RunConfig:
    """Read, validate, then apply overrides (and ``seed``) and validate again."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", "<file>") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", "<file>") from exc
    cfg = from_dict(data)
    if overrides or seed is not None:
        full = apply_overrides(to_dict(cfg), overrides)
        if seed is not None:
            full["master_seed"] = seed
        cfg = from_dict(full)
    return cfg


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: RunConfig) -> str:
    """sha256 of the canonical JSON of the effective configuration."""
    return hashlib.sha256(canonical_json(to_dict(cfg)).encode()).hexdigest()
