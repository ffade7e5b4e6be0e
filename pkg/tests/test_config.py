import json

import pytest
from hypothesis import given, settings, strategies as st

from llp.config import (
    DEFAULTS,
    apply_overrides,
    config_hash,
    from_dict,
    load_config,
    to_dict,
)
from llp.errors import ConfigError
from llp.models import LoadBalancing
from llp.process import CostKind, QLearning

MODEL = {"kind": "load_balancing", "lambda": 1.5, "mu1": 0.1, "mu2": 0.35, "mu_tilde": 10.8, "p_r": 0.45, "p_g": 0.8}
MINIMAL = {"world": {"model": MODEL}}


def test_minimal_config_gets_defaults():
    cfg = from_dict(MINIMAL)
    e = cfg.experiment
    assert e.world.model == LoadBalancing(1.5, 0.1, 0.35, 10.8, 0.45, 0.8)
    assert not e.world.free
    assert e.agent == QLearning()
    assert (e.x0, e.horizon, e.n_trajectories, e.master_seed) == ((0, 0), DEFAULTS["horizon"], 200, 0)
    assert cfg.gamma_grid == (0.9, 0.95, 0.99)
    assert cfg.curve_cost is CostKind.LOCAL_DELTA


@pytest.mark.parametrize(
    "agent",
    [
        {"kind": "q_learning", "schedule": "harmonic", "harmonic_index": "visit", "cost": "queue_total", "greedy": "argmax"},
        {"kind": "fixed", "action": "green"},
        {"kind": "coin", "q": 0.3},
    ],
)
def test_round_trip(agent):
    cfg = from_dict({**MINIMAL, "agent": agent, "metrics": ["alpha"], "lyapunov": {"v": [0.04, 1]}})
    again = from_dict(json.loads(json.dumps(to_dict(cfg))))
    assert again == cfg
    assert to_dict(again) == to_dict(cfg)


def test_server_allocation_and_custom_round_trip():
    sa = from_dict({"world": {"model": {"kind": "server_allocation", "lambda": 1, "mu": 1.2, "mu_tilde": 7}}})
    assert from_dict(to_dict(sa)) == sa
    law = {"+e1": 0.5, "+e2": 0.5}
    interior = {"+e1": 0.25, "+e2": 0.25, "-e1": 0.25, "-e2": 0.25}
    custom = {
        "kind": "custom",
        "interior_red": interior, "interior_green": interior,
        "x_edge_red": law, "x_edge_green": law,
        "y_edge_red": law, "y_edge_green": law,
        "origin_red": law, "origin_green": law,
    }
    cfg = from_dict({"world": {"model": custom}})
    assert from_dict(to_dict(cfg)) == cfg


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"world": {"model": {**MODEL, "p_r": 1.5}}}, "world.model.p_r"),
        ({"world": {"model": {**MODEL, "speed": 1}}}, "world.model.speed"),
        ({"world": {"model": {k: v for k, v in MODEL.items() if k != "mu1"}}}, "world.model.mu1"),
        ({"horizon": "long"}, "horizon"),
        ({"bogus": 1}, "bogus"),
        ({"agent": {"kind": "coin"}}, "agent.q"),
        ({"agent": {"kind": "q_learning", "epsilon": 2}}, "agent.epsilon"),
        ({"probe": {"radius": -1}}, "probe.radius"),
    ],
)
def test_errors_name_the_field(patch, field):
    with pytest.raises(ConfigError) as info:
        from_dict({**MINIMAL, **patch})
    assert info.value.field == field
    assert field in str(info.value)


def test_custom_law_must_normalize():
    law = {"+e1": 0.5, "+e2": 0.6}
    custom = {"kind": "custom", **{f"{r}_{a}": law for r in ("interior", "x_edge", "y_edge", "origin") for a in ("red", "green")}}
    with pytest.raises(ConfigError) as info:
        from_dict({"world": {"model": custom}})
    assert info.value.field == "world.model"


def test_overrides():
    data = to_dict(from_dict(MINIMAL))
    out = apply_overrides(data, ["horizon=5", "world.model.p_g=0.7", "agent.cost=queue_total", "x0.1=3", "experiment=run"])
    cfg = from_dict(out)
    assert cfg.experiment.horizon == 5
    assert cfg.experiment.world.model.p_g == 0.7
    assert cfg.experiment.agent.cost is CostKind.QUEUE_TOTAL
    assert cfg.experiment.x0 == (0, 3)
    assert cfg.name == "run"
    assert data["horizon"] == DEFAULTS["horizon"]  # input untouched
    with pytest.raises(ConfigError):
        apply_overrides(data, ["horizon"])


def test_load_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(MINIMAL))
    cfg = load_config(path, ["n_trajectories=7"], seed=42)
    assert cfg.experiment.n_trajectories == 7
    assert cfg.experiment.master_seed == 42
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError) as info:
        load_config(path, ["world.model.p_r=1.5"])
    assert info.value.field == "world.model.p_r"


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["horizon", "n_trajectories", "master_seed", "env_cap"]), st.integers(1, 10**6))
def test_hash_changes_iff_effective_field_changes(key, value):
    base = from_dict(MINIMAL)
    data = to_dict(base)
    changed = from_dict(apply_overrides(data, [f"{key}={value}"]))
    assert (config_hash(changed) == config_hash(base)) == (to_dict(changed) == data)
    # spelling out a default does not change the hash
    assert config_hash(from_dict({**MINIMAL, "horizon": DEFAULTS["horizon"]})) == config_hash(base)
