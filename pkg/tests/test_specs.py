import json

import numpy as np
import pytest

from predprob.specs import ConfigError, DesignSpec, RunConfig, ScenarioSpec, config_hash, default_transition


def base_config():
    return {
        "schema_version": 1,
        "design": {"endpoint": "dichotomous", "n_max": 500, "interims": [300, 400], "follow_up": 13.0},
        "scenario": {"name": "a", "accrual_rate": 5.0, "control_rate": 0.5, "treatment_rate": 0.35},
        "execution": {"n_sims": 10, "master_seed": 1},
    }


def test_round_trip():
    cfg = RunConfig.from_dict(base_config())
    assert cfg.design.interims == (300, 400)
    assert cfg.scenarios[0].treatment_rate == 0.35


@pytest.mark.parametrize("mutate", [
    lambda c: c.update(extra=1),
    lambda c: c["design"].update(n_maxx=3),
    lambda c: c["scenario"].update(colour="red"),
    lambda c: c["execution"].update(workers=2),
    lambda c: c.update(schema_version=2),
    lambda c: c["design"].update(interims=[400, 300]),
    lambda c: c["design"].update(interims=[300, 500]),
    lambda c: c["design"].update(methods=["npp", "epp"]),
    lambda c: c["design"].update(n_imputations=50),
    lambda c: c["design"].update(endpoint="continuous"),
    lambda c: c["design"].update(success_threshold=1.0),
    lambda c: c["design"].update(final_analysis={"kind": "alpha_level", "level": 1.5}),
    lambda c: c["scenario"].update(control_rate=1.5),
    lambda c: c["scenario"].update(accrual="burst"),
    lambda c: c["execution"].update(n_sims=0),
    lambda c: c["design"].update(z_variance="robust"),
    lambda c: c.update(scenario=[c["scenario"], dict(c["scenario"])]),
    lambda c: c.update(scenario=[]),
])
def test_invalid_configs_rejected(mutate):
    cfg = base_config()
    mutate(cfg)
    with pytest.raises(ConfigError):
        RunConfig.from_dict(cfg)


def test_model_endpoint_rules():
    with pytest.raises(ConfigError):
        DesignSpec("longitudinal", 1500, (500,), 90.0, final_analysis={"kind": "posterior_threshold", "level": 0.975})
    with pytest.raises(ConfigError):
        DesignSpec("borrowing", 1500, (500,), 90.0)
    d = DesignSpec("borrowing", 1500, (500,), 90.0, methods=("npp", "epp"),
                   final_analysis={"kind": "posterior_threshold", "level": 0.975})
    assert d.criterion.superiority == 0.975


def test_scenario_requirements():
    with pytest.raises(ConfigError):
        ScenarioSpec("x", control_rate=0.5).require("dichotomous")
    with pytest.raises(ConfigError):
        ScenarioSpec("x", odds_ratio=1.2).require("borrowing")
    with pytest.raises(ConfigError):
        ScenarioSpec("x", control_probs=(0.5, 0.6))


def test_hash_tracks_semantic_fields_only():
    a = RunConfig.from_dict(base_config())
    c = base_config()
    c["output"] = {"directory": "elsewhere", "full_precision": True}
    c["execution"]["parallelism"] = 8
    assert RunConfig.from_dict(c).hash == a.hash
    c = base_config()
    c["scenario"]["treatment_rate"] = 0.36
    assert RunConfig.from_dict(c).hash != a.hash
    c = base_config()
    c["execution"]["master_seed"] = 2
    assert RunConfig.from_dict(c).hash != a.hash


def test_hash_whitespace_and_order_insensitive(tmp_path):
    data = base_config()
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    p1.write_text(json.dumps(data))
    p2.write_text(json.dumps(dict(reversed(list(data.items()))), indent=7))
    assert RunConfig.load(p1).hash == RunConfig.load(p2).hash
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(p)


def test_default_transition_columns_are_simplexes():
    rho = default_transition()
    np.testing.assert_allclose(rho.sum(axis=0), 1.0)
    assert np.all(np.diag(rho) == 0.6)


def test_shipped_configs_load():
    from pathlib import Path

    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
    assert paths
    for p in paths:
        RunConfig.load(p)
