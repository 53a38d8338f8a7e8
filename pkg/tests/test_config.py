import json

import pytest

from slad.config import ConfigError, RunConfig, config_hash, load_config, parse_config


def test_defaults_round_trip():
    cfg = parse_config({})
    assert cfg == RunConfig()
    assert parse_config(cfg.to_dict()) == cfg
    assert cfg.distill.k == 100 and cfg.distill.k_phi == 20


def test_hash_is_stable_and_sensitive():
    a, b = parse_config({}), parse_config({"seed": 0})
    assert a.hash() == b.hash() and len(a.hash()) == 16
    assert parse_config({"seed": 1}).hash() != a.hash()
    assert config_hash({"x": 1, "y": 2}) == config_hash({"y": 2, "x": 1})


@pytest.mark.parametrize("doc,where", [
    ({"distil": {}}, "distil: unknown key"),
    ({"distill": {"kk": 1}}, "distill.kk: unknown key"),
    ({"distill": {"k": "100"}}, "distill.k: expected an integer"),
    ({"distill": {"k": 1.5}}, "distill.k: expected an integer"),
    ({"data": {"normalize": 1}}, "data.normalize: expected true/false"),
    ({"eval": {"steps": [1, "2"]}}, r"eval.steps\[1\]: expected an integer"),
    ({"schedule": []}, "schedule: expected an object"),
])
def test_errors_name_the_key(doc, where):
    with pytest.raises(ConfigError, match=where):
        parse_config(doc)


@pytest.mark.parametrize("doc", [
    {"distill": {"k": 100, "k_phi": 30}},
    {"distill": {"k": 10, "k_phi": 20}},
    {"distill": {"mu": 1.0}},
    {"schedule": {"beta_end": 1.5}},
    {"teacher_source": "oracle"},
    {"teacher_source": "analytic"},
    {"eval": {"grid": "log"}},
    {"eval": {"delta_noise": "fresh"}},
    {"data": {"kind": "moons"}},
])
def test_semantic_validation(doc):
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_analytic_teacher_needs_a_single_gaussian():
    cfg = parse_config({"teacher_source": "analytic", "data": {"n_modes": 1, "radius": 0.0}})
    assert cfg.teacher_source == "analytic"


def test_load_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 3, "distill": {"w": 2}}))
    cfg = load_config(p)
    assert cfg.seed == 3 and cfg.distill.w == 2.0 and isinstance(cfg.distill.w, float)
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.json")
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)


def test_derived_objects():
    cfg = parse_config({"data": {"kind": "swiss_roll"}, "model": {"width": 8}})
    assert cfg.net_config().n_labels == 4 and cfg.net_config().width == 8
    assert cfg.make_schedule().T == cfg.schedule.T
