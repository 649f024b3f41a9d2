"""Tests for configuration loading, validation and persistence."""

import json

import pytest

from narrowstencil.config import ConfigManager, RunConfig, config_manager, get_default_config, parse_config
from narrowstencil.core.errors import ConfigError


def test_defaults():
    config = get_default_config()
    assert config.command == "verify"
    assert config.solver.schedule == [(1000.0, 0.0), (100.0, 0.0), (10.0, 0.0), (1.0, 0.0), (0.0, 0.0)]
    assert (config.controls.phi_count, config.controls.rot_count) == (16, 32)
    assert config.solver.newton_tol == 1e-10
    assert config.solver.rho is None


def test_dict_round_trip():
    config = get_default_config()
    config.scheme.sigma = 2.0
    config.mesh.sizes = [6, 12]
    assert RunConfig.from_dict(config.to_dict()).to_dict() == config.to_dict()


def test_bundled_defaults_match_dataclass():
    assert config_manager.defaults() == RunConfig().to_dict()


def test_missing_defaults_file_falls_back(tmp_path):
    manager = ConfigManager(tmp_path / "absent.json")
    assert manager.load().to_dict() == RunConfig().to_dict()


def test_negative_sigma_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(overrides={"sigma": -1})
    assert "scheme.sigma" in info.value.keys
    assert info.value.exit_code == 2


def test_unsafe_allows_negative_sigma():
    config = parse_config(overrides={"sigma": -1, "scheme": {"unsafe": True}})
    assert config.scheme.sigma == -1


def test_unsafe_schedule_entry_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(overrides={"schedule": [[-10, 1]]})
    assert info.value.keys == ["solver.schedule"]


def test_malformed_json_reports_line(tmp_path):
    path = tmp_path / "run.json"
    path.write_text('{\n  "problem": "hjb",\n  "seed": ,\n}\n', encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert info.value.line == 3
    assert "line 3" in str(info.value)


@pytest.mark.parametrize(
    "payload,key",
    [({"bogus": 1}, "bogus"), ({"solver": {"tolerance": 1e-8}}, "solver.tolerance")],
)
def test_unknown_keys_rejected(tmp_path, payload, key):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert key in info.value.keys


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(tmp_path / "nowhere.json")
    assert info.value.keys == ["--config"]


def test_shorthand_keys(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(
        json.dumps({"problem": "monge_ampere", "sides": [6, 12], "schedule": [[0, 1000], [0, 0]], "gamma": 0.5}),
        encoding="utf-8",
    )
    config = parse_config(path)
    assert config.mesh.sizes == [6, 12]
    assert config.mesh.convention == "sides"
    assert config.solver.schedule == [(0.0, 1000.0), (0.0, 0.0)]
    assert config.scheme.gamma == 0.5


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"problem": "hjb", "interior": [4, 8]}), encoding="utf-8")
    config = parse_config(path, {"problem": "poisson", "sides": [5]})
    assert config.problem == "poisson"
    assert config.mesh.sizes == [5]
    assert config.mesh.convention == "sides"


def test_several_problems_reported_together():
    with pytest.raises(ConfigError) as info:
        parse_config(overrides={"problem": "heat", "workers": 0, "mesh": {"sizes": [12, 6]}})
    assert {"problem", "workers", "mesh.sizes"} <= set(info.value.keys)


def test_save_and_reload(tmp_path):
    config = parse_config(overrides={"problem": "gauss_curvature", "sides": [6, 12, 24]})
    path = config_manager.save(config, tmp_path / "saved.json")
    assert parse_config(path).to_dict() == config.to_dict()
    assert not list(tmp_path.glob("*.tmp"))


@pytest.mark.parametrize(
    "overrides,key",
    [
        ({"sigma": "one"}, "scheme.sigma"),
        ({"gamma": None}, "scheme.gamma"),
        ({"sides": ["6", "12"]}, "mesh.sizes"),
        ({"solver": {"newtonTol": "1e-8"}}, "solver.newtonTol"),
        ({"solver": {"rho": "small"}}, "solver.rho"),
        ({"solver": {"maxSweeps": 1.5}}, "solver.maxSweeps"),
        ({"controls": {"rotCount": "32"}}, "controls.rotCount"),
        ({"workers": True}, "workers"),
    ],
)
def test_wrong_types_reported_as_config_errors(overrides, key):
    with pytest.raises(ConfigError) as info:
        parse_config(overrides=overrides)
    assert key in info.value.keys
    assert info.value.exit_code == 2


def test_string_schedule_entry_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(overrides={"schedule": [["fast", 0]]})
    assert info.value.keys == ["solver.schedule"]
