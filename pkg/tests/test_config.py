import pytest
import yaml

from uav_harvest.config import ConfigError, config_from_dict, load_config, resolve_map


def test_defaults_follow_spec(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("map: manhattan\n")
    cfg = load_config(path)
    assert cfg.map.size == 16
    assert cfg.ranges.device_count == (2, 5)
    assert cfg.ranges.data == (5.0, 20.0)
    assert cfg.ranges.flight_budget == (35, 70)
    assert len(cfg.ranges.start_cells) == 8
    assert cfg.physics.altitude == 10.0
    assert cfg.physics.comm_slots_per_step == 4
    assert cfg.channel.alpha_los == 2.27
    assert cfg.channel.alpha_nlos == 3.64
    assert cfg.channel.sigma2_los == 2.0
    assert cfg.channel.sigma2_nlos == 5.0
    assert cfg.channel.cell_edge_snr_db == -15.0
    assert cfg.rewards.data_scale == 1.0
    assert cfg.rewards.safety_penalty == -1.0
    assert cfg.rewards.movement_penalty == -0.2
    assert cfg.rewards.crash_penalty == -3.0
    assert cfg.train.gamma == 0.95
    assert cfg.train.temperature == 0.1
    assert cfg.train.learning_rate == 1e-4
    assert cfg.train.batch_size == 128
    assert cfg.train.target_update_rate == 0.005
    assert cfg.train.replay_capacity == 50_000
    assert cfg.arch.conv == ((16, 5, 2), (16, 3, 1))
    assert cfg.arch.fc == (256, 256)
    assert cfg.observation_mode == "centered"
    assert cfg.eval_episodes == 1000


def test_overrides_apply():
    cfg = config_from_dict({
        "map": "desk10",
        "ranges": {"device_count": [2, 2], "flight_budget": [25, 25]},
        "train": {"gamma": 0.9, "total_steps": 1000},
        "reward": {"movement_penalty": -0.5},
        "observation": {"mode": "non_centered"},
        "channel": {"cell_edge_snr_db": -10.0},
        "physics": {"comm_slots_per_step": 2},
        "net": {"conv": [[8, 3, 2]], "fc": [64]},
        "eval": {"episodes": 7},
    })
    assert cfg.map.size == 10
    assert cfg.ranges.device_count == (2, 2)
    assert cfg.ranges.data == (5.0, 20.0)  # untouched default
    assert cfg.train.gamma == 0.9
    assert cfg.rewards.movement_penalty == -0.5
    assert cfg.observation_mode == "non_centered"
    assert cfg.channel.cell_edge_snr_db == -10.0
    assert cfg.physics.comm_slots_per_step == 2
    assert cfg.arch.conv == ((8, 3, 2),)
    assert cfg.eval_episodes == 7


def test_map_from_file(tmp_path):
    path = tmp_path / "tiny.txt"
    path.write_text("L..\n.B.\n..N\n")
    cfg = config_from_dict({"map": str(path)})
    assert cfg.map.size == 3
    assert cfg.map_name == str(path)


def test_explicit_start_cells():
    cfg = config_from_dict({"map": "desk10",
                            "ranges": {"start_cells": [[4, 4], [5, 5]]}})
    assert cfg.ranges.start_cells == ((4, 4), (5, 5))


def test_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="top-level"):
        config_from_dict({"map": "desk10", "spam": 1})
    with pytest.raises(ConfigError, match="ranges"):
        config_from_dict({"map": "desk10", "ranges": {"frobnicate": [1, 2]}})
    with pytest.raises(ConfigError, match="train"):
        config_from_dict({"map": "desk10", "train": {"lr": 0.1}})


def test_rejects_invalid_values():
    with pytest.raises(ConfigError):
        config_from_dict({"map": "desk10", "train": {"gamma": 1.5}})
    with pytest.raises(ConfigError):
        config_from_dict({"map": "desk10", "reward": {"movement_penalty": 0.3}})
    with pytest.raises(ConfigError):
        config_from_dict({"map": "desk10", "ranges": {"device_count": [5, 2]}})
    with pytest.raises(ConfigError):
        config_from_dict({"map": "desk10",
                          "ranges": {"start_cells": [[0, 0]]}})  # not a landing cell
    with pytest.raises(ConfigError):
        config_from_dict({"map": "missing_file.txt"})
    with pytest.raises(ConfigError):
        config_from_dict({"map": "desk10", "observation": {"mode": "sideways"}})


def test_resolve_map_names():
    for name in ("manhattan", "open_field_city", "desk10"):
        grid = resolve_map(name)
        assert grid.start_cells()
