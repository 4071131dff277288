"""Run configuration: a YAML key/value tree overriding every code default.

Unknown keys are rejected so typos fail fast.  The ``map`` entry accepts
either a filesystem path or the name of a packaged map (``manhattan``,
``open_field_city``, ``desk10``).
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import yaml

from .encode import CENTERED, NON_CENTERED
from .mdp import RewardParams
from .nnet import ArchConfig, TrainConfig
from .radio import ChannelParams
from .world import GridMap, PhysicsConfig, RandomizationRanges, load_map

PACKAGED_MAPS = ("manhattan", "open_field_city", "desk10")


class ConfigError(ValueError):
    """Invalid or unparseable run configuration."""


def packaged_map_text(name: str) -> str:
    ref = importlib.resources.files("uav_harvest") / "maps" / f"{name}.txt"
    return ref.read_text()


def resolve_map(spec: str) -> GridMap:
    if spec in PACKAGED_MAPS:
        return load_map(packaged_map_text(spec))
    try:
        with open(spec) as fh:
            return load_map(fh.read())
    except FileNotFoundError:
        raise ConfigError(f"map {spec!r} is neither a packaged map "
                          f"{PACKAGED_MAPS} nor a readable file")


@dataclass
class RunConfig:
    map: GridMap
    map_name: str
    ranges: RandomizationRanges
    physics: PhysicsConfig
    channel: ChannelParams
    rewards: RewardParams
    train: TrainConfig
    arch: ArchConfig
    observation_mode: str = CENTERED
    eval_episodes: int = 1000
    shadow_cache_dir: str | None = None


def _take(section: dict, key: str, default):
    return section.pop(key) if key in section else default


def _interval(value, name: str) -> tuple:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{name} must be a two-element [low, high] list")
    return tuple(value)


def _build(section_name: str, cls, raw: dict, **extra):
    try:
        return cls(**raw, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section_name}: {exc}") from exc


def load_config(path) -> RunConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw)
    map_name = _take(raw, "map", "manhattan")
    try:
        grid = resolve_map(map_name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    ranges_raw = dict(_take(raw, "ranges", {}))
    start_cells = _take(ranges_raw, "start_cells", "all")
    if start_cells == "all":
        start_cells = grid.start_cells()
    else:
        start_cells = tuple(tuple(c) for c in start_cells)
    fields = {}
    for key in ("device_count", "data", "flight_budget"):
        if key in ranges_raw:
            fields[key] = _interval(ranges_raw.pop(key), f"ranges.{key}")
    if ranges_raw:
        raise ConfigError(f"unknown keys in ranges: {sorted(ranges_raw)}")
    ranges = _build("ranges", RandomizationRanges, fields, start_cells=start_cells)
    try:
        ranges.validate(grid)
    except ValueError as exc:
        raise ConfigError(f"ranges: {exc}") from exc

    physics = _build("physics", PhysicsConfig, dict(_take(raw, "physics", {})))
    channel = _build("channel", ChannelParams, dict(_take(raw, "channel", {})))
    rewards = _build("reward", RewardParams, dict(_take(raw, "reward", {})))
    train = _build("train", TrainConfig, dict(_take(raw, "train", {})))

    arch_raw = dict(_take(raw, "net", {}))
    if "conv" in arch_raw:
        arch_raw["conv"] = tuple(tuple(stage) for stage in arch_raw["conv"])
    if "fc" in arch_raw:
        arch_raw["fc"] = tuple(arch_raw["fc"])
    arch = _build("net", ArchConfig, arch_raw)

    obs_raw = dict(_take(raw, "observation", {}))
    mode = _take(obs_raw, "mode", CENTERED)
    if obs_raw:
        raise ConfigError(f"unknown keys in observation: {sorted(obs_raw)}")
    if mode not in (CENTERED, NON_CENTERED):
        raise ConfigError(f"observation.mode must be {CENTERED!r} or {NON_CENTERED!r}")

    eval_raw = dict(_take(raw, "eval", {}))
    eval_episodes = _take(eval_raw, "episodes", 1000)
    if eval_raw:
        raise ConfigError(f"unknown keys in eval: {sorted(eval_raw)}")

    shadow_cache_dir = _take(raw, "shadow_cache", None)
    if raw:
        raise ConfigError(f"unknown top-level keys: {sorted(raw)}")
    return RunConfig(map=grid, map_name=str(map_name), ranges=ranges,
                     physics=physics, channel=channel, rewards=rewards,
                     train=train, arch=arch, observation_mode=mode,
                     eval_episodes=int(eval_episodes),
                     shadow_cache_dir=shadow_cache_dir)
