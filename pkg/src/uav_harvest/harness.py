"""Monte Carlo evaluation over randomized scenarios and trajectory export.

Each evaluation episode gets its own RNG stream derived from the master
seed and the episode index, so results are reproducible and independent
of execution order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import mdp, nnet
from .encode import ObservationBuilder
from .mdp import Action, RewardParams
from .radio import ShadowCache
from .trainer import EpisodeMetrics, evaluate_episode
from .world import GridMap, PhysicsConfig, RandomizationRanges, Scenario, sample_scenario


@dataclass(frozen=True)
class AggregateMetrics:
    has_landed: float
    collection_ratio: float
    collection_ratio_and_landed: float
    cumulative_reward: float
    episodes: int
    seed: int

    @classmethod
    def from_episodes(cls, metrics: list[EpisodeMetrics], seed: int) -> "AggregateMetrics":
        return cls(
            has_landed=float(np.mean([m.has_landed for m in metrics])),
            collection_ratio=float(np.mean([m.collection_ratio for m in metrics])),
            collection_ratio_and_landed=float(
                np.mean([m.collection_ratio_and_landed for m in metrics])),
            cumulative_reward=float(np.mean([m.cumulative_reward for m in metrics])),
            episodes=len(metrics), seed=seed)


def episode_rng(seed: int, index: int) -> np.random.Generator:
    """Stream for one Monte Carlo episode; parallelism-safe by construction."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def monte_carlo(checkpoint, grid: GridMap, ranges: RandomizationRanges,
                episodes: int, seed: int,
                physics: PhysicsConfig | None = None, channel=None,
                rewards: RewardParams | None = None,
                shadow_cache: ShadowCache | None = None,
                policy=None) -> AggregateMetrics:
    """Greedy-policy metrics averaged over independently sampled scenarios.

    A policy callable (obs, rng) -> Action may replace the checkpoint,
    e.g. to measure the uniform-random baseline.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    ranges.validate(grid)
    cache = shadow_cache or ShadowCache()
    rewards = rewards or RewardParams()
    if policy is None:
        agent = (checkpoint.network(), checkpoint.encoder)
    results = []
    for i in range(episodes):
        rng = episode_rng(seed, i)
        scenario = sample_scenario(grid, ranges, rng, physics, channel)
        if policy is None:
            results.append(evaluate_episode(agent, scenario, rng, rewards, cache))
        else:
            from .encode import EncoderSpec
            from .trainer import _rollout
            spec = (checkpoint.encoder if checkpoint is not None
                    else EncoderSpec.from_ranges(ranges))
            builder = ObservationBuilder(scenario, spec)
            shadows = cache.fields_for(scenario)
            results.append(_rollout(policy, scenario, shadows, rewards, builder, rng))
    return AggregateMetrics.from_episodes(results, seed)


def random_policy(obs, rng: np.random.Generator) -> Action:
    return Action(int(rng.integers(len(Action))))


@dataclass
class TrajectoryRecord:
    map_hash: str
    start_cell: tuple
    flight_budget: int
    devices: list = field(default_factory=list)   # {"cell", "initial_data"}
    steps: list = field(default_factory=list)
    metrics: EpisodeMetrics | None = None

    def to_text(self) -> str:
        """One JSON document; each step object sits on its own line."""
        head = {"map_hash": self.map_hash, "start_cell": list(self.start_cell),
                "flight_budget": self.flight_budget, "devices": self.devices}
        lines = ["{"]
        for key, value in head.items():
            lines.append(f'  "{key}": {json.dumps(value)},')
        lines.append('  "steps": [')
        for i, step in enumerate(self.steps):
            comma = "," if i + 1 < len(self.steps) else ""
            lines.append("    " + json.dumps(step) + comma)
        lines.append("  ],")
        lines.append(f'  "metrics": {json.dumps(asdict(self.metrics))}')
        lines.append("}")
        return "\n".join(lines) + "\n"


def export_trajectory(checkpoint, scenario: Scenario, seed: int, out_path=None,
                      rewards: RewardParams | None = None,
                      shadow_cache: ShadowCache | None = None) -> TrajectoryRecord:
    """Roll one greedy episode and record every step for plotting."""
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    rewards = rewards or RewardParams()
    cache = shadow_cache or ShadowCache()
    net, spec = checkpoint.network(), checkpoint.encoder
    shadows = cache.fields_for(scenario)
    builder = ObservationBuilder(scenario, spec)

    record = TrajectoryRecord(
        map_hash=scenario.map.content_hash(), start_cell=scenario.start_cell,
        flight_budget=scenario.flight_budget,
        devices=[{"cell": list(d.cell), "initial_data": d.initial_data}
                 for d in scenario.devices])
    state = mdp.reset(scenario)
    ep_rewards = []
    index = 0
    while not state.terminal:
        obs = builder.build(state)
        action = nnet.greedy_action(nnet.q_values(net, obs))
        out = mdp.step(state, action, scenario, shadows, rewards, rng, log_comm=True)
        comm = out.info["comm"]
        scheduled = []
        if comm is not None:
            by_slot = {}
            for s in comm.samples:
                if s.scheduled:
                    by_slot[s.slot] = s.device
            delta = scenario.physics.comm_slots_per_step
            scheduled = [by_slot.get(n) for n in range(delta)]
        record.steps.append({
            "step": index, "uav_cell": list(state.uav_cell),
            "action": Action(action).name.lower(),
            "sc_triggered": out.info["sc_triggered"],
            "scheduled": scheduled,
            "throughput": out.info["throughput"],
            "reward": out.reward,
        })
        ep_rewards.append(out.reward)
        index += 1
    record.metrics = EpisodeMetrics.from_episode(state, ep_rewards)
    if out_path is not None:
        with open(out_path, "w") as fh:
            fh.write(record.to_text())
    return record
