"""Training loop: softmax exploration, combined replay, periodic greedy evals.

One gradient update and one soft target update happen per environment step
once the replay buffer passes its warm-up size.  Every tenth episode a
greedy evaluation episode runs on a freshly sampled scenario; evaluation
never touches the replay buffer or the weights.

Reproducibility: a single master seed is split into named child streams
(init, scenarios, exploration, channel noise, replay draws, evaluation),
so two runs with the same seed and configs produce identical logs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import mdp, nnet
from .encode import EncoderSpec, ObservationBuilder
from .mdp import Action, MdpState, RewardParams
from .radio import ShadowCache
from .replay import ReplayMemory, Transition
from .world import GridMap, PhysicsConfig, RandomizationRanges, Scenario, sample_scenario

LOG_BIN_STEPS = 5000  # plotting bin width for persisted logs

TrainingDiverged = nnet.TrainingDiverged


@dataclass(frozen=True)
class EpisodeMetrics:
    cumulative_reward: float
    has_landed: int                    # 0 or 1
    collection_ratio: float
    collection_ratio_and_landed: float
    steps_used: int

    @classmethod
    def from_episode(cls, state: MdpState, rewards: list[float]) -> "EpisodeMetrics":
        total = float(state.data.initial.sum())
        # no data anywhere counts as vacuous success
        ratio = float(state.data.collected.sum() / total) if total > 0 else 1.0
        landed = int(state.landed)
        return cls(cumulative_reward=float(sum(rewards)), has_landed=landed,
                   collection_ratio=ratio,
                   collection_ratio_and_landed=landed * ratio,
                   steps_used=len(rewards))


@dataclass
class TrainLog:
    seed: int
    losses: list[float] = field(default_factory=list)
    episodes: list[tuple[str, int, EpisodeMetrics]] = field(default_factory=list)  # (phase, step, metrics)
    steps: int = 0
    diverged: bool = False

    def episode_metrics(self, phase: str) -> list[EpisodeMetrics]:
        return [m for p, _, m in self.episodes if p == phase]

    def save_jsonl(self, path) -> None:
        """Line-delimited records: header, per-episode rows, 5000-step loss bins."""
        with open(path, "w") as fh:
            fh.write(json.dumps({"kind": "header", "seed": self.seed,
                                 "steps": self.steps, "diverged": self.diverged,
                                 "bin_steps": LOG_BIN_STEPS}) + "\n")
            for start in range(0, len(self.losses), LOG_BIN_STEPS):
                chunk = self.losses[start:start + LOG_BIN_STEPS]
                fh.write(json.dumps({"kind": "loss_bin", "first_update": start,
                                     "updates": len(chunk),
                                     "mean_loss": float(np.mean(chunk))}) + "\n")
            for phase, step, metrics in self.episodes:
                row = {"kind": "episode", "phase": phase, "step": step}
                row.update(asdict(metrics))
                fh.write(json.dumps(row) + "\n")


def discounted_return(rewards, gamma: float) -> float:
    """Sum of gamma^k * r_k; diagnostic only, training bootstraps targets."""
    return float(sum(r * gamma ** k for k, r in enumerate(rewards)))


def _rollout(net_or_policy, scenario: Scenario, shadows, rewards: RewardParams,
             builder: ObservationBuilder, rng: np.random.Generator) -> EpisodeMetrics:
    """Roll one full episode with a greedy network or a policy callable."""
    state = mdp.reset(scenario)
    collected_rewards = []
    while not state.terminal:
        obs = builder.build(state)
        if isinstance(net_or_policy, nnet.QNetwork):
            action = nnet.greedy_action(nnet.q_values(net_or_policy, obs))
        else:
            action = net_or_policy(obs, rng)
        out = mdp.step(state, action, scenario, shadows, rewards, rng)
        collected_rewards.append(out.reward)
    return EpisodeMetrics.from_episode(state, collected_rewards)


def evaluate_episode(checkpoint, scenario: Scenario, rng: np.random.Generator,
                     rewards: RewardParams | None = None,
                     shadow_cache: ShadowCache | None = None) -> EpisodeMetrics:
    """One greedy episode; channel noise still flows from rng."""
    if isinstance(checkpoint, nnet.Checkpoint):
        net, spec = checkpoint.network(), checkpoint.encoder
    else:
        net, spec = checkpoint  # (QNetwork, EncoderSpec)
    shadows = (shadow_cache or ShadowCache()).fields_for(scenario)
    builder = ObservationBuilder(scenario, spec)
    return _rollout(net, scenario, shadows, rewards or RewardParams(), builder, rng)


def _streams(seed: int):
    children = np.random.SeedSequence(seed).spawn(6)
    return [np.random.default_rng(s) for s in children]


def run_training(grid: GridMap, ranges: RandomizationRanges,
                 train_config: nnet.TrainConfig, rewards: RewardParams,
                 mode: str, seed: int,
                 physics: PhysicsConfig | None = None, channel=None,
                 arch: nnet.ArchConfig | None = None,
                 shadow_cache: ShadowCache | None = None,
                 progress_every: int | None = None) -> tuple[nnet.Checkpoint, TrainLog]:
    """Train a DDQN agent on randomized scenarios drawn from the ranges."""
    ranges.validate(grid)
    init_rng, scen_rng, explore_rng, env_rng, replay_rng, eval_rng = _streams(seed)
    log = TrainLog(seed=seed)

    physics = physics or PhysicsConfig()
    cache = shadow_cache or ShadowCache()
    enc = EncoderSpec.from_ranges(ranges, mode)
    arch = arch or nnet.ArchConfig()
    side = enc.frame_side(grid.size)
    online = nnet.QNetwork(arch, side, enc.channels())
    nnet.init_weights(online, init_rng)
    target = nnet.QNetwork(arch, side, enc.channels())
    target.load_state_dict(online.state_dict())
    optimizer = nnet.make_optimizer(online, train_config.learning_rate)

    memory = ReplayMemory(train_config.replay_capacity)
    warmup = train_config.effective_warmup

    def checkpoint() -> nnet.Checkpoint:
        return nnet.Checkpoint.from_networks(online, target, optimizer, enc,
                                             train_config.learning_rate, log.steps)

    snapshot = checkpoint()
    episode = 0
    while log.steps < train_config.total_steps:
        scenario = sample_scenario(grid, ranges, scen_rng, physics, channel)
        shadows = cache.fields_for(scenario)
        builder = ObservationBuilder(scenario, enc)
        state = mdp.reset(scenario)
        obs = builder.build(state)
        ep_rewards = []
        while not state.terminal and log.steps < train_config.total_steps:
            action = nnet.softmax_sample(nnet.q_values(online, obs),
                                         train_config.temperature, explore_rng)
            out = mdp.step(state, action, scenario, shadows, rewards, env_rng)
            next_obs = builder.build(state)
            memory.push(Transition(obs=obs, action=action, reward=out.reward,
                                   next_obs=next_obs, terminal=out.terminal))
            obs = next_obs
            log.steps += 1
            if len(memory) >= warmup:
                batch = memory.sample_combined(train_config.batch_size, replay_rng)
                try:
                    loss = nnet.train_step(online, target, optimizer, batch,
                                           train_config.gamma)
                except TrainingDiverged:
                    log.diverged = True
                    return snapshot, log
                log.losses.append(loss)
                nnet.soft_update(target, online, train_config.target_update_rate)
            ep_rewards.append(out.reward)
            if log.steps % LOG_BIN_STEPS == 0:
                snapshot = checkpoint()
            if progress_every and log.steps % progress_every == 0:
                recent = log.episode_metrics("eval")[-20:]
                mean_r = np.mean([m.cumulative_reward for m in recent]) if recent else float("nan")
                print(f"step {log.steps}: episodes={episode} "
                      f"eval_reward[-20:]={mean_r:.2f}", flush=True)
        if not state.terminal:
            break  # step budget hit mid-episode; do not log a partial episode
        episode += 1
        log.episodes.append(("train", log.steps,
                             EpisodeMetrics.from_episode(state, ep_rewards)))
        if episode % train_config.eval_every_episodes == 0:
            eval_scenario = sample_scenario(grid, ranges, eval_rng, physics, channel)
            eval_shadows = cache.fields_for(eval_scenario)
            eval_builder = ObservationBuilder(eval_scenario, enc)
            metrics = _rollout(online, eval_scenario, eval_shadows, rewards,
                               eval_builder, eval_rng)
            log.episodes.append(("eval", log.steps, metrics))
    return checkpoint(), log
