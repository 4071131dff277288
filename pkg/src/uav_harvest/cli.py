"""Command-line entry points: shadow precompute, training, eval, rollout.

Exit codes: 0 on success, 1 for an invalid configuration, 2 for runtime
failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .harness import export_trajectory, monte_carlo
from .nnet import load_checkpoint, save_checkpoint
from .radio import ShadowCache
from .trainer import run_training
from .world import sample_scenario


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uav-harvest",
        description="UAV data-harvesting simulator and DDQN trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=0, help="master RNG seed")
        p.add_argument("--out", required=True, help="output path")

    p = sub.add_parser("shadow", help="precompute LoS shadow fields for a map")
    common(p)

    p = sub.add_parser("train", help="train an agent; writes checkpoint and log")
    common(p)

    p = sub.add_parser("eval", help="Monte Carlo evaluation of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=None,
                   help="override eval.episodes from the config")

    p = sub.add_parser("rollout", help="export one greedy trajectory")
    common(p)
    p.add_argument("--checkpoint", required=True)
    return parser


def _cmd_shadow(cfg: RunConfig, seed: int, out: str) -> None:
    cache = ShadowCache(out)
    grid = cfg.map
    cells = grid.free_device_cells()
    for cell in cells:
        cache.field(grid, cell, cfg.physics.altitude)
    print(f"computed {len(cells)} shadow fields into {out}")


def _cmd_train(cfg: RunConfig, seed: int, out: str) -> None:
    cache = ShadowCache(cfg.shadow_cache_dir)
    ckpt, log = run_training(cfg.map, cfg.ranges, cfg.train, cfg.rewards,
                             cfg.observation_mode, seed, physics=cfg.physics,
                             channel=cfg.channel, arch=cfg.arch,
                             shadow_cache=cache, progress_every=5000)
    out_path = Path(out)
    save_checkpoint(ckpt, out_path)
    log_path = out_path.with_suffix(out_path.suffix + ".log.jsonl")
    log.save_jsonl(log_path)
    evals = log.episode_metrics("eval")
    tail = evals[-20:]
    if tail:
        print(f"final 20 evals: reward={np.mean([m.cumulative_reward for m in tail]):.2f} "
              f"landed={np.mean([m.has_landed for m in tail]):.2f} "
              f"ratio={np.mean([m.collection_ratio for m in tail]):.2f}")
    print(f"checkpoint: {out_path}\ntraining log: {log_path}")
    if log.diverged:
        raise RuntimeError("training diverged; wrote the last good checkpoint")


def _cmd_eval(cfg: RunConfig, seed: int, out: str, checkpoint: str,
              episodes: int | None) -> None:
    ckpt = load_checkpoint(checkpoint)
    n = episodes if episodes is not None else cfg.eval_episodes
    cache = ShadowCache(cfg.shadow_cache_dir)
    agg = monte_carlo(ckpt, cfg.map, cfg.ranges, n, seed, physics=cfg.physics,
                      channel=cfg.channel, rewards=cfg.rewards, shadow_cache=cache)
    payload = {
        "has_landed": agg.has_landed,
        "collection_ratio": agg.collection_ratio,
        "collection_ratio_and_landed": agg.collection_ratio_and_landed,
        "cumulative_reward": agg.cumulative_reward,
        "episodes": agg.episodes,
        "seed": agg.seed,
    }
    with open(out, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(json.dumps(payload, indent=2))


def _cmd_rollout(cfg: RunConfig, seed: int, out: str, checkpoint: str) -> None:
    ckpt = load_checkpoint(checkpoint)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    scenario = sample_scenario(cfg.map, cfg.ranges, rng, cfg.physics, cfg.channel)
    cache = ShadowCache(cfg.shadow_cache_dir)
    record = export_trajectory(ckpt, scenario, seed, out_path=out,
                               rewards=cfg.rewards, shadow_cache=cache)
    print(f"wrote {len(record.steps)}-step trajectory to {out}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (ConfigError, FileNotFoundError, OSError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "shadow":
            _cmd_shadow(cfg, args.seed, args.out)
        elif args.command == "train":
            _cmd_train(cfg, args.seed, args.out)
        elif args.command == "eval":
            _cmd_eval(cfg, args.seed, args.out, args.checkpoint, args.episodes)
        elif args.command == "rollout":
            _cmd_rollout(cfg, args.seed, args.out, args.checkpoint)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
