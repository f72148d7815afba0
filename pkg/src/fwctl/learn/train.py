"""Model-based training loop: seed with random actions, then alternate
environment steps (planned with the learned model) and network updates.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from ..config import config_hash
from ..env import ACTION_DIM, OBS_DIM, EpisodeConfig, FixedWingEnv
from ..planner import PlannerConfig, mppi_plan
from .replay import ReplayBuffer
from .tdmpc import LearnedModel, ToldConfig, ToldLite, load_checkpoint


@dataclass
class TrainConfig:
    total_steps: int = 50_000
    seed_steps: int = 10_000
    batch_size: int = 256
    horizon: int = 3
    updates_per_step: int = 1
    buffer_capacity: int = 1_000_000
    checkpoint_every: int = 10_000
    max_skipped_updates: int = 50
    out_dir: str | None = None
    told: ToldConfig = field(default_factory=ToldConfig)
    planner: PlannerConfig = field(default_factory=lambda: PlannerConfig(stochastic=True))


CURVE_HEADER = ("step", "episode_return", "consistency_loss", "reward_loss",
                "value_loss", "policy_loss")


def train_tdmpc_lite(env_cfg: EpisodeConfig, train_cfg: TrainConfig, seed: int):
    """Train the latent-free model stack on the attitude task.

    Returns (told, curves, info): curves is a list of per-episode rows
    following CURVE_HEADER; info carries abort/divergence bookkeeping.
    If out_dir is set, checkpoints and curves.csv are persisted there.
    """
    cfg = train_cfg
    told = ToldLite(replace(cfg.told, seed=seed))
    buffer = ReplayBuffer(min(cfg.buffer_capacity, cfg.total_steps + 1),
                          OBS_DIM, ACTION_DIM)
    master = np.random.default_rng(seed)
    ep_seed_rng = np.random.default_rng(master.integers(2 ** 63))
    action_rng = np.random.default_rng(master.integers(2 ** 63))
    plan_rng = np.random.default_rng(master.integers(2 ** 63))
    update_rng = np.random.default_rng(master.integers(2 ** 63))

    run_hash = config_hash(env_cfg.key(), repr(cfg.told), repr(cfg.planner),
                           cfg.total_steps, cfg.seed_steps, seed)
    ckpt_path = None
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        ckpt_path = os.path.join(cfg.out_dir, "checkpoint_latest.npz")

    curves = []
    losses_acc = {"consistency": [], "reward": [], "value": [], "policy": []}
    steps = 0
    episode = 0
    skipped_run = 0
    aborted = False

    while steps < cfg.total_steps and not aborted:
        env = FixedWingEnv(replace(env_cfg, seed=int(ep_seed_rng.integers(2 ** 31 - 1))))
        obs = env.reset()
        warm = None
        ep_return = 0.0
        done = False
        while not done and steps < cfg.total_steps:
            if steps < cfg.seed_steps:
                action = action_rng.uniform(-1.0, 1.0, size=ACTION_DIM)
            else:
                model = LearnedModel(told)
                action, warm, _ = mppi_plan(model, obs, warm, cfg.planner, plan_rng)
            next_obs, reward, done, info = env.step(action)
            terminal = bool(info.get("diverged"))
            buffer.add(obs, np.asarray(info["commanded_action"]), reward,
                       next_obs, terminal, episode)
            obs = next_obs
            ep_return += reward
            steps += 1

            if steps >= cfg.seed_steps and len(buffer) >= cfg.batch_size + cfg.horizon + 1:
                for _ in range(cfg.updates_per_step):
                    batch = buffer.sample_segments(update_rng, cfg.batch_size, cfg.horizon)
                    rep = told.tdmpc_update(batch)
                    prep = told.policy_update(batch, update_rng)
                    told.polyak_update()
                    if rep["skipped"] or prep.get("skipped"):
                        skipped_run += 1
                    else:
                        skipped_run = 0
                        losses_acc["consistency"].append(rep["consistency"])
                        losses_acc["reward"].append(rep["reward"])
                        losses_acc["value"].append(rep["value"])
                        losses_acc["policy"].append(prep["policy_loss"])
                    if skipped_run > cfg.max_skipped_updates:
                        aborted = True
                        if ckpt_path and os.path.exists(ckpt_path):
                            told = load_checkpoint(ckpt_path)
                        break

            if ckpt_path and steps % cfg.checkpoint_every == 0:
                told.save(ckpt_path, config_hash=run_hash)

        episode += 1
        row = (steps, ep_return,
               _tail_mean(losses_acc["consistency"]), _tail_mean(losses_acc["reward"]),
               _tail_mean(losses_acc["value"]), _tail_mean(losses_acc["policy"]))
        curves.append(row)

    info = {"aborted": aborted, "episodes": episode, "steps": steps,
            "config_hash": run_hash}
    if cfg.out_dir:
        final = os.path.join(cfg.out_dir, "told_final.npz")
        told.save(final, config_hash=run_hash)
        info["checkpoint"] = final
        _write_curves(os.path.join(cfg.out_dir, "curves.csv"), curves)
    return told, curves, info


def _tail_mean(values, n: int = 200) -> float:
    if not values:
        return float("nan")
    return float(np.mean(values[-n:]))


def _write_curves(path: str, curves):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(CURVE_HEADER) + "\n")
        for row in curves:
            fh.write(",".join(repr(x) for x in row) + "\n")
