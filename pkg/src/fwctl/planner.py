"""Sampling-based planning: MPPI over action sequences with a bootstrapped
terminal value.

The planner is generic over a batched plan model exposing

    tile(z0, n)          replicate a start state into a batch
    step(z, a)           advance one step, returning (z', reward)
    next(z, a)           transition only
    reward(z, a)         reward only
    q_value(z, a)        terminal value estimate
    policy_prior(z, rng) prior action sample per batch entry

`GroundTruthModel` adapts the simulator itself (frozen-wind rollouts) so the
planner can run without any learned components; the learned-model adapter
lives in fwctl.learn.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import controllers, fastdyn
from .airframe import AeroModel
from .env import RewardConfig, SimState, kernel_args, pack_sim, pack_wind, reward_for, unpack_sim
from .errors import ConfigError
from .frames import rotate_ned_to_body
from .wind import WindSample


@dataclass
class PlannerConfig:
    """MPPI settings; defaults follow the model-based agent configuration."""

    horizon: int = 3
    iterations: int = 6
    samples: int = 512
    elites: int = 64
    policy_trajs: int = 24
    temperature: float = 0.5
    discount: float = 0.99
    std_init: float = 0.5
    std_floor: float = 0.05
    warm_start_shift: bool = True
    stochastic: bool = False
    action_dim: int = 2
    action_repeat: int = 1  # model steps per planned action (macro actions)
    noise_correlation: float = 0.0  # 0 = i.i.d. per step; 1 = one shared offset

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.elites > self.samples + self.policy_trajs:
            raise ConfigError("elites must not exceed the candidate count")
        if self.std_floor <= 0.0:
            raise ConfigError("std floor must be positive")


@dataclass
class ActionDistribution:
    """Per-step Gaussian over an H-step action sequence."""

    mean: np.ndarray  # (H, action_dim)
    std: np.ndarray

    @classmethod
    def initial(cls, cfg: PlannerConfig) -> "ActionDistribution":
        shape = (cfg.horizon, cfg.action_dim)
        return cls(mean=np.zeros(shape), std=np.full(shape, cfg.std_init))

    def shifted(self, cfg: PlannerConfig) -> "ActionDistribution":
        """Warm start for the next control step: drop the first row, repeat the last.

        With macro actions (action_repeat > 1) the plan advances less than one
        row per control step, so the mean is kept in place instead.
        """
        if cfg.action_repeat > 1:
            mean = self.mean.copy()
        else:
            mean = np.vstack([self.mean[1:], self.mean[-1:]])
        return ActionDistribution(mean=mean, std=np.full_like(mean, cfg.std_init))


def elite_weights(scores: np.ndarray, temperature: float) -> np.ndarray:
    """Importance weights over elite scores: w_i ~ exp(tau * (s_i - s_max))."""
    shifted = temperature * (scores - np.max(scores))
    w = np.exp(shifted)
    return w / np.sum(w)


def rollout_scores(model, z0, sequences: np.ndarray, cfg: PlannerConfig,
                   rng: np.random.Generator) -> np.ndarray:
    """Discounted return of each (N, H, action_dim) candidate plus terminal value."""
    n = sequences.shape[0]
    z = model.tile(z0, n)
    total = np.zeros(n)
    disc = 1.0
    for t in range(sequences.shape[1]):
        for _ in range(cfg.action_repeat):
            z, r = model.step(z, sequences[:, t])
            total += disc * np.asarray(r)
            disc *= cfg.discount
    a_term = model.policy_prior(z, rng)
    total += disc * np.asarray(model.q_value(z, a_term))
    return np.where(np.isfinite(total), total, -np.inf)


def evaluate_trajectory(model, z0, actions: np.ndarray,
                        discount: float = 0.99,
                        rng: np.random.Generator | None = None) -> float:
    """Return estimate of a single H-step action sequence.

    Sum of discounted rewards over the horizon plus the discounted terminal
    value at the final state, with the terminal action drawn from the policy
    prior. Non-finite model output yields -inf (trajectory discarded).
    """
    actions = np.asarray(actions, dtype=float)
    if actions.ndim != 2:
        raise ConfigError("actions must be (H, action_dim)")
    cfg = PlannerConfig(horizon=actions.shape[0], discount=discount,
                        action_dim=actions.shape[1])
    rng = rng or np.random.default_rng(0)
    return float(rollout_scores(model, z0, actions[None], cfg, rng)[0])


def _prior_sequences(model, z0, n: int, cfg: PlannerConfig,
                     rng: np.random.Generator) -> np.ndarray:
    """Roll the policy prior forward to produce candidate action sequences.

    Models exposing a deterministic `policy_prior_mean` are explored with one
    constant offset per trajectory, so the pool always contains temporally
    smooth candidates; otherwise each step samples the stochastic prior.
    """
    z = model.tile(z0, n)
    seqs = np.empty((n, cfg.horizon, cfg.action_dim))
    smooth = hasattr(model, "policy_prior_mean")
    offset = None
    if smooth:
        scale = getattr(model, "prior_noise", 0.25)
        offset = scale * rng.standard_normal((n, cfg.action_dim))
    for t in range(cfg.horizon):
        if smooth:
            a = np.clip(model.policy_prior_mean(z) + offset, -1.0, 1.0)
        else:
            a = model.policy_prior(z, rng)
        seqs[:, t] = a
        if t + 1 < cfg.horizon:
            for _ in range(cfg.action_repeat):
                z, _ = model.step(z, a)
    return seqs


def mppi_plan(model, z0, warm_start: ActionDistribution | None,
              cfg: PlannerConfig, rng: np.random.Generator):
    """One receding-horizon planning step.

    Iteratively refits a Gaussian over action sequences to the elite
    candidates using exponential importance weights; the best sequence seen
    so far is kept in the candidate pool so the best elite score never
    decreases across iterations. Returns (action, warm_start_for_next_step,
    info dict).
    """
    dist = warm_start or ActionDistribution.initial(cfg)
    mean = np.array(dist.mean, dtype=float)
    std = np.maximum(np.array(dist.std, dtype=float), cfg.std_floor)
    if mean.shape != (cfg.horizon, cfg.action_dim):
        raise ConfigError("warm start shape does not match the planner horizon")

    best_seq = None
    best_score = -np.inf
    best_history = []
    for _ in range(cfg.iterations):
        noise = rng.standard_normal((cfg.samples, cfg.horizon, cfg.action_dim))
        if cfg.noise_correlation > 0.0:
            c = cfg.noise_correlation
            shared = rng.standard_normal((cfg.samples, 1, cfg.action_dim))
            noise = c * shared + np.sqrt(1.0 - c * c) * noise
        gaussian = np.clip(mean + std * noise, -1.0, 1.0)
        prior = np.clip(_prior_sequences(model, z0, cfg.policy_trajs, cfg, rng),
                        -1.0, 1.0) if cfg.policy_trajs > 0 else \
            np.empty((0, cfg.horizon, cfg.action_dim))
        pool = [gaussian, prior]
        if best_seq is not None:
            pool.append(best_seq[None])
        candidates = np.concatenate(pool, axis=0)
        scores = rollout_scores(model, z0, candidates, cfg, rng)

        order = np.argsort(-scores, kind="stable")[:cfg.elites]
        elite_seqs = candidates[order]
        elite_scores = scores[order]
        if not np.isfinite(elite_scores[0]):
            fallback = np.clip(model.policy_prior(model.tile(z0, 1), rng)[0], -1.0, 1.0)
            return fallback, dist.shifted(cfg) if cfg.warm_start_shift else dist, \
                {"fallback": True, "best_scores": best_history}
        if elite_scores[0] >= best_score:
            best_score = float(elite_scores[0])
            best_seq = elite_seqs[0].copy()
        best_history.append(best_score)

        finite = np.isfinite(elite_scores)
        w = elite_weights(elite_scores[finite], cfg.temperature)
        kept = elite_seqs[finite]
        mean = np.einsum("i,ihj->hj", w, kept)
        var = np.einsum("i,ihj->hj", w, (kept - mean) ** 2)
        std = np.maximum(np.sqrt(var), cfg.std_floor)

    if cfg.stochastic:
        action = np.clip(mean[0] + std[0] * rng.standard_normal(cfg.action_dim), -1.0, 1.0)
    else:
        action = np.clip(mean[0], -1.0, 1.0)
    out_dist = ActionDistribution(mean=mean, std=std)
    warm = out_dist.shifted(cfg) if cfg.warm_start_shift else out_dist
    return action, warm, {"fallback": False, "best_scores": best_history,
                          "best_seq": best_seq, "final_std": std.copy()}


class GroundTruthModel:
    """Plan model backed by the simulator itself.

    Rollouts hold the wind sample captured at planning time constant over the
    horizon (the planner cannot anticipate turbulence). The terminal value is
    a configurable heuristic: the current attitude reward scaled by the
    closed-loop geometric-decay horizon, so terminal tracking error dominates
    the score. The policy prior is the stateless PD attitude law plus
    exploration noise. Rollout states are packed (N, SIM_DIM) arrays driven
    through the same compiled kernel as the environment.
    """

    def __init__(self, model: AeroModel, wind: WindSample, reward_cfg: RewardConfig,
                 dt: float, va_ref: float, roll_settle_s: float = 0.3,
                 pitch_settle_s: float = 1.5, airspeed_weight: float = 2.0,
                 prior_noise: float = 0.25, discount: float = 0.99):
        self.model = model
        self.wind9 = pack_wind(wind)
        self.reward_cfg = reward_cfg
        self.dt = dt
        self.va_ref = va_ref
        self.prior_noise = prior_noise
        # per-axis geometric persistence of tracking error under good control;
        # pitch progress is slower (often thrust-limited), so its error is
        # worth more at the horizon boundary
        self.roll_gain = 1.0 / (1.0 - discount * np.exp(-dt / roll_settle_s))
        self.pitch_gain = 1.0 / (1.0 - discount * np.exp(-dt / pitch_settle_s))
        # airspeed deficit degrades all future control authority
        self.airspeed_weight = airspeed_weight
        self._args = kernel_args(model)

    def tile(self, z0, n: int) -> np.ndarray:
        packed = pack_sim(z0) if isinstance(z0, SimState) else np.asarray(z0, float)
        return np.ascontiguousarray(np.broadcast_to(packed, (n,) + packed.shape).copy())

    def step(self, z: np.ndarray, a: np.ndarray):
        prev_action = z[:, 23:25]
        z_next, ex = fastdyn.advance_kernel(
            z, np.ascontiguousarray(a), self.wind9, self.dt, self.va_ref, *self._args)
        r = reward_for(self.reward_cfg,
                       ex[:, fastdyn.EX_PHI], ex[:, fastdyn.EX_THETA],
                       z_next[:, 19], z_next[:, 20],
                       ex[:, fastdyn.EX_CMDA:fastdyn.EX_CMDE + 1], prev_action)
        return z_next, r

    def next(self, z, a: np.ndarray):
        single = isinstance(z, SimState)
        if single:
            z = self.tile(z, 1)
            a = np.asarray(a, float)[None]
        z_next = self.step(np.atleast_2d(z), np.atleast_2d(a))[0]
        return unpack_sim(z_next[0]) if single else z_next

    def reward(self, z, a: np.ndarray):
        single = isinstance(z, SimState)
        if single:
            z = self.tile(z, 1)
            a = np.asarray(a, float)[None]
        r = self.step(np.atleast_2d(z), np.atleast_2d(a))[1]
        return float(r[0]) if single else r

    def _attitude(self, z: np.ndarray):
        qw, qx, qy, qz = z[:, 3], z[:, 4], z[:, 5], z[:, 6]
        phi = np.arctan2(2.0 * (qw * qx + qy * qz), 1.0 - 2.0 * (qx * qx + qy * qy))
        theta = np.arcsin(np.clip(2.0 * (qw * qy - qx * qz), -1.0, 1.0))
        return phi, theta

    def q_value(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        phi, theta = self._attitude(z)
        cfg = self.reward_cfg
        r_phi = np.clip(np.abs(phi - z[:, 19]) / cfg.zeta_phi, 0.0, cfg.c_phi)
        r_theta = np.clip(np.abs(theta - z[:, 20]) / cfg.zeta_theta, 0.0, cfg.c_theta)
        deficit = np.maximum(0.0, self.va_ref - self._airspeed(z))
        return -(self.roll_gain * r_phi + self.pitch_gain * r_theta
                 + self.airspeed_weight * deficit)

    def _airspeed(self, z: np.ndarray) -> np.ndarray:
        wind_body = rotate_ned_to_body(z[:, 3:7], np.broadcast_to(self.wind9[0:3], (z.shape[0], 3)))
        v_r = z[:, 7:10] - wind_body - self.wind9[3:6]
        return np.sqrt(np.sum(v_r * v_r, axis=-1))

    def policy_prior(self, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        phi, theta = self._attitude(z)
        pid = controllers.pid_attitude_arrays(z[:, 19] - phi, z[:, 20] - theta,
                                              z[:, 10], z[:, 11], z[:, 21], z[:, 22])
        noise = self.prior_noise * rng.standard_normal(pid.shape)
        return np.clip(pid + noise, -1.0, 1.0)


def reward_base_like(cfg: RewardConfig, phi, theta, phi_ref, theta_ref):
    """Attitude part of the reward, used by the terminal-value heuristic."""
    r_phi = np.clip(np.abs(phi - phi_ref) / cfg.zeta_phi, 0.0, cfg.c_phi)
    r_theta = np.clip(np.abs(theta - theta_ref) / cfg.zeta_theta, 0.0, cfg.c_theta)
    return -(r_phi + r_theta)


def ground_truth_model(env) -> GroundTruthModel:
    """Plan model bound to an environment's current state and frozen wind."""
    _, wind = env.plan_snapshot()
    return GroundTruthModel(env.model, wind, env.cfg.reward, env.cfg.dt, env.cfg.va_ref)
