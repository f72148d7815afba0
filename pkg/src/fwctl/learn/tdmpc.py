"""Jointly learned dynamics/reward/value/policy models and their updates.

The latent state is the observation itself under a fixed per-field scaling
(no learned encoder). A dynamics head predicts the scaled residual to the
next latent, reward and twin value heads read (latent, action), and a
squashed-Gaussian policy provides the proposal distribution for planning.
Model training unrolls the dynamics over short segments and combines
consistency, reward and temporal-difference value errors with geometric
per-step weights; all gradients are reverse-mode by hand (validated against
finite differences in the test suite).
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass

import numpy as np

from ..env import OBS_SCALE
from ..errors import ConfigError, SchemaError
from .nets import Adam, Mlp

LOG2PI = np.log(2.0 * np.pi)
SQUASH_EPS = 1e-6

CHECKPOINT_VERSION = 1


@dataclass
class ToldConfig:
    obs_dim: int = 14
    action_dim: int = 2
    hidden: tuple = (64, 64)
    consistency_coef: float = 20.0
    reward_coef: float = 0.1
    value_coef: float = 0.1
    rho: float = 0.5
    discount: float = 0.99
    polyak_tau: float = 0.01
    lr: float = 3e-4
    entropy_coef: float = 0.2
    log_std_min: float = -5.0
    log_std_max: float = 2.0
    seed: int = 0


class ToldLite:
    """Dynamics, reward, twin value and policy networks with target copies."""

    def __init__(self, cfg: ToldConfig | None = None, obs_scale: np.ndarray | None = None):
        self.cfg = cfg or ToldConfig()
        c = self.cfg
        self.obs_scale = np.asarray(obs_scale if obs_scale is not None else OBS_SCALE,
                                    dtype=float)
        if self.obs_scale.shape != (c.obs_dim,):
            raise ConfigError("obs_scale width must match obs_dim")
        rng = np.random.default_rng(c.seed)
        din = c.obs_dim + c.action_dim
        h = list(c.hidden)
        self.dynamics = Mlp([din] + h + [c.obs_dim], rng=rng)
        self.reward = Mlp([din] + h + [1], rng=rng)
        self.q1 = Mlp([din] + h + [1], rng=rng)
        self.q2 = Mlp([din] + h + [1], rng=rng)
        self.policy = Mlp([c.obs_dim] + h + [2 * c.action_dim], rng=rng)
        self.q1_target = copy.deepcopy(self.q1)
        self.q2_target = copy.deepcopy(self.q2)
        self.model_opt = Adam(self._model_params(), lr=c.lr)
        self.policy_opt = Adam(self.policy.params(), lr=c.lr)

    # -- parameter plumbing ---------------------------------------------------

    def _model_params(self) -> list:
        return (self.dynamics.params() + self.reward.params()
                + self.q1.params() + self.q2.params())

    def _set_model_params(self, params: list):
        nets = (self.dynamics, self.reward, self.q1, self.q2)
        k = 0
        for net in nets:
            n = len(net.params())
            net.set_params(params[k:k + n])
            k += n

    def polyak_update(self):
        """theta_target <- (1 - tau) * theta_target + tau * theta, elementwise."""
        tau = self.cfg.polyak_tau
        for online, target in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
            new = [(1.0 - tau) * pt + tau * po
                   for po, pt in zip(online.params(), target.params())]
            target.set_params(new)

    # -- latent handling ------------------------------------------------------

    def scale_obs(self, obs: np.ndarray) -> np.ndarray:
        return np.asarray(obs, dtype=float) / self.obs_scale

    def unscale_obs(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float) * self.obs_scale

    def predict_next_scaled(self, y: np.ndarray, action: np.ndarray) -> np.ndarray:
        inp = np.concatenate([y, action], axis=-1)
        return y + self.dynamics.apply(inp)

    def predict_reward_scaled(self, y: np.ndarray, action: np.ndarray) -> np.ndarray:
        inp = np.concatenate([y, action], axis=-1)
        return self.reward.apply(inp)[..., 0]

    def q_min_scaled(self, y: np.ndarray, action: np.ndarray,
                     use_target: bool = False) -> np.ndarray:
        inp = np.concatenate([y, action], axis=-1)
        q1 = (self.q1_target if use_target else self.q1).apply(inp)[..., 0]
        q2 = (self.q2_target if use_target else self.q2).apply(inp)[..., 0]
        return np.minimum(q1, q2)

    # -- policy head ----------------------------------------------------------

    def _split_policy_out(self, out: np.ndarray):
        a_dim = self.cfg.action_dim
        mu = out[..., :a_dim]
        raw_ls = out[..., a_dim:]
        t = np.tanh(raw_ls)
        log_std = self.cfg.log_std_min + 0.5 * (self.cfg.log_std_max
                                                - self.cfg.log_std_min) * (t + 1.0)
        return mu, log_std, t

    def policy_stats(self, y: np.ndarray):
        """(mean_action, std) of the squashed policy at scaled latents."""
        out = self.policy.apply(y)
        mu, log_std, _ = self._split_policy_out(out)
        return np.tanh(mu), np.exp(log_std)

    def policy_sample(self, y: np.ndarray, eps: np.ndarray):
        """Reparameterized squashed-Gaussian sample and its log-probability."""
        out = self.policy.apply(y)
        mu, log_std, _ = self._split_policy_out(out)
        std = np.exp(log_std)
        u = mu + std * eps
        a = np.tanh(u)
        logp = np.sum(-0.5 * eps * eps - log_std - 0.5 * LOG2PI
                      - np.log(1.0 - a * a + SQUASH_EPS), axis=-1)
        return a, logp

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None,
            deterministic: bool = True) -> np.ndarray:
        """Policy action for raw observations (no planning)."""
        y = self.scale_obs(obs)
        if deterministic:
            return self.policy_stats(y)[0]
        eps = rng.standard_normal(y.shape[:-1] + (self.cfg.action_dim,))
        return self.policy_sample(y, eps)[0]

    # -- model update ---------------------------------------------------------

    def td_targets(self, y_next: np.ndarray, reward: np.ndarray,
                   terminal: np.ndarray) -> np.ndarray:
        """r + gamma * (1 - terminal) * min_i Q_target_i(z', pi(z')), no grad."""
        a_next = self.policy_stats(y_next)[0]
        q = self.q_min_scaled(y_next, a_next, use_target=True)
        return reward + self.cfg.discount * (1.0 - terminal) * q

    def tdmpc_update(self, batch: dict) -> dict:
        """One gradient step on the unrolled consistency/reward/value loss.

        batch: obs (B, H+1, D) raw, action (B, H, A), reward (B, H),
        terminal (B, H). Returns a loss report; skips the parameter update
        (flagged) if any loss is non-finite.
        """
        c = self.cfg
        obs = np.asarray(batch["obs"], dtype=float)
        actions = np.asarray(batch["action"], dtype=float)
        rewards = np.asarray(batch["reward"], dtype=float)
        terminals = np.asarray(batch["terminal"], dtype=float)
        bsz, horizon = actions.shape[0], actions.shape[1]
        if obs.shape[1] != horizon + 1:
            raise SchemaError("obs must cover horizon + 1 slices")

        y = self.scale_obs(obs)
        y_hat = [y[:, 0]]
        dyn_caches, r_caches, q1_caches, q2_caches = [], [], [], []
        r_hat, q1_hat, q2_hat, q_targets = [], [], [], []
        for t in range(horizon):
            inp = np.concatenate([y_hat[t], actions[:, t]], axis=-1)
            d, cd = self.dynamics.apply_cached(inp)
            y_hat.append(y_hat[t] + d)
            rh, cr = self.reward.apply_cached(inp)
            qh1, cq1 = self.q1.apply_cached(inp)
            qh2, cq2 = self.q2.apply_cached(inp)
            dyn_caches.append(cd)
            r_caches.append(cr)
            q1_caches.append(cq1)
            q2_caches.append(cq2)
            r_hat.append(rh[:, 0])
            q1_hat.append(qh1[:, 0])
            q2_hat.append(qh2[:, 0])
            q_targets.append(self.td_targets(y[:, t + 1], rewards[:, t], terminals[:, t]))

        losses = {"consistency": 0.0, "reward": 0.0, "value": 0.0}
        for t in range(horizon):
            w = c.rho ** t
            diff = y_hat[t + 1] - y[:, t + 1]
            losses["consistency"] += w * float(np.mean(diff * diff))
            losses["reward"] += w * float(np.mean((r_hat[t] - rewards[:, t]) ** 2))
            losses["value"] += w * 0.5 * float(
                np.mean((q1_hat[t] - q_targets[t]) ** 2)
                + np.mean((q2_hat[t] - q_targets[t]) ** 2))
        total = (c.consistency_coef * losses["consistency"]
                 + c.reward_coef * losses["reward"] + c.value_coef * losses["value"])
        report = dict(losses, total=total, skipped=False)
        if not np.isfinite(total):
            report["skipped"] = True
            return report

        # reverse pass: g[t] is d(total)/d(y_hat[t])
        dim = c.obs_dim
        g = [np.zeros((bsz, dim)) for _ in range(horizon + 1)]
        param_grads = None
        for t in reversed(range(horizon)):
            w = c.rho ** t
            diff = y_hat[t + 1] - y[:, t + 1]
            g[t + 1] = g[t + 1] + w * c.consistency_coef * 2.0 * diff / (bsz * dim)

            gd, gin_d = self.dynamics.grad(dyn_caches[t], g[t + 1])
            up_r = (w * c.reward_coef * 2.0 * (r_hat[t] - rewards[:, t]) / bsz)[:, None]
            gr, gin_r = self.reward.grad(r_caches[t], up_r)
            up_q1 = (w * c.value_coef * (q1_hat[t] - q_targets[t]) / bsz)[:, None]
            gq1, gin_q1 = self.q1.grad(q1_caches[t], up_q1)
            up_q2 = (w * c.value_coef * (q2_hat[t] - q_targets[t]) / bsz)[:, None]
            gq2, gin_q2 = self.q2.grad(q2_caches[t], up_q2)

            step_grads = gd + gr + gq1 + gq2
            if param_grads is None:
                param_grads = step_grads
            else:
                param_grads = [a + b for a, b in zip(param_grads, step_grads)]
            g[t] = (g[t] + g[t + 1] + gin_d[:, :dim] + gin_r[:, :dim]
                    + gin_q1[:, :dim] + gin_q2[:, :dim])

        params = self._model_params()
        self._set_model_params(self.model_opt.step(params, param_grads))
        return report

    # -- policy update ----------------------------------------------------------

    def policy_update(self, batch: dict, rng: np.random.Generator) -> dict:
        obs = np.asarray(batch["obs"], dtype=float)
        y = self.scale_obs(obs.reshape(-1, obs.shape[-1]))
        eps = rng.standard_normal((y.shape[0], self.cfg.action_dim))
        loss, grads, report = self.policy_loss_and_grads(y, eps)
        if not np.isfinite(loss):
            report["skipped"] = True
            return report
        self.policy.set_params(self.policy_opt.step(self.policy.params(), grads))
        report["skipped"] = False
        return report

    def policy_loss_and_grads(self, y: np.ndarray, eps: np.ndarray):
        """Loss mean(alpha * log pi - min Q) and its policy-parameter gradients."""
        c = self.cfg
        n = y.shape[0]
        out, pol_cache = self.policy.apply_cached(y)
        mu, log_std, t_raw = self._split_policy_out(out)
        std = np.exp(log_std)
        u = mu + std * eps
        a = np.tanh(u)
        one_m_a2 = 1.0 - a * a
        logp = np.sum(-0.5 * eps * eps - log_std - 0.5 * LOG2PI
                      - np.log(one_m_a2 + SQUASH_EPS), axis=-1)

        inp = np.concatenate([y, a], axis=-1)
        q1v, c1 = self.q1.apply_cached(inp)
        q2v, c2 = self.q2.apply_cached(inp)
        q1v, q2v = q1v[:, 0], q2v[:, 0]
        take1 = q1v <= q2v
        qmin = np.where(take1, q1v, q2v)
        loss = float(np.mean(c.entropy_coef * logp - qmin))

        # dL/da: entropy term + value term through the active critic branch
        up1 = (-take1.astype(float) / n)[:, None]
        up2 = (-(~take1).astype(float) / n)[:, None]
        _, gin1 = self.q1.grad(c1, up1)
        _, gin2 = self.q2.grad(c2, up2)
        dl_da = gin1[:, y.shape[1]:] + gin2[:, y.shape[1]:]
        dl_da = dl_da + (c.entropy_coef / n) * 2.0 * a / (one_m_a2 + SQUASH_EPS)

        dl_du = dl_da * one_m_a2
        dl_dmu = dl_du
        dl_dstd = dl_du * eps - (c.entropy_coef / n) / std
        dl_dlogstd = dl_dstd * std
        dt = 0.5 * (c.log_std_max - c.log_std_min) * (1.0 - t_raw * t_raw)
        upstream = np.concatenate([dl_dmu, dl_dlogstd * dt], axis=-1)
        grads, _ = self.policy.grad(pol_cache, upstream)
        report = {"policy_loss": loss, "entropy": float(-np.mean(logp))}
        return loss, grads, report

    # -- persistence ------------------------------------------------------------

    def save(self, path: str, config_hash: str = ""):
        arrays = {}
        for name, net in (("dynamics", self.dynamics), ("reward", self.reward),
                          ("q1", self.q1), ("q2", self.q2), ("policy", self.policy),
                          ("q1_target", self.q1_target), ("q2_target", self.q2_target)):
            for i, p in enumerate(net.params()):
                arrays[f"{name}__{i}"] = p
        meta = json.dumps({"version": CHECKPOINT_VERSION, "config": asdict(self.cfg),
                           "config_hash": config_hash})
        np.savez(path, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8),
                 __obs_scale__=self.obs_scale, **arrays)


def load_checkpoint(path: str) -> ToldLite:
    data = np.load(path)
    meta = json.loads(bytes(data["__meta__"]).decode())
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {meta.get('version')}")
    cfg_d = meta["config"]
    cfg_d["hidden"] = tuple(cfg_d["hidden"])
    told = ToldLite(ToldConfig(**cfg_d), obs_scale=data["__obs_scale__"])
    for name, net in (("dynamics", told.dynamics), ("reward", told.reward),
                      ("q1", told.q1), ("q2", told.q2), ("policy", told.policy),
                      ("q1_target", told.q1_target), ("q2_target", told.q2_target)):
        params = [data[f"{name}__{i}"] for i in range(len(net.params()))]
        net.set_params(params)
    return told


class LearnedModel:
    """Planner adapter exposing the learned networks over raw observations."""

    def __init__(self, told: ToldLite):
        self.told = told

    def tile(self, z0: np.ndarray, n: int) -> np.ndarray:
        z0 = np.asarray(z0, dtype=float)
        return np.broadcast_to(z0, (n,) + z0.shape).copy()

    def step(self, z: np.ndarray, a: np.ndarray):
        y = self.told.scale_obs(z)
        inp = np.concatenate([y, a], axis=-1)
        y_next = y + self.told.dynamics.apply(inp)
        r = self.told.reward.apply(inp)[..., 0]
        return self.told.unscale_obs(y_next), r

    def next(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        return self.step(z, a)[0]

    def reward(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        return self.step(z, a)[1]

    def q_value(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        return self.told.q_min_scaled(self.told.scale_obs(z), a)

    def policy_prior(self, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        y = self.told.scale_obs(z)
        eps = rng.standard_normal(y.shape[:-1] + (self.told.cfg.action_dim,))
        return self.told.policy_sample(y, eps)[0]


def caps_loss(policy_t: np.ndarray, policy_next: np.ndarray, policy_perturbed: np.ndarray,
              lambda_ts: float = 0.05, lambda_ss: float = 0.0):
    """Temporal and spatial smoothness penalties on policy outputs.

    policy_* are the policy evaluations at s_t, s_{t+1} and at a perturbed
    copy of s_t (the caller draws the perturbation, e.g. N(s_t, 0.01)).
    Batched inputs are averaged. Returns (temporal, spatial, combined); the
    time-only variant is lambda_ss = 0.
    """
    pt = np.atleast_2d(np.asarray(policy_t, dtype=float))
    pn = np.atleast_2d(np.asarray(policy_next, dtype=float))
    ph = np.atleast_2d(np.asarray(policy_perturbed, dtype=float))
    l_ts = float(np.mean(np.linalg.norm(pt - pn, axis=-1)))
    l_ss = float(np.mean(np.linalg.norm(pt - ph, axis=-1)))
    return l_ts, l_ss, lambda_ts * l_ts + lambda_ss * l_ss
