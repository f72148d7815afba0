"""Ring-buffer replay storage with horizon-segment sampling.

Segments never cross episode boundaries: each stored transition carries its
episode id and absolute write index, and a window is valid only if it is
contiguous and single-episode. Terminal flags mark true failure states
(divergence); episode timeouts end an episode without being terminal for
bootstrapping purposes.
"""

from __future__ import annotations

import numpy as np

from ..errors import SchemaError


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.action = np.zeros((self.capacity, action_dim))
        self.reward = np.zeros(self.capacity)
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.terminal = np.zeros(self.capacity)
        self.episode = np.full(self.capacity, -1, dtype=np.int64)
        self.abs_index = np.full(self.capacity, -1, dtype=np.int64)
        self.count = 0  # total transitions ever written

    def __len__(self) -> int:
        return min(self.count, self.capacity)

    def add(self, obs, action, reward, next_obs, terminal: bool, episode: int):
        i = self.count % self.capacity
        self.obs[i] = obs
        self.action[i] = action
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.terminal[i] = float(terminal)
        self.episode[i] = episode
        self.abs_index[i] = self.count
        self.count += 1

    def sample_segments(self, rng: np.random.Generator, batch: int, horizon: int):
        """Sample `batch` windows of `horizon` consecutive transitions.

        Returns dict with obs (B, H+1, D) — the trailing row comes from
        next_obs — plus action (B, H, A), reward (B, H), terminal (B, H).
        """
        size = len(self)
        if size < horizon + 1:
            raise SchemaError("not enough data to sample segments")
        starts = np.empty(batch, dtype=np.int64)
        k = 0
        attempts = 0
        while k < batch:
            attempts += 1
            if attempts > 1000:
                raise SchemaError("no valid segment windows available")
            cand = rng.integers(0, size, size=batch - k)
            for i in cand:
                if self._valid_window(i, horizon):
                    starts[k] = i
                    k += 1
                    if k == batch:
                        break
        idx = (starts[:, None] + np.arange(horizon)[None, :]) % self.capacity
        obs = np.concatenate([self.obs[idx], self.next_obs[idx[:, -1]][:, None]], axis=1)
        return {
            "obs": obs,
            "action": self.action[idx],
            "reward": self.reward[idx],
            "terminal": self.terminal[idx],
        }

    def _valid_window(self, start: int, horizon: int) -> bool:
        size = len(self)
        idx = (start + np.arange(horizon)) % self.capacity
        if np.any(idx >= size):
            return False
        ep = self.episode[idx]
        ab = self.abs_index[idx]
        return bool(np.all(ep == ep[0]) and np.all(np.diff(ab) == 1))
