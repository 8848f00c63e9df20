"""Bounded FIFO replay buffer with uniform sampling with replacement."""

from __future__ import annotations

import numpy as np

from preheat.errors import ConfigurationError


class ReplayBuffer:
    """Stores normalized observations and actions as flat arrays.

    ``terminal`` marks transitions whose successor is not bootstrapped (target
    reached or solver failure); time-limit stops are stored as nonterminal.
    """

    FIELDS = ("obs", "action", "reward", "next_obs", "terminal")

    def __init__(self, capacity: int, obs_dim: int = 5, act_dim: int = 3):
        if capacity < 1:
            raise ConfigurationError("buffer capacity must be >= 1")
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, act_dim))
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.terminal = np.zeros(capacity)
        self.cursor = 0  # next slot to write
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def store(self, obs, action, reward, next_obs, terminal) -> None:
        i = self.cursor
        self.obs[i] = obs
        self.action[i] = action
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.terminal[i] = float(terminal)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ordered_indices(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        start = self.cursor if self.size == self.capacity else 0
        return (start + np.arange(self.size)) % self.capacity

    def sample(self, n: int, rng: np.random.Generator) -> dict:
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        if n < 1:
            raise ValueError("sample size must be >= 1")
        idx = rng.integers(0, self.size, size=n)
        batch = {name: getattr(self, name)[idx] for name in self.FIELDS}
        batch["index"] = idx
        return batch

    def state_dict(self) -> dict:
        out = {name: getattr(self, name)[: self.size].copy() for name in self.FIELDS}
        out.update(capacity=self.capacity, cursor=self.cursor, size=self.size)
        return out

    def load_state_dict(self, d: dict) -> None:
        if d["capacity"] != self.capacity:
            raise ConfigurationError("buffer capacity mismatch")
        for name in self.FIELDS:
            getattr(self, name)[: d["size"]] = d[name]
        self.cursor, self.size = int(d["cursor"]), int(d["size"])
