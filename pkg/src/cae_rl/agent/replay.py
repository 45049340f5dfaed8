from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NotReadyError


@dataclass
class Transition:
    """One replay record. Windows are newest first (row 0 is time t)."""

    s_bar: np.ndarray       # [N+1, obs_dim]
    a_bar: np.ndarray       # [N+1, act_dim]
    reward: float
    s_bar_next: np.ndarray  # [N+1, obs_dim]
    terminated: bool = False


@dataclass
class Batch:
    s_bar: np.ndarray       # [B, N+1, obs_dim]
    a_bar: np.ndarray       # [B, N+1, act_dim]
    reward: np.ndarray      # [B]
    s_bar_next: np.ndarray  # [B, N+1, obs_dim]
    terminated: np.ndarray  # [B] float 0/1

    def __len__(self):
        return self.reward.shape[0]

    @classmethod
    def from_transitions(cls, items: list[Transition]) -> "Batch":
        return cls(
            np.stack([t.s_bar for t in items]),
            np.stack([t.a_bar for t in items]),
            np.array([t.reward for t in items], dtype=np.float64),
            np.stack([t.s_bar_next for t in items]),
            np.array([float(t.terminated) for t in items]),
        )


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, window: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.s_bar = np.zeros((capacity, window, obs_dim))
        self.a_bar = np.zeros((capacity, window, act_dim))
        self.reward = np.zeros(capacity)
        self.s_bar_next = np.zeros((capacity, window, obs_dim))
        self.terminated = np.zeros(capacity)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition) -> None:
        i = self._next
        self.s_bar[i] = t.s_bar
        self.a_bar[i] = t.a_bar
        self.reward[i] = t.reward
        self.s_bar_next[i] = t.s_bar_next
        self.terminated[i] = float(t.terminated)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def get(self, idx) -> Batch:
        idx = np.atleast_1d(idx)
        return Batch(self.s_bar[idx], self.a_bar[idx], self.reward[idx],
                     self.s_bar_next[idx], self.terminated[idx])

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < batch_size:
            raise NotReadyError(f"replay holds {self.size} transitions, need {batch_size}")
        return rng.choice(self.size, size=batch_size, replace=False)

    def sample(self, batch_size: int, rng) -> Batch:
        """Uniform draw without replacement; ``rng`` may be a seed or a Generator."""
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        return self.get(self.sample_indices(batch_size, rng))
