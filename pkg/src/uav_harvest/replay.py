"""Fixed-capacity transition store with combined experience replay.

Every sampled minibatch contains the agent's latest transition; the other
m-1 slots are uniform draws (with replacement) over the whole buffer, so
new experience always reaches the learner immediately regardless of the
buffer size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encode import Observation
from .mdp import Action


@dataclass(frozen=True, eq=False)
class Transition:
    obs: Observation
    action: Action
    reward: float
    next_obs: Observation
    terminal: bool

    def __post_init__(self):
        if self.obs.map_tensor.shape != self.next_obs.map_tensor.shape:
            raise ValueError("obs and next_obs shapes differ")


class ReplayMemory:
    """FIFO ring buffer of transitions."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0           # ring insertion index
        self._latest = -1        # index of the most recent push
        self.inserted = 0        # total pushes ever

    def __len__(self):
        return len(self._items)

    def push(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
            self._latest = len(self._items) - 1
        else:
            self._items[self._next] = t
            self._latest = self._next
        self._next = (self._next + 1) % self.capacity
        self.inserted += 1

    @property
    def latest(self) -> Transition:
        if self._latest < 0:
            raise IndexError("replay memory is empty")
        return self._items[self._latest]

    def sample_combined(self, m: int, rng: np.random.Generator) -> list[Transition]:
        """The latest transition plus m-1 uniform draws over the buffer."""
        if not self._items:
            raise IndexError("cannot sample from an empty replay memory")
        if m < 1:
            raise ValueError("batch size must be >= 1")
        batch = [self._items[self._latest]]
        if m > 1:
            idx = rng.integers(0, len(self._items), size=m - 1)
            batch.extend(self._items[int(i)] for i in idx)
        return batch

    def snapshot(self) -> list[Transition]:
        """Buffer contents in insertion order (oldest first); for tests."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next:] + self._items[:self._next]
