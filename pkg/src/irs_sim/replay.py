"""Fixed-capacity experience replay with uniform minibatch sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InsufficientSamplesError(ValueError):
    """Buffer holds fewer experiences than the requested batch size."""


@dataclass(eq=False)
class Experience:
    """One stored transition: state, action index, clipped reward, next state."""

    state: np.ndarray
    action: int
    reward: int
    next_state: np.ndarray

    def __post_init__(self) -> None:
        self.state = np.asarray(self.state, dtype=np.float64)
        self.next_state = np.asarray(self.next_state, dtype=np.float64)
        if self.state.shape != self.next_state.shape or self.state.ndim != 1:
            raise ValueError("state and next_state must be 1-D vectors of equal length")
        if self.action < 0:
            raise ValueError("action index must be non-negative")
        if self.reward not in (1, -1):
            raise ValueError(f"reward must be +1 or -1, got {self.reward}")


class ReplayBuffer:
    """Ring buffer that evicts the oldest experience once full."""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Experience] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        # Oldest to newest.
        if len(self._items) < self.capacity:
            yield from self._items
        else:
            yield from self._items[self._next :]
            yield from self._items[: self._next]

    def push(self, experience: Experience) -> None:
        if len(self._items) < self.capacity:
            self._items.append(experience)
        else:
            self._items[self._next] = experience
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng_seed) -> list[Experience]:
        """Uniform draw of ``batch_size`` experiences without replacement.

        Deterministic for a fixed seed; never mutates the buffer.

        Raises:
            InsufficientSamplesError: When the buffer holds fewer items than
                requested (the caller skips training for that episode).
        """
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if len(self._items) < batch_size:
            raise InsufficientSamplesError(
                f"buffer holds {len(self._items)} experiences, need {batch_size}"
            )
        rng = np.random.default_rng(rng_seed)
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in idx]
