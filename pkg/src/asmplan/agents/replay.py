"""Experience replay: plain FIFO buffer, proportional prioritized buffer
backed by a sum tree, and multi-step transition folding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

__all__ = [
    "Transition",
    "ReplayBuffer",
    "SumTree",
    "PrioritizedBuffer",
    "per_sample",
    "per_update",
    "nstep_fold",
]


@dataclass(frozen=True)
class Transition:
    """One (possibly multi-step-folded) experience tuple.

    ``s``/``s_next`` are observations for the network agents and raw env
    states for the tabular agent.  ``mask_next`` is the legal-action mask
    at ``s_next`` (all-true when the agent runs unmasked); it is ignored
    when ``terminal`` is set.
    """

    s: Any
    a: int
    r: float
    s_next: Any
    terminal: bool
    mask_next: np.ndarray | None = None


class ReplayBuffer:
    """Fixed-capacity FIFO store with uniform random sampling."""

    def __init__(self, capacity: int = 50000):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._write = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, tr: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(tr)
        else:
            self._items[self._write] = tr
        self._write = (self._write + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def snapshot(self) -> list[Transition]:
        """Contents oldest to newest (test hook for the FIFO invariant)."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._write:] + self._items[:self._write]


class SumTree:
    """Binary indexed tree over leaf weights with O(log n) prefix lookup."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        n = 1
        while n < capacity:
            n *= 2
        self.capacity = capacity
        self._leaves = n
        self._tree = np.zeros(2 * n)

    @property
    def total(self) -> float:
        return float(self._tree[1])

    def get(self, index: int) -> float:
        return float(self._tree[self._leaves + index])

    def set(self, index: int, value: float) -> None:
        if not 0 <= index < self.capacity:
            raise IndexError(f"leaf index {index} out of range")
        if value < 0:
            raise ValueError(f"leaf value must be >= 0, got {value}")
        pos = self._leaves + index
        self._tree[pos] = value
        pos //= 2
        while pos >= 1:
            self._tree[pos] = self._tree[2 * pos] + self._tree[2 * pos + 1]
            pos //= 2

    def find(self, prefix: float) -> int:
        """Leaf index i with cumulative_weight(i-1) <= prefix < cumulative_weight(i)."""
        pos = 1
        while pos < self._leaves:
            left = 2 * pos
            if prefix < self._tree[left]:
                pos = left
            else:
                prefix -= self._tree[left]
                pos = left + 1
        return pos - self._leaves


class PrioritizedBuffer:
    """Proportional prioritized replay.

    Items are stored FIFO like ReplayBuffer, but sampled with probability
    p_i^alpha / sum(p^alpha).  New items enter at the maximum priority
    seen so far, so every transition is sampled at least once before its
    priority can decay.
    """

    def __init__(self, capacity: int = 50000, alpha: float = 0.6,
                 priority_floor: float = 1e-3):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        if alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {alpha}")
        self.capacity = capacity
        self.alpha = alpha
        self.priority_floor = priority_floor
        self._items: list[Transition] = []
        self._write = 0
        self._tree = SumTree(capacity)
        self._max_priority = 1.0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, tr: Transition) -> None:
        idx = self._write
        if len(self._items) < self.capacity:
            self._items.append(tr)
        else:
            self._items[idx] = tr
        self._tree.set(idx, self._max_priority ** self.alpha)
        self._write = (self._write + 1) % self.capacity

    def sample(
        self, batch_size: int, beta: float, rng: np.random.Generator
    ) -> tuple[list[Transition], np.ndarray, np.ndarray]:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        total = self._tree.total
        prefixes = rng.random(batch_size) * total
        indices = np.array([self._tree.find(p) for p in prefixes], dtype=np.int64)
        probs = np.array([self._tree.get(i) for i in indices]) / total
        weights = (len(self._items) * probs) ** (-beta)
        weights = weights / weights.max()
        return [self._items[i] for i in indices], indices, weights

    def update_priorities(self, indices, td_errors) -> None:
        for i, delta in zip(indices, td_errors):
            i = int(i)
            if not 0 <= i < len(self._items):
                raise IndexError(f"index {i} outside buffer of size {len(self._items)}")
            p = abs(float(delta)) + self.priority_floor
            self._tree.set(i, p ** self.alpha)
            if p > self._max_priority:
                self._max_priority = p

    def probabilities(self) -> np.ndarray:
        """Current sampling distribution over stored items (test hook)."""
        ps = np.array([self._tree.get(i) for i in range(len(self._items))])
        return ps / ps.sum()


def per_sample(
    buffer: PrioritizedBuffer, batch_size: int, beta: float,
    rng: np.random.Generator,
) -> tuple[list[Transition], np.ndarray, np.ndarray]:
    return buffer.sample(batch_size, beta, rng)


def per_update(buffer: PrioritizedBuffer, indices, td_errors) -> PrioritizedBuffer:
    buffer.update_priorities(indices, td_errors)
    return buffer


def nstep_fold(queue: Sequence[Transition], n: int, gamma: float) -> Transition:
    """Fold the first min(n, len) transitions into one multi-step jump.

    The folded reward is sum of gamma^k * r_k over the folded span; the
    next state, mask, and terminal flag come from the last folded
    transition.  A span shorter than n is only valid when it ends the
    episode, so the bootstrap discount for non-terminal folds is always
    gamma^n.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not queue:
        raise ValueError("nstep_fold: empty queue")
    m = min(n, len(queue))
    for j in range(m):  # a terminal inside the window ends the fold
        if queue[j].terminal:
            m = j + 1
            break
    if m < n and not queue[m - 1].terminal:
        raise ValueError(
            f"queue of {len(queue)} transitions is shorter than n={n} "
            "but does not end the episode"
        )
    r = 0.0
    g = 1.0
    for k in range(m):
        r += g * queue[k].r
        g *= gamma
    last = queue[m - 1]
    first = queue[0]
    return Transition(
        s=first.s, a=first.a, r=r, s_next=last.s_next,
        terminal=last.terminal, mask_next=last.mask_next,
    )
