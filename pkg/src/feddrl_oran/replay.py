"""Proportional prioritized replay backed by an array sum-tree."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SumTree:
    """Complete binary tree in an array; every parent holds the sum of its children.

    Leaves are padded up to a power of two so a whole batch of prefix-sum
    queries can descend level by level in lock-step.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.leaf_count = 1 << max(0, (capacity - 1).bit_length())
        self.nodes = np.zeros(2 * self.leaf_count - 1)

    @property
    def total(self) -> float:
        return float(self.nodes[0])

    @property
    def leaves(self) -> np.ndarray:
        start = self.leaf_count - 1
        return self.nodes[start:start + self.capacity]

    def update(self, index: int, value: float) -> None:
        node = index + self.leaf_count - 1
        self.nodes[node] = value
        while node > 0:
            node = (node - 1) // 2
            # recompute instead of adding deltas so rounding never accumulates
            self.nodes[node] = self.nodes[2 * node + 1] + self.nodes[2 * node + 2]

    def find(self, prefix) -> np.ndarray:
        """Leaf indices whose cumulative-sum interval contains each prefix value."""
        v = np.array(prefix, dtype=float, ndmin=1)
        node = np.zeros(len(v), dtype=np.int64)
        while True:
            left = 2 * node + 1
            if left[0] >= len(self.nodes):
                break
            left_sum = self.nodes[left]
            go_left = (v < left_sum) | (self.nodes[left + 1] <= 0.0)
            v = np.where(go_left, v, v - left_sum)
            node = np.where(go_left, left, left + 1)
        return node - (self.leaf_count - 1)


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    ids: np.ndarray  # insertion ids, used to detect overwritten slots
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)


class PerBuffer:
    """Ring buffer of transitions with priority-proportional sampling."""

    def __init__(self, capacity: int = 4000, state_dim: int = 6, alpha: float = 0.6,
                 beta: float = 0.4, eps: float = 1e-3):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.alpha = alpha
        self.beta = beta
        self.eps = eps
        self.tree = SumTree(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.slot_id = np.full(capacity, -1, dtype=np.int64)
        self.pushed = 0
        self.max_priority = 1.0
        self.stale_updates = 0

    def __len__(self) -> int:
        return min(self.pushed, self.capacity)

    def push(self, state, action: int, reward: float, next_state) -> None:
        slot = self.pushed % self.capacity
        self.states[slot] = state
        self.actions[slot] = action
        self.rewards[slot] = reward
        self.next_states[slot] = next_state
        self.slot_id[slot] = self.pushed
        self.tree.update(slot, self.max_priority ** self.alpha)
        self.pushed += 1

    def probabilities(self) -> np.ndarray:
        leaves = self.tree.leaves[: len(self)]
        return leaves / leaves.sum()

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Stratified draw: one uniform point inside each of ``batch_size`` equal slices."""
        size = len(self)
        if size < batch_size:
            raise ValueError(f"buffer holds {size} transitions, need {batch_size}")
        total = self.tree.total
        seg = total / batch_size
        points = (np.arange(batch_size) + rng.random(batch_size)) * seg
        points = np.minimum(points, np.nextafter(total, 0.0))
        slots = self.tree.find(points)
        slots = np.minimum(slots, size - 1)
        probs = self.tree.nodes[slots + self.tree.leaf_count - 1] / total
        weights = (size * probs) ** (-self.beta)
        weights /= weights.max()
        return Batch(self.states[slots].copy(), self.actions[slots].copy(),
                     self.rewards[slots].copy(), self.next_states[slots].copy(),
                     self.slot_id[slots].copy(), weights)

    def update_priorities(self, ids, td_abs) -> None:
        """Set ``p = |td| + eps`` for every sampled transition still resident."""
        for i, td in zip(np.asarray(ids), np.asarray(td_abs, dtype=float)):
            slot = int(i) % self.capacity
            if i < 0 or self.slot_id[slot] != i:
                self.stale_updates += 1
                continue
            p = abs(float(td)) + self.eps
            self.max_priority = max(self.max_priority, p)
            self.tree.update(slot, p ** self.alpha)


def annealed_beta(step: int, total_steps: int, start: float = 0.4, end: float = 1.0) -> float:
    if total_steps <= 0:
        return end
    return start + (end - start) * min(1.0, step / total_steps)
