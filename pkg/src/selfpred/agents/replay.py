"""Uniform replay over a fixed-capacity ring with n-step returns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numkit.rng import as_generator


@dataclass
class ReplaySample:
    indices: np.ndarray
    h: np.ndarray
    a: np.ndarray
    r: np.ndarray
    h_next: np.ndarray
    o_next: np.ndarray
    done: np.ndarray
    # n-step view: discounted reward sum, bootstrap history, discount, terminal flag
    n_return: np.ndarray
    h_boot: np.ndarray
    discount: np.ndarray
    done_boot: np.ndarray


class ReplayBuffer:
    """Transitions are written in time order; ``end`` marks the last step of an
    episode (termination or time limit), ``done`` only true termination."""

    def __init__(self, capacity: int, h_dim: int, a_dim: int, o_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.h = np.zeros((capacity, h_dim))
        self.a = np.zeros((capacity, a_dim))
        self.r = np.zeros(capacity)
        self.h_next = np.zeros((capacity, h_dim))
        self.o_next = np.zeros((capacity, o_dim))
        self.done = np.zeros(capacity, dtype=bool)
        self.end = np.zeros(capacity, dtype=bool)
        self.pos = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, h, a, r, h_next, o_next, done: bool, end: bool) -> None:
        i = self.pos
        self.h[i], self.a[i], self.r[i] = h, a, r
        self.h_next[i], self.o_next[i] = h_next, o_next
        self.done[i], self.end[i] = done, end or done
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng, n_step: int = 1, gamma: float = 0.99) -> ReplaySample:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        gen = as_generator(rng)
        idx = gen.integers(0, self.size, batch_size)
        return self.gather(idx, n_step, gamma)

    def gather(self, idx: np.ndarray, n_step: int = 1, gamma: float = 0.99) -> ReplaySample:
        if n_step < 1:
            raise ValueError("n_step must be >= 1")
        idx = np.asarray(idx, dtype=int)
        if np.any((idx < 0) | (idx >= self.size)):
            raise IndexError("index refers to an unwritten slot")
        n = len(idx)
        ret = np.zeros(n)
        disc = np.ones(n)
        last = idx.copy()
        alive = np.ones(n, dtype=bool)
        # slots written after idx in time order, stopping at the write head
        newest = (self.pos - 1) % self.capacity
        for k in range(n_step):
            cur = (idx + k) % self.capacity
            ret[alive] += disc[alive] * self.r[cur[alive]]
            disc[alive] *= gamma
            last[alive] = cur[alive]
            stop = self.end[cur] | (cur == newest)
            alive &= ~stop
        return ReplaySample(idx, self.h[idx], self.a[idx], self.r[idx], self.h_next[idx],
                            self.o_next[idx], self.done[idx], ret, self.h_next[last], disc,
                            self.done[last])
