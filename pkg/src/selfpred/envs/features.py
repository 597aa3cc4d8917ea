"""Featurizers: Gaussian RBF grids, one-hot codes, and history window stacks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class OutOfBoundsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RBFGrid:
    """Uniform grid of unnormalized Gaussian bumps over a box.

    Each feature is exp(-(s - c)^T Sigma^{-1} (s - c)) with a diagonal Sigma
    whose standard deviations are ``width`` times each dimension's span.
    """

    low: tuple
    high: tuple
    shape: tuple = (10, 10)
    width: float = 0.15

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    @property
    def centers(self) -> np.ndarray:
        axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(self.low, self.high, self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def scales(self) -> np.ndarray:
        return self.width * (np.asarray(self.high, float) - np.asarray(self.low, float))

    def __call__(self, state) -> np.ndarray:
        return rbf_featurize(state, self)


def rbf_featurize(state, grid: RBFGrid) -> np.ndarray:
    s = np.asarray(state, dtype=np.float64)
    low, high = np.asarray(grid.low, float), np.asarray(grid.high, float)
    if np.any(s < low) or np.any(s > high):
        warnings.warn(f"state {s} outside [{low}, {high}]; clamping", OutOfBoundsWarning,
                      stacklevel=2)
        s = np.clip(s, low, high)
    diff = (s[None, :] - grid.centers) / grid.scales
    return np.exp(-np.sum(diff * diff, axis=1))


def one_hot(index: int, size: int) -> np.ndarray:
    out = np.zeros(size)
    out[index] = 1.0
    return out


@dataclass(frozen=True)
class WindowStack:
    """Fixed-length history features: the last ``k`` observation vectors and
    the ``k - 1`` actions between them, zero-padded before the episode start.

    Layout is [o_{t-k+1}, ..., o_t, a_{t-k+1}, ..., a_{t-1}].
    """

    k: int
    obs_dim: int
    n_actions: int

    @property
    def dim(self) -> int:
        return self.k * self.obs_dim + (self.k - 1) * self.n_actions

    def features(self, observations, actions) -> np.ndarray:
        """Window for the history ending at ``observations[-1]``.

        ``actions`` holds one fewer entry than ``observations``; entries are
        integer ids or action vectors.
        """
        if len(actions) != len(observations) - 1:
            raise ValueError("need exactly one action between consecutive observations")
        obs = np.zeros((self.k, self.obs_dim))
        recent = observations[-self.k:]
        if len(recent):
            obs[self.k - len(recent):] = np.asarray(recent, dtype=np.float64).reshape(len(recent), -1)
        acts = np.zeros((self.k - 1, self.n_actions))
        recent_a = actions[-(self.k - 1):] if self.k > 1 else []
        for i, a in enumerate(recent_a):
            row = self.k - 1 - len(recent_a) + i
            acts[row] = self._action_vec(a)
        return np.concatenate([obs.ravel(), acts.ravel()])

    def _action_vec(self, a) -> np.ndarray:
        if np.ndim(a) == 0:
            return one_hot(int(a), self.n_actions)
        return np.asarray(a, dtype=np.float64)


class RollingWindow:
    """Incremental version of :class:`WindowStack` for online interaction."""

    def __init__(self, spec: WindowStack):
        self.spec = spec
        self.obs = np.zeros((spec.k, spec.obs_dim))
        self.acts = np.zeros((max(spec.k - 1, 0), spec.n_actions))

    def reset(self, first_obs) -> np.ndarray:
        self.obs[:] = 0.0
        self.acts[:] = 0.0
        self.obs[-1] = first_obs
        return self.vector()

    def push(self, action, obs) -> np.ndarray:
        if self.spec.k > 1:
            self.acts = np.roll(self.acts, -1, axis=0)
            self.acts[-1] = self.spec._action_vec(action)
        self.obs = np.roll(self.obs, -1, axis=0)
        self.obs[-1] = obs
        return self.vector()

    def vector(self) -> np.ndarray:
        return np.concatenate([self.obs.ravel(), self.acts.ravel()])
