"""Append i.i.d. standard-normal coordinates to every observation."""

from __future__ import annotations

import numpy as np

from ..numkit.rng import as_rng


class DistractorWrapper:
    def __init__(self, env, n_dims: int, rng):
        if n_dims < 0:
            raise ValueError("n_dims must be non-negative")
        self.env = env
        self.n_dims = n_dims
        self.rng = as_rng(rng)

    def __getattr__(self, name):
        # guard: copy/pickle probe attributes before __init__ has set ``env``
        if name == "env" or name.startswith("__"):
            raise AttributeError(name)
        return getattr(self.env, name)

    @property
    def obs_dim(self) -> int:
        return self.env.obs_dim + self.n_dims

    def _augment(self, obs) -> np.ndarray:
        if self.n_dims == 0:
            return obs
        return np.concatenate([obs, self.rng.standard_normal(self.n_dims)])

    def reset(self):
        return self._augment(self.env.reset())

    def step(self, action):
        obs, reward, done = self.env.step(action)
        return self._augment(obs), reward, done


def wrap_distractors(env, n_dims: int, rng) -> DistractorWrapper:
    return DistractorWrapper(env, n_dims, rng)
