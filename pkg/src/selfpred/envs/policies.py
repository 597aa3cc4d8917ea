"""Scripted behaviour policies for data collection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numkit.rng import as_rng


@dataclass
class ScriptedPolicy:
    """``energy-pumping``: push with the velocity (backward when at rest).
    ``sticky-action``: repeat the last action with ``repeat_prob``, otherwise
    draw uniformly; the first action is ``initial_action``.
    ``uniform-random``: uniform over the action set.
    """

    kind: str
    n_actions: int
    repeat_prob: float = 0.8
    initial_action: int = 0

    KINDS = ("energy-pumping", "sticky-action", "uniform-random")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {self.KINDS}")
        if not (0 <= self.initial_action < self.n_actions):
            raise ValueError("initial_action out of range")
        if not (0.0 <= self.repeat_prob <= 1.0):
            raise ValueError("repeat_prob must be a probability")
        self.last = None

    def reset(self):
        self.last = None

    def act(self, observation, rng) -> int:
        gen = as_rng(rng)
        if self.kind == "energy-pumping":
            velocity = float(np.asarray(observation)[1])
            action = 2 if velocity > 0 else 0
        elif self.kind == "uniform-random":
            action = int(gen.integers(self.n_actions))
        elif self.last is None:
            action = self.initial_action
        elif gen.random() < self.repeat_prob:
            action = self.last
        else:
            action = int(gen.integers(self.n_actions))
        self.last = action
        return action

    def probabilities(self, observation=None) -> np.ndarray:
        """Action distribution for the next call to :meth:`act`."""
        p = np.zeros(self.n_actions)
        if self.kind == "energy-pumping":
            p[2 if float(np.asarray(observation)[1]) > 0 else 0] = 1.0
        elif self.kind == "uniform-random":
            p[:] = 1.0 / self.n_actions
        elif self.last is None:
            p[self.initial_action] = 1.0
        else:
            p[:] = (1.0 - self.repeat_prob) / self.n_actions
            p[self.last] += self.repeat_prob
        return p
