"""Load-unload chain, mountain car and a 2-D point mass."""

from __future__ import annotations

import numpy as np

from ..numkit.rng import as_rng
from .features import RBFGrid
from .pomdp import FinitePOMDP, StepAfterDone

LEFT, RIGHT = 0, 1
OBS_LEFT_END, OBS_RIGHT_END, OBS_MIDDLE = 0, 1, 2


def make_load_unload(n_states: int = 7, gamma: float = 0.99, horizon: int = 200) -> FinitePOMDP:
    """Chain where moves past either end leave the agent in place.

    Observations only say whether the agent sits at the left end, the right
    end, or anywhere in between. Reward 1 is paid for pushing left at the
    left end.
    """
    trans = np.zeros((n_states, 2, n_states))
    for s in range(n_states):
        trans[s, LEFT, max(s - 1, 0)] = 1.0
        trans[s, RIGHT, min(s + 1, n_states - 1)] = 1.0
    emission = np.zeros((n_states, 3))
    emission[:, OBS_MIDDLE] = 1.0
    emission[0] = [1.0, 0.0, 0.0]
    emission[-1] = [0.0, 1.0, 0.0]
    reward = np.zeros((n_states, 2))
    reward[0, LEFT] = 1.0
    initial = np.full(n_states, 1.0 / n_states)
    return FinitePOMDP(trans, emission, reward, initial, gamma, horizon, name="load-unload")


class MountainCar:
    """Classic underpowered car in a valley, three discrete forces {-1, 0, +1}."""

    discrete = True
    low = np.array([-1.2, -0.07])
    high = np.array([0.5, 0.07])
    goal = 0.5

    def __init__(self, rng, horizon: int = 200, random_start: bool = True):
        self.rng = as_rng(rng)
        self.horizon = horizon
        self.random_start = random_start
        self.state = None
        self.done = True
        self.t = 0

    n_actions = 3
    obs_dim = 2

    def reset(self) -> np.ndarray:
        if self.random_start:
            self.state = self.rng.uniform(self.low, self.high)
            self.state[0] = min(self.state[0], self.goal - 1e-6)
        else:
            self.state = np.array([self.rng.uniform(-0.6, -0.4), 0.0])
        self.t = 0
        self.done = False
        return self.state.copy()

    @staticmethod
    def dynamics(state, action: int) -> np.ndarray:
        x, v = float(state[0]), float(state[1])
        v = v + 0.001 * (action - 1) - 0.0025 * np.cos(3.0 * x)
        v = min(max(v, -0.07), 0.07)
        x = x + v
        if x <= -1.2:
            x, v = -1.2, 0.0
        x = min(x, 0.5)
        return np.array([x, v])

    def step(self, action: int):
        if self.done:
            raise StepAfterDone("step() called after the episode ended; call reset()")
        if action not in (0, 1, 2):
            raise ValueError(f"action {action} out of range [0, 3)")
        self.state = self.dynamics(self.state, action)
        self.t += 1
        at_goal = self.state[0] >= self.goal
        self.done = bool(at_goal) or self.t >= self.horizon
        self.terminated = bool(at_goal)
        return self.state.copy(), -1.0, self.done


def mountain_car_grid() -> RBFGrid:
    return RBFGrid(low=tuple(MountainCar.low), high=tuple(MountainCar.high), shape=(10, 10),
                   width=0.15)


class PointMass:
    """Velocity-controlled point in [-1, 1]^2 with a dense reward toward a goal.

    Actions are 2-D in [-1, 1]; reward is exp(-||x - goal||^2 / 0.1) in (0, 1],
    so the return scale is fixed by the horizon.
    """

    discrete = False

    def __init__(self, rng, horizon: int = 50, step_size: float = 0.1, goal=(0.5, 0.5)):
        self.rng = as_rng(rng)
        self.horizon = horizon
        self.step_size = step_size
        self.goal = np.asarray(goal, dtype=np.float64)
        self.pos = None
        self.done = True
        self.t = 0

    obs_dim = 2
    action_dim = 2

    def reset(self) -> np.ndarray:
        self.pos = self.rng.uniform(-1.0, 1.0, 2)
        self.t = 0
        self.done = False
        return self.pos.copy()

    def reward(self, pos) -> float:
        d = pos - self.goal
        return float(np.exp(-(d @ d) / 0.1))

    def step(self, action):
        if self.done:
            raise StepAfterDone("step() called after the episode ended; call reset()")
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        self.pos = np.clip(self.pos + self.step_size * a, -1.0, 1.0)
        self.t += 1
        self.done = self.t >= self.horizon
        self.terminated = False
        return self.pos.copy(), self.reward(self.pos), self.done
