"""Key-door gridworld with a 3x3 egocentric view, as a finite POMDP.

The grid is walled, split by an internal wall column holding a locked door.
The agent starts in the left room with a key somewhere in it and must pick
the key up, unlock the door and reach the goal in the bottom-right corner.
Success pays 1 - 0.9 * H / T where H is the number of steps used.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import product

import numpy as np

from ..numkit.rng import as_generator
from .pomdp import FinitePOMDP, POMDPEnv

TURN_LEFT, TURN_RIGHT, FORWARD, PICKUP, TOGGLE = range(5)
EMPTY, WALL, KEY, DOOR_CLOSED, DOOR_OPEN, GOAL = range(6)
N_CELL_TYPES = 6
DIRS = [(1, 0), (0, 1), (-1, 0), (0, -1)]  # east, south, west, north (x right, y down)
VIEW_DIM = 9 * N_CELL_TYPES + 1


@dataclass(frozen=True)
class KeyDoorLayout:
    size: int
    wall_x: int
    door_y: int
    key: tuple
    start: tuple
    start_dir: int

    @property
    def goal(self) -> tuple:
        return (self.size - 2, self.size - 2)


@dataclass(frozen=True)
class KeyDoorWorld:
    """One or more layouts as a single POMDP; episodes start in a uniformly drawn layout.

    ``states`` holds (layout, x, y, dir, carrying, door_open) per state id.
    """

    layouts: tuple
    pomdp: FinitePOMDP
    states: tuple
    obs_features: np.ndarray

    @property
    def layout(self) -> KeyDoorLayout:
        return self.layouts[0]

    def optimal_steps(self) -> np.ndarray:
        """Shortest number of actions to the goal from each start state (initial-support order)."""
        tr = self.pomdp.transition
        out = []
        for start in np.flatnonzero(self.pomdp.initial):
            dist = {int(start): 0}
            queue = deque([int(start)])
            found = None
            while queue and found is None:
                s = queue.popleft()
                if self.pomdp.terminal[s]:
                    found = dist[s]
                    break
                for a in range(tr.shape[1]):
                    nxt = int(np.argmax(tr[s, a]))
                    if nxt not in dist:
                        dist[nxt] = dist[s] + 1
                        queue.append(nxt)
            if found is None:
                raise RuntimeError("goal unreachable")
            out.append(found)
        return np.array(out)

    def optimal_return(self) -> float:
        """Expected return of the optimal policy under the initial distribution."""
        steps = self.optimal_steps()
        weights = self.pomdp.initial[np.flatnonzero(self.pomdp.initial)]
        return float(weights @ (1.0 - 0.9 * steps / self.pomdp.horizon))

    def env(self, rng) -> POMDPEnv:
        horizon = self.pomdp.horizon

        def scaled(env, base):
            return base * (1.0 - 0.9 * env.t / horizon)

        return POMDPEnv(self.pomdp, rng, obs_features=self.obs_features, reward_fn=scaled)


def _random_layout(size: int, gen) -> KeyDoorLayout:
    wall_x = int(gen.integers(2, size - 2)) if size > 5 else 2
    door_y = int(gen.integers(1, size - 1))
    left = [(x, y) for x in range(1, wall_x) for y in range(1, size - 1)]
    picks = gen.permutation(len(left))[:2]
    key, start = left[picks[0]], left[picks[1]]
    return KeyDoorLayout(size, wall_x, door_y, key, start, int(gen.integers(4)))


def _layout_tables(lay: KeyDoorLayout):
    """States, deterministic successor ids, success rewards, terminal flags, views, start id."""
    size = lay.size
    door = (lay.wall_x, lay.door_y)

    def base_cell(x, y):
        if x <= 0 or y <= 0 or x >= size - 1 or y >= size - 1:
            return WALL
        if x == lay.wall_x:
            return DOOR_CLOSED if y == lay.door_y else WALL
        if (x, y) == lay.goal:
            return GOAL
        return EMPTY

    def cell(x, y, carrying, door_open):
        c = base_cell(x, y)
        if (x, y) == door and door_open:
            return DOOR_OPEN
        if (x, y) == lay.key and not carrying:
            return KEY
        return c

    walkable = [(x, y) for x in range(size) for y in range(size)
                if base_cell(x, y) in (EMPTY, GOAL, DOOR_CLOSED)]
    states = [(x, y, d, k, o) for (x, y) in walkable for d in range(4)
              for k, o in product((0, 1), (0, 1))
              if not (o and not k) and not ((x, y) == lay.key and not k)]
    index = {s: i for i, s in enumerate(states)}

    def successor(s, a):
        x, y, d, k, o = s
        if (x, y) == lay.goal:
            return s
        if a == TURN_LEFT:
            return (x, y, (d - 1) % 4, k, o)
        if a == TURN_RIGHT:
            return (x, y, (d + 1) % 4, k, o)
        fx, fy = x + DIRS[d][0], y + DIRS[d][1]
        front = cell(fx, fy, k, o)
        if a == FORWARD and front in (EMPTY, GOAL, DOOR_OPEN):
            return (fx, fy, d, k, o)
        if a == PICKUP and front == KEY:
            return (x, y, d, 1, o)
        if a == TOGGLE and front == DOOR_CLOSED and k:
            return (x, y, d, k, 1)
        return s

    def view(s):
        x, y, d, k, o = s
        fwd, right = DIRS[d], DIRS[(d + 1) % 4]
        vec = np.zeros(VIEW_DIM)
        for f, lat in product(range(3), (-1, 0, 1)):
            cx = x + f * fwd[0] + lat * right[0]
            cy = y + f * fwd[1] + lat * right[1]
            c = EMPTY if (f, lat) == (0, 0) else cell(cx, cy, k, o)
            vec[(f * 3 + lat + 1) * N_CELL_TYPES + c] = 1.0
        vec[-1] = float(k)
        return vec

    nxt = np.array([[index[successor(s, a)] for a in range(5)] for s in states], dtype=int)
    terminal = np.array([(s[0], s[1]) == lay.goal for s in states])
    reward = (terminal[nxt] & ~terminal[:, None]).astype(float)
    start = index[(lay.start[0], lay.start[1], lay.start_dir, 0, 0)]
    return states, nxt, reward, terminal, [view(s) for s in states], start


def make_grid_keydoor(size: int = 5, rng=0, horizon: int | None = None,
                      gamma: float = 0.99, n_layouts: int = 1) -> KeyDoorWorld:
    """Key-door world over ``n_layouts`` distinct random layouts (1 gives a fixed layout)."""
    if size not in (5, 7):
        raise ValueError(f"size must be 5 or 7, got {size}")
    if n_layouts < 1:
        raise ValueError("n_layouts must be positive")
    gen = as_generator(rng)
    layouts = []
    for _ in range(100 * n_layouts):
        lay = _random_layout(size, gen)
        if lay not in layouts:
            layouts.append(lay)
        if len(layouts) == n_layouts:
            break
    else:
        raise ValueError(f"could not draw {n_layouts} distinct layouts for size {size}")
    horizon = 4 * size * size if horizon is None else horizon
    tables = [_layout_tables(lay) for lay in layouts]
    n = sum(len(t[0]) for t in tables)
    trans = np.zeros((n, 5, n))
    reward = np.zeros((n, 5))
    terminal = np.zeros(n, dtype=bool)
    initial = np.zeros(n)
    states, obs_index, feats, emission_ids = [], {}, [], []
    offset = 0
    for li, (st, nxt, rew, term, views, start) in enumerate(tables):
        m = len(st)
        rows = np.arange(m)[:, None]
        trans[offset + rows, np.arange(5)[None, :], offset + nxt] = 1.0
        reward[offset:offset + m] = rew
        terminal[offset:offset + m] = term
        initial[offset + start] = 1.0 / len(tables)
        states.extend((li,) + s for s in st)
        for v in views:
            key = v.tobytes()
            if key not in obs_index:
                obs_index[key] = len(feats)
                feats.append(v)
            emission_ids.append(obs_index[key])
        offset += m
    emission = np.zeros((n, len(feats)))
    emission[np.arange(n), emission_ids] = 1.0
    pomdp = FinitePOMDP(trans, emission, reward, initial, gamma, horizon, terminal=terminal,
                        name=f"keydoor-{size}")
    return KeyDoorWorld(tuple(layouts), pomdp, tuple(states), np.array(feats))
