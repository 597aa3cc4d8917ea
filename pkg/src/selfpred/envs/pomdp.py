"""Finite POMDP tables, text serialization, random instances and a sampler."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..numkit.rng import as_generator, as_rng

ROW_TOL = 1e-12
MAX_SIZES = {"n_states": 6, "n_actions": 3, "n_observations": 4, "horizon": 5}


class StepAfterDone(RuntimeError):
    pass


@dataclass(frozen=True)
class FinitePOMDP:
    """Tabular POMDP. ``transition[s, a, s']``, ``emission[s, o]``, ``reward_mean[s, a]``.

    The first observation is emitted from the initial state; the process runs
    for ``horizon`` actions. States flagged in ``terminal`` end an episode
    early when entered.
    """

    transition: np.ndarray
    emission: np.ndarray
    reward_mean: np.ndarray
    initial: np.ndarray
    gamma: float
    horizon: int
    terminal: np.ndarray | None = None
    name: str = "pomdp"

    def __post_init__(self):
        for attr in ("transition", "emission", "reward_mean", "initial"):
            object.__setattr__(self, attr, np.array(getattr(self, attr), dtype=np.float64))
        if self.terminal is not None:
            object.__setattr__(self, "terminal", np.array(self.terminal, dtype=bool))
        self.validate()

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_observations(self) -> int:
        return self.emission.shape[1]

    @property
    def is_mdp(self) -> bool:
        """True when every state emits its own unique observation."""
        e = self.emission
        if not np.all((e == 0.0) | (e == 1.0)):
            return False
        return len(set(np.argmax(e, axis=1))) == self.n_states

    def validate(self) -> None:
        s, a = self.reward_mean.shape
        if self.transition.shape != (s, a, s):
            raise ValueError(f"transition shape {self.transition.shape} != {(s, a, s)}")
        if self.emission.shape[0] != s or self.initial.shape != (s,):
            raise ValueError("emission/initial do not match n_states")
        for name, rows in (("transition", self.transition.reshape(-1, s)),
                           ("emission", self.emission), ("initial", self.initial[None])):
            if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > ROW_TOL):
                raise ValueError(f"{name} rows are not probability vectors")
        if not np.all(np.isfinite(self.reward_mean)):
            raise ValueError("rewards must be finite")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.terminal is not None and self.terminal.shape != (s,):
            raise ValueError("terminal mask must have one entry per state")

    def with_gamma(self, gamma: float) -> "FinitePOMDP":
        return replace(self, gamma=gamma)


def _fmt(x: float) -> str:
    return repr(float(x))


def dumps(p: FinitePOMDP) -> str:
    """Plain-text ``key: values`` format; floats use shortest round-trip repr."""
    lines = [
        f"name: {p.name}",
        f"n_states: {p.n_states}",
        f"n_actions: {p.n_actions}",
        f"n_observations: {p.n_observations}",
        f"gamma: {_fmt(p.gamma)}",
        f"horizon: {p.horizon}",
        "transition: " + " ".join(map(_fmt, p.transition.ravel())),
        "emission: " + " ".join(map(_fmt, p.emission.ravel())),
        "reward_mean: " + " ".join(map(_fmt, p.reward_mean.ravel())),
        "initial: " + " ".join(map(_fmt, p.initial.ravel())),
    ]
    if p.terminal is not None:
        lines.append("terminal: " + " ".join(str(int(t)) for t in p.terminal))
    return "\n".join(lines) + "\n"


def loads(text: str) -> FinitePOMDP:
    fields = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    try:
        s, a, o = (int(fields[k]) for k in ("n_states", "n_actions", "n_observations"))

        def table(key, shape):
            vals = np.array([float(v) for v in fields[key].split()], dtype=np.float64)
            return vals.reshape(shape)

        terminal = None
        if "terminal" in fields:
            terminal = np.array([int(v) for v in fields["terminal"].split()], dtype=bool)
        return FinitePOMDP(
            transition=table("transition", (s, a, s)),
            emission=table("emission", (s, o)),
            reward_mean=table("reward_mean", (s, a)),
            initial=table("initial", (s,)),
            gamma=float(fields["gamma"]),
            horizon=int(fields["horizon"]),
            terminal=terminal,
            name=fields.get("name", "pomdp"),
        )
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]!r}") from None


def _random_rows(gen, n_rows, n_cols, deterministic, concentration=1.0):
    if deterministic:
        out = np.zeros((n_rows, n_cols))
        out[np.arange(n_rows), gen.integers(0, n_cols, n_rows)] = 1.0
        return out
    rows = gen.dirichlet(np.full(n_cols, concentration), size=n_rows)
    # renormalize in float64 so rows sum to 1 at machine precision
    return rows / rows.sum(axis=1, keepdims=True)


def random_finite_pomdp(rng, n_states=4, n_actions=2, n_observations=3, horizon=3,
                        gamma=0.9, deterministic=False, mdp=False, sparsity=0.0) -> FinitePOMDP:
    """Draw a random POMDP within the sizes the exact oracle can enumerate.

    ``deterministic`` makes every transition and emission row one-hot.
    ``mdp`` forces a bijective emission (observation = state). ``sparsity``
    zeroes that fraction of transition entries (keeping one per row) so that
    histories branch less.
    """
    sizes = dict(n_states=n_states, n_actions=n_actions,
                 n_observations=n_states if mdp else n_observations, horizon=horizon)
    for key, cap in MAX_SIZES.items():
        if not (1 <= sizes[key] <= cap):
            raise ValueError(f"{key}={sizes[key]} outside [1, {cap}]")
    gen = as_generator(rng)
    s, a, o = n_states, n_actions, sizes["n_observations"]
    trans = _random_rows(gen, s * a, s, deterministic)
    if sparsity > 0 and not deterministic:
        mask = gen.random(trans.shape) >= sparsity
        mask[np.arange(s * a), np.argmax(trans, axis=1)] = True
        trans = trans * mask
        trans /= trans.sum(axis=1, keepdims=True)
    if mdp:
        emission = np.eye(s)[gen.permutation(s)]
    else:
        emission = _random_rows(gen, s, o, deterministic)
    reward = np.round(gen.uniform(-1.0, 1.0, (s, a)), 6)
    initial = _random_rows(gen, 1, s, deterministic)[0]
    return FinitePOMDP(trans.reshape(s, a, s), emission, reward, initial, gamma, horizon,
                       name="random")


@dataclass
class Trajectory:
    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    states: list = field(default_factory=list)
    terminated: bool = False

    def __len__(self):
        return len(self.actions)


class POMDPEnv:
    """Sampler over a FinitePOMDP. Observations are feature rows of ``obs_features``."""

    discrete = True

    def __init__(self, pomdp: FinitePOMDP, rng, obs_features: np.ndarray | None = None,
                 reward_fn=None):
        self.pomdp = pomdp
        self.rng = as_rng(rng)
        self.obs_features = np.eye(pomdp.n_observations) if obs_features is None else obs_features
        self.reward_fn = reward_fn
        self.state = None
        self.t = 0
        self.done = True

    @property
    def obs_dim(self) -> int:
        return self.obs_features.shape[1]

    @property
    def n_actions(self) -> int:
        return self.pomdp.n_actions

    @property
    def horizon(self) -> int:
        return self.pomdp.horizon

    def _emit(self) -> np.ndarray:
        o = self.rng.choice(self.pomdp.n_observations, p=self.pomdp.emission[self.state])
        self.last_obs_id = int(o)
        return self.obs_features[o].copy()

    def reset(self) -> np.ndarray:
        self.state = int(self.rng.choice(self.pomdp.n_states, p=self.pomdp.initial))
        self.t = 0
        self.done = False
        return self._emit()

    def step(self, action: int):
        if self.done:
            raise StepAfterDone("step() called after the episode ended; call reset()")
        p = self.pomdp
        if not (0 <= action < p.n_actions):
            raise ValueError(f"action {action} out of range [0, {p.n_actions})")
        reward = float(p.reward_mean[self.state, action])
        self.state = int(self.rng.choice(p.n_states, p=p.transition[self.state, action]))
        self.t += 1
        if self.reward_fn is not None:
            reward = self.reward_fn(self, reward)
        terminal = p.terminal is not None and bool(p.terminal[self.state])
        self.done = terminal or self.t >= p.horizon
        self.terminated = terminal
        return self._emit(), reward, self.done
