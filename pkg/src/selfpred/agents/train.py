"""Environment interaction, evaluation and telemetry around the update rules."""

from __future__ import annotations

import copy

import numpy as np

from ..envs.features import RollingWindow, WindowStack, one_hot
from ..numkit.rng import Rng, as_rng
from .config import AgentConfig
from .core import (AgentState, build_agent, exploration_action, greedy_action, latent_rank,
                   update_discrete, update_minimalist)
from .record import RunRecord
from .replay import ReplayBuffer


def _action_dim(env) -> int:
    return env.n_actions if env.discrete else env.action_dim


def _reseed(env, rng: Rng):
    """Deep copy of ``env`` whose random streams (wrappers included) come from ``rng``."""
    clone = copy.deepcopy(env)
    node, depth = clone, 0
    while node is not None:
        if hasattr(node, "rng"):
            node.rng = rng.split(f"layer{depth}")
        node = node.__dict__.get("env")
        depth += 1
    return clone


def _success(env) -> bool:
    flag = getattr(env, "success", None)
    return bool(flag) if flag is not None else bool(getattr(env, "terminated", False))


def evaluate(state: AgentState, env, spec: WindowStack, n_episodes: int) -> tuple[float, float]:
    """Mean undiscounted return and success rate of the greedy policy."""
    returns, successes = [], []
    for _ in range(n_episodes):
        window = RollingWindow(spec)
        h = window.reset(env.reset())
        total, done = 0.0, False
        while not done:
            a = greedy_action(state, h)
            obs, r, done = env.step(a)
            total += r
            h = window.push(a, obs)
        returns.append(total)
        successes.append(_success(env))
    return float(np.mean(returns)), float(np.mean(successes))


def train(config: AgentConfig, env, budget_steps: int, rng) -> RunRecord:
    """Run ``budget_steps`` environment steps and return the telemetry record.

    Rows are logged every ``eval_every`` steps and after the last step.
    """
    rng = as_rng(rng)
    record = RunRecord(config.variant, int(rng.seed) if hasattr(rng, "seed") else 0)
    if budget_steps <= 0:
        return record
    discrete = bool(env.discrete)
    a_dim = _action_dim(env)
    spec = WindowStack(config.window, env.obs_dim, a_dim)
    state = build_agent(config, spec.dim, env.obs_dim, a_dim, discrete, rng.split("init"))
    replay = ReplayBuffer(min(config.replay_capacity, budget_steps), spec.dim, a_dim, env.obs_dim)
    explore_rng = rng.split("explore").generator
    replay_rng = rng.split("replay").generator
    aux_rng = rng.split("aux").generator
    rank_rng = rng.split("rank").generator
    update = update_discrete if discrete else update_minimalist
    losses_rl, losses_aux = [], []

    def log(step):
        eval_env = _reseed(env, rng.split(f"eval{step}"))
        ret, succ = evaluate(state, eval_env, spec, config.eval_episodes)
        if len(replay):
            idx = rank_rng.integers(0, len(replay), min(config.rank_batch, len(replay)))
            rank = latent_rank(state, replay.h[idx])
        else:
            rank = float("nan")
        record.log(step=step, eval_return=ret, success_rate=succ,
                   rl_loss=float(np.mean(losses_rl)) if losses_rl else float("nan"),
                   aux_loss=float(np.mean(losses_aux)) if losses_aux else float("nan"),
                   est_rank=rank, epsilon_or_std=config.schedule(step))
        losses_rl.clear()
        losses_aux.clear()

    window = RollingWindow(spec)
    h = window.reset(env.reset())
    for t in range(1, budget_steps + 1):
        if t <= config.warmup_steps:
            a = int(explore_rng.integers(a_dim)) if discrete else explore_rng.uniform(-1, 1, a_dim)
        else:
            a = exploration_action(state, h, explore_rng, t)
        obs, r, done = env.step(a)
        h_next = window.push(a, obs)
        a_vec = one_hot(a, a_dim) if discrete else np.asarray(a, dtype=np.float64)
        terminated = bool(getattr(env, "terminated", False))
        replay.add(h, a_vec, r, h_next, obs, terminated, done)
        h = h_next
        if done:
            h = window.reset(env.reset())
        if t > config.warmup_steps and t % config.update_every == 0:
            sample = replay.sample(config.batch_size, replay_rng, config.n_step, config.gamma)
            out = update(state, sample, aux_rng)
            record.updates += 1
            if "skipped" in out.flags:
                record.incidents.append((t, out.flags["skipped"]))
            else:
                losses_rl.append(out.components["rl"])
                if "aux" in out.components:
                    losses_aux.append(out.components["aux"])
        if t % config.eval_every == 0 or t == budget_steps:
            log(t)
    record.env_steps = budget_steps
    record.state = state
    return record
