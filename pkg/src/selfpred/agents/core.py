"""Agent state, the joint update rules and action selection.

Both backbones share one shape: an encoder f, an optional auxiliary head
(latent model for ZP, observation predictor for OP, reward head when phased),
RL heads on the latent, EMA target copies of the encoder and RL heads, and a
single Adam over every trainable parameter so each update is one joint step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numkit import autodiff as ad
from ..numkit.linalg import matrix_rank_estimate
from ..numkit.nn import MLP, Adam, AdamConfig, Module, frozen
from ..objectives.losses import (Batch, LossBreakdown, combine, op_loss, rp_loss,
                                 squared_error, zp_loss_kl, zp_loss_l2)
from ..objectives.models import (Encoder, EncoderSpec, LatentModel, RewardHead, TargetMode,
                                 clone_module, ema_update)
from .config import AgentConfig
from .replay import ReplaySample


class Actor(Module):
    def __init__(self, latent_dim, action_dim, rng, hidden=64):
        self.net = MLP([latent_dim, hidden, hidden, action_dim], rng, out_activation="tanh",
                       name="actor")

    def __call__(self, z):
        return self.net(z)

    def parameters(self):
        return self.net.parameters()


class Critic(Module):
    def __init__(self, latent_dim, action_dim, rng, hidden=64):
        self.net = MLP([latent_dim + action_dim, hidden, hidden, 1], rng, name="critic")

    def __call__(self, z, a):
        return self.net(ad.concat([z, a], axis=1))

    def parameters(self):
        return self.net.parameters()


class QHead(Module):
    def __init__(self, latent_dim, n_actions, rng, hidden=64):
        self.net = MLP([latent_dim, hidden, n_actions], rng, name="q")

    def __call__(self, z):
        return self.net(z)

    def parameters(self):
        return self.net.parameters()


@dataclass
class AgentState:
    config: AgentConfig
    discrete: bool
    obs_dim: int
    action_dim: int
    encoder: Encoder
    encoder_target: Encoder
    heads: dict  # "q" or ("actor", "critic")
    heads_target: dict
    aux: Module | None
    reward_head: Module | None
    optimizer: Adam
    step: int = 0

    def trainable(self) -> list:
        mods = [self.encoder, *self.heads.values()]
        mods += [m for m in (self.aux, self.reward_head) if m is not None]
        return [p for m in mods for p in m.parameters()]

    def target_pairs(self):
        yield self.encoder_target, self.encoder
        for k, m in self.heads.items():
            yield self.heads_target[k], m

    @property
    def aux_out_dim(self) -> int:
        kind = self.config.aux_kind
        if kind is None:
            return 1
        return self.obs_dim if kind == "op" else self.config.latent_dim


def build_agent(config: AgentConfig, h_dim: int, obs_dim: int, action_dim: int,
                discrete: bool, rng) -> AgentState:
    gen = getattr(rng, "generator", rng)
    kind = config.aux_kind
    gaussian = kind in ("zp-fkl", "zp-rkl")
    d = config.latent_dim

    def make_encoder():
        return Encoder(EncoderSpec(h_dim, d, "mlp", "gaussian" if gaussian else "deterministic",
                                   hidden=config.hidden), gen)

    encoder = make_encoder()
    if discrete:
        heads = {"q": QHead(d, action_dim, gen, config.hidden)}
        factories = {"q": lambda: QHead(d, action_dim, gen, config.hidden)}
    else:
        heads = {"actor": Actor(d, action_dim, gen, config.hidden),
                 "critic": Critic(d, action_dim, gen, config.hidden)}
        factories = {"actor": lambda: Actor(d, action_dim, gen, config.hidden),
                     "critic": lambda: Critic(d, action_dim, gen, config.hidden)}
    aux = None
    if kind in ("zp-l2", "zp-fkl", "zp-rkl"):
        aux = LatentModel(d, action_dim, gen, head="gaussian" if gaussian else "deterministic",
                          hidden=config.hidden)
    elif kind == "op":
        aux = LatentModel(d, action_dim, gen, hidden=config.hidden, out_dim=obs_dim, name="op")
    reward_head = RewardHead(d, action_dim, gen, config.hidden) if config.phased else None
    state = AgentState(
        config, discrete, obs_dim, action_dim, encoder, clone_module(encoder, make_encoder),
        heads, {k: clone_module(m, factories[k]) for k, m in heads.items()}, aux, reward_head,
        optimizer=None)
    state.optimizer = Adam(state.trainable(), AdamConfig(lr=config.lr,
                                                         max_grad_norm=config.max_grad_norm))
    return state


def _aux_loss(state: AgentState, batch: Batch, rng) -> LossBreakdown | None:
    cfg = state.config
    kind = cfg.aux_kind
    if kind is None:
        return None
    mode = TargetMode(cfg.target_mode, cfg.target_mix)
    # detached targets are a stop-gradient copy of the current encoder
    target = state.encoder if cfg.target_mode == "detached" else state.encoder_target
    if kind == "zp-l2":
        return zp_loss_l2(state.encoder, state.aux, target, batch, mode)
    if kind in ("zp-fkl", "zp-rkl"):
        return zp_loss_kl(state.encoder, state.aux, target, batch, kind[3:], mode, rng)
    return op_loss(state.encoder, state.aux, batch)


def _assemble(state: AgentState, rl: ad.Tensor, rl_name: str, batch: Batch, rng,
              extra: dict | None = None) -> LossBreakdown:
    parts = {rl_name: LossBreakdown(float(rl.value), {rl_name: float(rl.value)}, graph=rl)}
    weights = {rl_name: 1.0}
    for name, g in (extra or {}).items():
        parts[name] = LossBreakdown(float(g.value), {name: float(g.value)}, graph=g)
        weights[name] = 1.0
    aux = _aux_loss(state, batch, rng)
    if aux is not None:
        parts["aux"] = aux
        weights["aux"] = state.config.coefficient(state.aux_out_dim, state.discrete)
    if state.reward_head is not None:
        parts["rp"] = rp_loss(state.encoder, state.reward_head, batch)
        weights["rp"] = 1.0
    return combine(parts, weights)


def _latent(state: AgentState, h) -> ad.Tensor:
    z, _ = state.encoder(h)
    return ad.stop_gradient(z) if state.config.phased else z


def _batch(sample: ReplaySample) -> Batch:
    return Batch(sample.h, sample.a, sample.h_next, sample.r, sample.o_next, sample.done)


def rl_loss_minimalist(state: AgentState, sample: ReplaySample):
    """(critic TD loss, actor loss) graphs for the continuous backbone."""
    cfg = state.config
    actor, critic = state.heads["actor"], state.heads["critic"]
    actor_t, critic_t = state.heads_target["actor"], state.heads_target["critic"]
    z_next_t, _ = state.encoder_target(sample.h_next)
    q_next = critic_t(z_next_t, actor_t(z_next_t)).value[:, 0]
    y = sample.r + cfg.gamma * (1.0 - sample.done) * q_next
    z = _latent(state, sample.h)
    q = critic(z, sample.a)
    td = squared_error(q, y[:, None])
    # the actor term sees the encoder and critic as constants
    with frozen(critic, state.encoder):
        z_const = ad.Tensor(z.value)
        actor_loss = ad.mul(ad.mean(critic(z_const, actor(z_const))), -1.0)
    return td, actor_loss


def update_minimalist(state: AgentState, sample: ReplaySample, rng) -> LossBreakdown:
    """One joint step on encoder, aux model, actor and critic (continuous actions)."""
    td, actor_loss = rl_loss_minimalist(state, sample)
    loss = _assemble(state, td, "rl", _batch(sample), rng, {"actor": actor_loss})
    return _apply(state, loss)


def double_q_target(state: AgentState, sample: ReplaySample) -> np.ndarray:
    """n-step double-Q target: online argmax, target-network evaluation."""
    q_online = state.heads["q"](state.encoder(sample.h_boot)[0]).value
    best = np.argmax(q_online, axis=1)
    q_tgt = state.heads_target["q"](state.encoder_target(sample.h_boot)[0]).value
    boot = q_tgt[np.arange(len(best)), best]
    return sample.n_return + sample.discount * (1.0 - sample.done_boot) * boot


def td_loss_discrete(state: AgentState, sample: ReplaySample) -> ad.Tensor:
    y = double_q_target(state, sample)
    q = state.heads["q"](_latent(state, sample.h))
    q_sa = ad.sum(ad.mul(q, sample.a), axis=1, keepdims=True)
    return squared_error(q_sa, y[:, None])


def update_discrete(state: AgentState, sample: ReplaySample, rng) -> LossBreakdown:
    """One joint step on encoder, aux model and Q head (discrete actions)."""
    loss = _assemble(state, td_loss_discrete(state, sample), "rl", _batch(sample), rng)
    return _apply(state, loss)


def _apply(state: AgentState, loss: LossBreakdown) -> LossBreakdown:
    if not np.isfinite(loss.total):
        loss.flags["skipped"] = "non-finite loss"
        return loss
    state.optimizer.zero_grad()
    try:
        loss.backward()
    except ad.NonFiniteGradientError as err:
        state.optimizer.zero_grad()
        loss.flags["skipped"] = str(err)
        return loss
    loss.grad_norms["total"] = state.optimizer.step()
    state.optimizer.zero_grad()
    for target, online in state.target_pairs():
        ema_update(target, online, state.config.target_mix)
    state.step += 1
    return loss


def greedy_action(state: AgentState, h: np.ndarray):
    z, _ = state.encoder(h[None, :])
    if state.discrete:
        return int(np.argmax(state.heads["q"](z).value[0]))
    return state.heads["actor"](z).value[0]


def exploration_action(state: AgentState, h: np.ndarray, rng, env_step: int):
    """Epsilon-greedy (discrete) or clipped Gaussian noise on the actor (continuous)."""
    gen = getattr(rng, "generator", rng)
    level = state.config.schedule(env_step)
    if state.discrete:
        if level > 0 and gen.random() < level:
            return int(gen.integers(state.action_dim))
        return greedy_action(state, h)
    noise = np.clip(level * gen.standard_normal(state.action_dim),
                    -state.config.exploration_clip, state.config.exploration_clip)
    return np.clip(greedy_action(state, h) + noise, -1.0, 1.0)


def latent_rank(state: AgentState, h_batch: np.ndarray) -> int:
    z, _ = state.encoder(h_batch)
    return matrix_rank_estimate(z.value)
