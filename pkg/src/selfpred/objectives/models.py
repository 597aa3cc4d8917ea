"""Encoders, latent transition models and target-parameter handling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numkit import autodiff as ad
from ..numkit.nn import LOG_STD_MAX, LOG_STD_MIN, MLP, GaussianHead, Linear, Module


@dataclass(frozen=True)
class EncoderSpec:
    """``architecture``: linear or mlp (two hidden layers). ``head``:
    deterministic or gaussian (mean and clamped log-std)."""

    in_dim: int
    latent_dim: int
    architecture: str = "mlp"
    head: str = "deterministic"
    hidden: int = 64
    activation: str = "elu"
    init: str = "uniform"

    def __post_init__(self):
        if self.architecture not in ("linear", "mlp"):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.head not in ("deterministic", "gaussian"):
            raise ValueError(f"unknown head {self.head!r}")


class Encoder(Module):
    """Maps a feature batch to (mean, log_std); log_std is None for deterministic heads."""

    def __init__(self, spec: EncoderSpec, rng, name: str = "encoder"):
        self.spec = spec
        width = spec.latent_dim * (2 if spec.head == "gaussian" else 1)
        if spec.architecture == "linear":
            trunk = MLP([spec.in_dim, width], rng, init=spec.init, name=name)
        else:
            trunk = MLP([spec.in_dim, spec.hidden, spec.hidden, width], rng,
                        activation=spec.activation, init=spec.init, name=name)
        self.trunk = trunk
        self.head = GaussianHead(trunk) if spec.head == "gaussian" else None

    @property
    def stochastic(self) -> bool:
        return self.head is not None

    def __call__(self, x):
        if self.head is None:
            return self.trunk(x), None
        return self.head(x)

    def parameters(self):
        return self.trunk.parameters()


class LatentModel(Module):
    """g(z, a): next-latent prediction from the latent and an action vector."""

    def __init__(self, latent_dim: int, action_dim: int, rng, architecture: str = "mlp",
                 head: str = "deterministic", hidden: int = 64, out_dim: int | None = None,
                 name: str = "model"):
        self.latent_dim = latent_dim
        self.action_dim = action_dim
        self.out_dim = latent_dim if out_dim is None else out_dim
        width = self.out_dim * (2 if head == "gaussian" else 1)
        n_in = latent_dim + action_dim
        sizes = [n_in, width] if architecture == "linear" else [n_in, hidden, hidden, width]
        self.trunk = MLP(sizes, rng, name=name)
        self.head = GaussianHead(self.trunk) if head == "gaussian" else None

    @property
    def stochastic(self) -> bool:
        return self.head is not None

    def __call__(self, z, a):
        x = ad.concat([z, a], axis=1)
        if self.head is None:
            return self.trunk(x), None
        return self.head(x)

    def parameters(self):
        return self.trunk.parameters()


class RewardHead(Module):
    def __init__(self, latent_dim: int, action_dim: int, rng, hidden: int = 64, name="reward"):
        self.net = MLP([latent_dim + action_dim, hidden, 1], rng, name=name)

    def __call__(self, z, a):
        return self.net(ad.concat([z, a], axis=1))

    def parameters(self):
        return self.net.parameters()


TARGET_MODES = ("online", "detached", "ema")


@dataclass(frozen=True)
class TargetMode:
    """``mix`` is the weight on the online parameters in each target update.

    Detached targets are the ``mix = 1`` case: a fresh copy every update.
    """

    mode: str = "ema"
    mix: float = 0.005

    def __post_init__(self):
        if self.mode not in TARGET_MODES:
            raise ValueError(f"unknown target mode {self.mode!r}; expected one of {TARGET_MODES}")
        if not (0.0 < self.mix <= 1.0):
            raise ValueError(f"mix must lie in (0, 1], got {self.mix}")

    @property
    def effective_mix(self) -> float:
        return 1.0 if self.mode == "detached" else self.mix

    @classmethod
    def from_tau(cls, mode: str, tau: float) -> "TargetMode":
        """Build from the ``target <- tau * target + (1 - tau) * online`` convention."""
        return cls(mode, 1.0 - tau if mode == "ema" else 1.0)


def _arrays(obj):
    if isinstance(obj, Module):
        return [p.value for p in obj.parameters()]
    return [p.value if isinstance(p, ad.Tensor) else p for p in obj]


def ema_update(target, online, mix: float) -> None:
    """In place: target <- (1 - mix) * target + mix * online."""
    if not (0.0 < mix <= 1.0):
        raise ValueError(f"mix must lie in (0, 1], got {mix}")
    tgt, onl = _arrays(target), _arrays(online)
    if len(tgt) != len(onl):
        raise ValueError(f"parameter count mismatch: {len(tgt)} vs {len(onl)}")
    for t, o in zip(tgt, onl):
        if t.shape != o.shape:
            raise ValueError(f"shape mismatch {t.shape} vs {o.shape}")
    for t, o in zip(tgt, onl):
        if mix == 1.0:
            t[...] = o
        else:
            t *= 1.0 - mix
            t += mix * o


def clone_module(module: Module, factory) -> Module:
    """Structurally identical copy made by ``factory()`` with values copied in."""
    copy = factory()
    copy.load_state(module.state())
    return copy


def param_distance(a: Module, b: Module) -> float:
    return float(np.sqrt(sum(np.sum((x.value - y.value) ** 2)
                             for x, y in zip(a.parameters(), b.parameters()))))


__all__ = [
    "Encoder", "EncoderSpec", "LOG_STD_MAX", "LOG_STD_MIN", "LatentModel", "Linear",
    "RewardHead", "TARGET_MODES", "TargetMode", "clone_module", "ema_update", "param_distance",
]
