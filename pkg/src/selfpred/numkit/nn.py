"""Perceptron layers, a diagonal-Gaussian head and an Adam optimizer."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .linalg import orthogonal_init

LOG_STD_MIN = -10.0
LOG_STD_MAX = 2.0

_ACTIVATIONS = {"elu": ad.elu, "relu": ad.relu, "tanh": ad.tanh}


class Module:
    def parameters(self) -> list[ad.Param]:
        raise NotImplementedError

    def state(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.parameters()]

    def load_state(self, values: Sequence[np.ndarray]) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise ValueError(f"expected {len(params)} arrays, got {len(values)}")
        for p, v in zip(params, values):
            if p.value.shape != np.shape(v):
                raise ValueError(f"shape mismatch for {p.name}: {p.value.shape} vs {np.shape(v)}")
            p.value[...] = v


@contextmanager
def frozen(*modules: Module):
    """Build graphs in which the parameters of ``modules`` are constants.

    The freeze is baked in at graph construction, so a later ``backward``
    (after the context exits) still leaves those parameters untouched.
    """
    params = [p for m in modules for p in m.parameters()]
    previous = [p.frozen for p in params]
    for p in params:
        p.frozen = True
    try:
        yield
    finally:
        for p, was in zip(params, previous):
            p.frozen = was


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng, init: str = "uniform", bias: bool = True,
                 name: str = "linear"):
        gen = getattr(rng, "generator", rng)
        if init == "orthogonal":
            w = orthogonal_init(n_in, n_out, gen)
        elif init == "uniform":
            bound = 1.0 / np.sqrt(n_in)
            w = gen.uniform(-bound, bound, (n_in, n_out))
        elif init == "zeros":
            w = np.zeros((n_in, n_out))
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = ad.Param(w, name=f"{name}.weight")
        self.bias = ad.Param(np.zeros((1, n_out)), name=f"{name}.bias") if bias else None
        self.n_in, self.n_out = n_in, n_out

    def __call__(self, x):
        out = ad.matmul(x, ad.use(self.weight))
        return out + ad.use(self.bias) if self.bias is not None else out

    def parameters(self):
        return [self.weight] if self.bias is None else [self.weight, self.bias]


class MLP(Module):
    """Stack of Linear layers with an activation between them (not after the last)."""

    def __init__(self, sizes: Sequence[int], rng, activation: str = "elu",
                 init: str = "uniform", out_activation: str | None = None, name: str = "mlp"):
        if len(sizes) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        self.layers = [Linear(a, b, rng, init=init, name=f"{name}.{i}")
                       for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))]
        self.activation = _ACTIVATIONS[activation]
        self.out_activation = None if out_activation is None else _ACTIVATIONS[out_activation]

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = self.activation(x)
        return x if self.out_activation is None else self.out_activation(x)

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].n_out


class GaussianHead(Module):
    """Splits a trunk output into mean and clamped log-std."""

    def __init__(self, trunk: MLP):
        if trunk.out_dim % 2:
            raise ValueError("Gaussian head needs an even trunk width")
        self.trunk = trunk
        self.dim = trunk.out_dim // 2

    def __call__(self, x):
        out = self.trunk(x)
        d = self.dim
        mean = _slice_cols(out, 0, d)
        log_std = ad.clip(_slice_cols(out, d, 2 * d), LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    def parameters(self):
        return self.trunk.parameters()


def _slice_cols(x: ad.Tensor, lo: int, hi: int) -> ad.Tensor:
    shape = x.shape

    def fn(g):
        full = np.zeros(shape)
        full[:, lo:hi] = g
        return (full,)

    return ad._node(x.value[:, lo:hi], (x,), fn, "slice")


slice_cols = _slice_cols


def global_norm(params: Sequence[ad.Param]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_grad_norm: float | None = 100.0


class Adam:
    def __init__(self, params: Sequence[ad.Param], config: AdamConfig | None = None):
        self.params = list(params)
        self.config = config or AdamConfig()
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self) -> float:
        """Apply one update from the accumulated grads; returns the pre-clip norm."""
        cfg = self.config
        norm = global_norm(self.params)
        scale = 1.0
        if cfg.max_grad_norm is not None and norm > cfg.max_grad_norm:
            scale = cfg.max_grad_norm / (norm + 1e-12)
        self.t += 1
        c1 = 1.0 - cfg.beta1 ** self.t
        c2 = 1.0 - cfg.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad * scale
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p.value -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        return norm

    def zero_grad(self) -> None:
        ad.zero_grad(self.params)
