"""Practical self-prediction, observation-prediction and reward-prediction losses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numkit import autodiff as ad
from ..numkit.nn import LOG_STD_MAX, LOG_STD_MIN, global_norm
from .models import Encoder, TargetMode


@dataclass
class Batch:
    """Aligned transition arrays. ``a`` is one-hot for discrete actions."""

    h: np.ndarray
    a: np.ndarray
    h_next: np.ndarray
    r: np.ndarray | None = None
    o_next: np.ndarray | None = None
    done: np.ndarray | None = None

    def __len__(self):
        return self.h.shape[0]


@dataclass
class LossBreakdown:
    total: float
    components: dict
    weights: dict = field(default_factory=dict)
    grad_norms: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    graph: ad.Tensor | None = field(default=None, repr=False)

    def weighted_sum(self) -> float:
        return float(sum(self.weights.get(k, 1.0) * v for k, v in self.components.items()))

    def backward(self, groups: dict | None = None) -> None:
        """Backpropagate the graph and record per-group gradient norms."""
        ad.backward(self.graph)
        for name, params in (groups or {}).items():
            self.grad_norms[name] = global_norm(params)


def combine(parts: dict, weights: dict) -> LossBreakdown:
    """Weighted sum of named single-component breakdowns into one graph."""
    graph = None
    components, flags = {}, {}
    for name, part in parts.items():
        w = weights.get(name, 1.0)
        components[name] = part.total
        flags.update(part.flags)
        term = part.graph if w == 1.0 else ad.mul(part.graph, w)
        graph = term if graph is None else ad.add(graph, term)
    total = float(graph.value)
    return LossBreakdown(total, components, dict(weights), flags=flags, graph=graph)


def _single(name, graph, flags=None) -> LossBreakdown:
    return LossBreakdown(float(graph.value), {name: float(graph.value)}, {name: 1.0},
                         flags=flags or {}, graph=graph)


def squared_error(pred, target) -> ad.Tensor:
    """Batch mean of the squared Euclidean norm of the difference."""
    diff = ad.sub(pred, target)
    return ad.mean(ad.sum(ad.square(diff), axis=1))


def gaussian_kl(mu1, log_std1, mu2, log_std2) -> ad.Tensor:
    """Per-row KL(N(mu1, s1^2) || N(mu2, s2^2)) for diagonal Gaussians, summed over dims."""
    var1 = ad.exp(ad.mul(log_std1, 2.0))
    inv_var2 = ad.exp(ad.mul(log_std2, -2.0))
    sq = ad.square(ad.sub(mu1, mu2))
    term = ad.mul(ad.mul(ad.add(var1, sq), inv_var2), 0.5)
    per_dim = ad.add(ad.sub(ad.sub(log_std2, log_std1), 0.5), term)
    return ad.sum(per_dim, axis=1)


def gaussian_kl_np(mu1, log_std1, mu2, log_std2) -> np.ndarray:
    var1, var2 = np.exp(2 * log_std1), np.exp(2 * log_std2)
    return np.sum(log_std2 - log_std1 + (var1 + (mu1 - mu2) ** 2) / (2 * var2) - 0.5, axis=-1)


def _target_latent(encoder: Encoder, target_encoder: Encoder | None, h_next, mode: TargetMode):
    if mode.mode == "online":
        return encoder(h_next)
    if target_encoder is None:
        raise ValueError("detached and EMA targets need a target encoder")
    mean, log_std = target_encoder(h_next)
    return ad.stop_gradient(mean), None if log_std is None else ad.stop_gradient(log_std)


def zp_loss_l2(encoder: Encoder, model, target_encoder: Encoder | None, batch: Batch,
               mode: TargetMode = TargetMode()) -> LossBreakdown:
    """Mean of ||g(f(h), a) - f_target(h')||^2 over the batch."""
    if encoder.stochastic or model.stochastic:
        raise TypeError("zp_loss_l2 needs deterministic heads; use zp_loss_kl for Gaussian ones")
    z, _ = encoder(batch.h)
    pred, _ = model(z, batch.a)
    target, _ = _target_latent(encoder, target_encoder, batch.h_next, mode)
    return _single("zp", squared_error(pred, target))


def _clamp_count(*log_stds) -> int:
    count = 0
    for ls in log_stds:
        if ls is not None:
            v = ls.value
            count += int(np.sum((v <= LOG_STD_MIN) | (v >= LOG_STD_MAX)))
    return count


def zp_loss_kl(encoder: Encoder, model, target_encoder: Encoder | None, batch: Batch,
               direction: str = "fkl", mode: TargetMode = TargetMode(), rng=None,
               noise: np.ndarray | None = None) -> LossBreakdown:
    """KL between the target next-latent Gaussian and the model prediction.

    fkl: KL(target || model); rkl: KL(model || target). The current latent is
    drawn with the reparameterization z = mean + std * noise.
    """
    if direction not in ("fkl", "rkl"):
        raise ValueError(f"direction must be fkl or rkl, got {direction!r}")
    if not (encoder.stochastic and model.stochastic):
        raise TypeError("zp_loss_kl needs Gaussian encoder and model heads")
    mean, log_std = encoder(batch.h)
    if noise is None:
        gen = getattr(rng, "generator", rng)
        if gen is None:
            raise ValueError("zp_loss_kl needs rng or explicit noise for the reparameterized draw")
        noise = gen.standard_normal(mean.shape)
    z = ad.add(mean, ad.mul(ad.exp(log_std), noise))
    mu_m, ls_m = model(z, batch.a)
    mu_t, ls_t = _target_latent(encoder, target_encoder, batch.h_next, mode)
    if direction == "fkl":
        kl = gaussian_kl(mu_t, ls_t, mu_m, ls_m)
    else:
        kl = gaussian_kl(mu_m, ls_m, mu_t, ls_t)
    flags = {"clamped_log_std": _clamp_count(log_std, ls_m, ls_t)}
    return _single("zp", ad.mean(kl), flags)


def op_loss(encoder: Encoder, obs_predictor, batch: Batch, metric: str = "l2",
            obs_std: float = 1.0) -> LossBreakdown:
    """Next-observation prediction against the grounded o'.

    ``fkl`` scores KL(N(o', obs_std^2) || predictor), which differs from the
    Gaussian negative log-likelihood only by a constant and stays non-negative.
    """
    if batch.o_next is None:
        raise ValueError("op_loss needs o_next in the batch")
    z, _ = encoder(batch.h)
    pred, log_std = obs_predictor(z, batch.a)
    if pred.shape[1] != batch.o_next.shape[1]:
        raise ValueError(f"predictor outputs {pred.shape[1]} dims, observations have "
                         f"{batch.o_next.shape[1]}")
    if metric == "l2":
        return _single("op", squared_error(pred, batch.o_next))
    if metric != "fkl":
        raise ValueError(f"metric must be l2 or fkl, got {metric!r}")
    if log_std is None:
        raise TypeError("fkl observation loss needs a Gaussian predictor")
    target_ls = np.full(batch.o_next.shape, np.log(obs_std))
    kl = gaussian_kl(ad.Tensor(batch.o_next), ad.Tensor(target_ls), pred, log_std)
    return _single("op", ad.mean(kl), {"clamped_log_std": _clamp_count(log_std)})


def rp_loss(encoder: Encoder, reward_head, batch: Batch) -> LossBreakdown:
    if batch.r is None:
        raise ValueError("rp_loss needs rewards in the batch")
    z, _ = encoder(batch.h)
    pred = reward_head(z, batch.a)
    return _single("rp", squared_error(pred, np.asarray(batch.r, dtype=np.float64).reshape(-1, 1)))
