"""Exact ideal and practical self-prediction losses on finite history trees.

The data distribution draws a depth uniformly among those with successors,
a history by its reach probability, an action from the reference policy and
the next observation from the POMDP.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from numpy.polynomial.hermite import hermgauss

from ..envs.pomdp import FinitePOMDP
from ..numkit import autodiff as ad
from ..oracle.tree import HistoryTree

MAX_QUADRATURE_DIM = 3


class NotTabularError(TypeError):
    pass


@dataclass(frozen=True)
class NodeEmbedding:
    """Per-depth latent means (n_t, d) and optional log-stds for each history node."""

    means: tuple
    log_stds: tuple | None = None

    @property
    def stochastic(self) -> bool:
        return self.log_stds is not None


@dataclass
class ZPComparison:
    practical: float
    ideal: float
    variance: float  # E ||f(h') - E f(h')||^2 (l2) or mixture-entropy gap (fkl)

    @property
    def gap(self) -> float:
        return self.practical - self.ideal


def transitions(tree: HistoryTree):
    """Weighted (depth, h, a, o, child) tuples as flat arrays per depth."""
    T = tree.horizon
    valid = range(T - 1)
    out = []
    for t in valid:
        layer = tree.layers[t]
        h, a, o = np.nonzero(layer.child >= 0)
        w = layer.reach[h] * tree.policy[a] * layer.next_obs[h, a, o] / len(valid)
        out.append((t, h, a, o, layer.child[h, a, o], w))
    return out


def _require_tree(pomdp, tree):
    if not isinstance(pomdp, FinitePOMDP) or not isinstance(tree, HistoryTree):
        raise NotTabularError("ideal losses need a FinitePOMDP and its enumerated HistoryTree")


def _model_out(model, z, a_onehot):
    out = model(z, a_onehot)
    if isinstance(out, tuple):
        return out
    return out, None


def ideal_zp_loss(pomdp: FinitePOMDP, tree: HistoryTree, embedding: NodeEmbedding, model,
                  metric: str = "l2", n_quadrature: int = 40) -> ZPComparison:
    """Practical and ideal ZP losses, enumerated exactly.

    ``model(z, a_onehot)`` returns the predicted mean (and log-std for fkl)
    as numpy arrays. For stochastic encoders the model input is the latent
    mean, shared by both objectives.
    """
    _require_tree(pomdp, tree)
    if metric not in ("l2", "fkl"):
        raise ValueError(f"metric must be l2 or fkl, got {metric!r}")
    A = pomdp.n_actions
    practical = ideal = variance = 0.0
    for t, h, a, o, child, w in transitions(tree):
        mu_h = embedding.means[t][h]
        pred_mu, pred_ls = _model_out(model, mu_h, np.eye(A)[a])
        nxt_mu = embedding.means[t + 1][child]
        layer = tree.layers[t]
        group = h * A + a
        n_groups = layer.size * A
        wsum = np.bincount(group, weights=w, minlength=n_groups)
        if metric == "l2":
            practical += float(np.sum(w * np.sum((pred_mu - nxt_mu) ** 2, axis=1)))
            mean_next = np.zeros((n_groups, nxt_mu.shape[1]))
            np.add.at(mean_next, group, w[:, None] * nxt_mu)
            mean_next = mean_next[group] / wsum[group][:, None]
            ideal += float(np.sum(w * np.sum((pred_mu - mean_next) ** 2, axis=1)))
            variance += float(np.sum(w * np.sum((nxt_mu - mean_next) ** 2, axis=1)))
        else:
            if not embedding.stochastic or pred_ls is None:
                raise TypeError("fkl ideal loss needs Gaussian encoder and model heads")
            nxt_ls = embedding.log_stds[t + 1][child]
            cross = _gaussian_cross_entropy(nxt_mu, nxt_ls, pred_mu, pred_ls)
            ent = _gaussian_entropy(nxt_ls)
            practical += float(np.sum(w * (cross - ent)))
            mix_term = _mixture_log_density_expectation(group, w, nxt_mu, nxt_ls, n_quadrature)
            ideal += float(np.sum(w * (cross + mix_term)))
            variance += float(np.sum(w * (-ent - mix_term)))
    return ZPComparison(practical, ideal, variance)


def _gaussian_entropy(log_std):
    d = log_std.shape[-1]
    return 0.5 * d * (1.0 + np.log(2 * np.pi)) + np.sum(log_std, axis=-1)


def _gaussian_cross_entropy(mu_q, ls_q, mu_p, ls_p):
    """-E_{x ~ q}[log p(x)] for diagonal Gaussians."""
    var_q, var_p = np.exp(2 * ls_q), np.exp(2 * ls_p)
    return np.sum(0.5 * np.log(2 * np.pi) + ls_p + (var_q + (mu_q - mu_p) ** 2) / (2 * var_p),
                  axis=-1)


def _log_gauss(x, mu, ls):
    z = (x - mu) * np.exp(-ls)
    return np.sum(-0.5 * z * z - ls - 0.5 * np.log(2 * np.pi), axis=-1)


def _mixture_log_density_expectation(group, w, mu, ls, n_quadrature):
    """E_{x ~ q_i}[log qbar(x)] per row i, where qbar mixes rows sharing ``group``.

    Single-component groups use the closed form -H(q_i); otherwise a
    Gauss-Hermite product rule centered on each component.
    """
    out = np.empty(len(group))
    d = mu.shape[1]
    nodes, weights = hermgauss(n_quadrature)
    for g in np.unique(group):
        rows = np.flatnonzero(group == g)
        if len(rows) == 1:
            out[rows] = -_gaussian_entropy(ls[rows])
            continue
        if d > MAX_QUADRATURE_DIM:
            raise ValueError(f"mixture quadrature supports latent dim <= {MAX_QUADRATURE_DIM}")
        pi = w[rows] / w[rows].sum()
        grid = np.array(list(product(nodes, repeat=d)))
        gw = np.prod(np.array(list(product(weights, repeat=d))), axis=1) / np.pi ** (d / 2)
        for i in rows:
            x = mu[i] + np.sqrt(2.0) * np.exp(ls[i]) * grid
            comp = np.stack([_log_gauss(x, mu[j], ls[j]) for j in rows], axis=1) + np.log(pi)
            peak = comp.max(axis=1, keepdims=True)
            log_mix = peak[:, 0] + np.log(np.exp(comp - peak).sum(axis=1))
            out[i] = float(gw @ log_mix)
    return out


# -- stationarity fixture --------------------------------------------------------

@dataclass
class StationarityResult:
    stop_gradient_norm: float
    online_norm: float
    ezp_violation: float
    loss: float


def belief_embedding(tree: HistoryTree) -> NodeEmbedding:
    return NodeEmbedding(tuple(layer.belief.copy() for layer in tree.layers))


def ezp_stationarity(tree: HistoryTree) -> StationarityResult:
    """Gradients of the l2 ZP loss at an exact EZP solution.

    The encoder is a free table of node latents set to the beliefs and the
    model is g(z, a) = z T_a, which predicts the expected next belief exactly.
    """
    pomdp = tree.pomdp
    sizes = [layer.size for layer in tree.layers]
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    table = ad.Param(np.concatenate([layer.belief for layer in tree.layers]), name="phi")
    weights = [ad.Param(pomdp.transition[:, a, :].copy(), name=f"theta_{a}")
               for a in range(pomdp.n_actions)]
    rows = [(offsets[t] + h, offsets[t + 1] + child, a, w)
            for t, h, a, o, child, w in transitions(tree)]
    src = np.concatenate([r[0] for r in rows])
    dst = np.concatenate([r[1] for r in rows])
    act = np.concatenate([r[2] for r in rows])
    w = np.concatenate([r[3] for r in rows])
    n_total = table.value.shape[0]
    pick_src = np.eye(n_total)[src]
    pick_dst = np.eye(n_total)[dst]

    def loss(online: bool):
        z = ad.matmul(pick_src, table)
        pred = None
        for a, W in enumerate(weights):
            term = ad.mul(ad.matmul(z, W), (act == a).astype(float)[:, None])
            pred = term if pred is None else ad.add(pred, term)
        target = ad.matmul(pick_dst, table) if online else ad.Tensor(pick_dst @ table.value)
        sq = ad.sum(ad.square(ad.sub(pred, target)), axis=1)
        return ad.sum(ad.mul(sq, w / w.sum()))

    params = [table] + weights
    norms = []
    for online in (False, True):
        ad.zero_grad(params)
        g = loss(online)
        ad.backward(g)
        norms.append(float(np.sqrt(sum(np.sum(p.grad ** 2) for p in params if p.grad is not None))))
        value = float(g.value)
    ad.zero_grad(params)
    # EZP residual: predicted minus expected next latent, per (h, a)
    resid = 0.0
    for t, h, a, o, child, wt in transitions(tree):
        layer = tree.layers[t]
        exp_next = np.zeros((layer.size, pomdp.n_actions, pomdp.n_states))
        np.add.at(exp_next, (h, a), layer.next_obs[h, a, o][:, None] * tree.layers[t + 1].belief[child])
        pred = np.einsum("ns,ast->nat", layer.belief, np.transpose(pomdp.transition, (1, 0, 2)))
        resid = max(resid, float(np.max(np.abs(pred - exp_next))))
    return StationarityResult(norms[0], norms[1], resid, value)
