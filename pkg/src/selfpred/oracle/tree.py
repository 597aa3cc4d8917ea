"""Exact history trees with beliefs, reach probabilities and optimal values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envs.pomdp import FinitePOMDP

DEFAULT_NODE_BUDGET = 10 ** 6


class NodeBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Layer:
    """All histories with ``depth`` actions taken.

    ``child[i, a, o]`` is the index of (h_i, a, o) in the next layer, or -1
    when that observation has probability zero.
    """

    depth: int
    belief: np.ndarray        # (n, S)
    reach: np.ndarray         # (n,) under the reference policy
    parent: np.ndarray        # (n,) index into previous layer, -1 at the root
    action: np.ndarray        # (n,) action leading here, -1 at the root
    obs: np.ndarray           # (n,) last observation
    reward: np.ndarray        # (n, A) expected immediate reward
    next_obs: np.ndarray      # (n, A, O) P(o' | h, a)
    child: np.ndarray         # (n, A, O)

    @property
    def size(self) -> int:
        return self.belief.shape[0]


@dataclass(frozen=True)
class HistoryTree:
    pomdp: FinitePOMDP
    layers: tuple
    policy: np.ndarray  # reference action distribution (A,)

    @property
    def horizon(self) -> int:
        return len(self.layers)

    @property
    def n_nodes(self) -> int:
        return sum(layer.size for layer in self.layers)

    def path(self, depth: int, index: int) -> tuple:
        """(o_1, a_1, o_2, ..., o_t) for a node."""
        out = []
        while depth >= 0:
            layer = self.layers[depth]
            out.append(int(layer.obs[index]))
            if depth > 0:
                out.append(int(layer.action[index]))
            index = int(layer.parent[index])
            depth -= 1
        return tuple(reversed(out))


def node_bound(pomdp: FinitePOMDP) -> int:
    a, o = pomdp.n_actions, pomdp.n_observations
    return sum(o * (a * o) ** t for t in range(pomdp.horizon))


def enumerate_histories(pomdp: FinitePOMDP, policy=None,
                        max_nodes: int = DEFAULT_NODE_BUDGET) -> HistoryTree:
    """Every history with positive probability, up to ``horizon`` actions.

    The reference policy is a fixed action distribution (uniform by default);
    it only shapes the reach weights, never which nodes exist.
    """
    if pomdp.terminal is not None and np.any(pomdp.terminal):
        raise ValueError("history enumeration does not support terminal states")
    need = node_bound(pomdp)
    if need > max_nodes:
        raise NodeBudgetExceeded(f"tree may need up to {need} nodes, budget is {max_nodes}")
    A, O = pomdp.n_actions, pomdp.n_observations
    pi = np.full(A, 1.0 / A) if policy is None else np.asarray(policy, dtype=np.float64)
    if pi.shape != (A,) or np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-12:
        raise ValueError("reference policy must be a full-support distribution over actions")
    E, P, R = pomdp.emission, pomdp.transition, pomdp.reward_mean

    joint0 = pomdp.initial[:, None] * E            # (S, O)
    p_o = joint0.sum(axis=0)
    keep = np.flatnonzero(p_o > 0)
    belief = (joint0[:, keep] / p_o[keep]).T
    reach = p_o[keep]
    parent = np.full(len(keep), -1)
    action = np.full(len(keep), -1)
    obs = keep.copy()
    layers = []
    for depth in range(pomdp.horizon):
        pred = np.einsum("ns,sat->nat", belief, P)         # P(s' | h, a)
        joint = pred[:, :, :, None] * E[None, None]        # (n, A, S', O)
        next_obs = joint.sum(axis=2)
        reward = belief @ R
        last = depth == pomdp.horizon - 1
        child = np.full((belief.shape[0], A, O), -1)
        if not last:
            idx = np.argwhere(next_obs > 0)
            child[idx[:, 0], idx[:, 1], idx[:, 2]] = np.arange(len(idx))
        layers.append(Layer(depth, belief, reach, parent, action, obs, reward, next_obs, child))
        if last:
            break
        n_i, a_i, o_i = idx[:, 0], idx[:, 1], idx[:, 2]
        pz = next_obs[n_i, a_i, o_i]
        belief = joint[n_i, a_i, :, o_i] / pz[:, None]
        reach = reach[n_i] * pi[a_i] * pz
        parent, action, obs = n_i, a_i, o_i
    return HistoryTree(pomdp, tuple(layers), pi)


@dataclass(frozen=True)
class QTable:
    """Optimal action values per layer: ``q[t]`` has shape (n_t, A)."""

    q: tuple
    gamma: float

    def values(self, depth: int) -> np.ndarray:
        return self.q[depth].max(axis=1)


def continuation(tree: HistoryTree, depth: int, per_node: np.ndarray) -> np.ndarray:
    """E_{o'}[per_node(child)] for every (h, a) in ``depth``; zero past the end."""
    layer = tree.layers[depth]
    if depth + 1 >= tree.horizon:
        return np.zeros(layer.next_obs.shape[:2])
    safe = np.where(layer.child >= 0, layer.child, 0)
    vals = np.where(layer.child >= 0, per_node[safe], 0.0)
    return np.sum(layer.next_obs * vals, axis=2)


def value_iteration(tree: HistoryTree) -> QTable:
    """Backward induction: Q_t = r + gamma * E[max Q_{t+1}], Q at the last layer = r."""
    gamma = tree.pomdp.gamma
    q = [None] * tree.horizon
    v_next = None
    for depth in reversed(range(tree.horizon)):
        layer = tree.layers[depth]
        if v_next is None:
            q[depth] = layer.reward.copy()
        else:
            q[depth] = layer.reward + gamma * continuation(tree, depth, v_next)
        v_next = q[depth].max(axis=1)
    return QTable(tuple(q), gamma)


def bellman_residual(tree: HistoryTree, qtable: QTable) -> float:
    worst = 0.0
    for depth, layer in enumerate(tree.layers):
        target = layer.reward.copy()
        if depth + 1 < tree.horizon:
            target += qtable.gamma * continuation(tree, depth, qtable.values(depth + 1))
        worst = max(worst, float(np.max(np.abs(qtable.q[depth] - target))))
    return worst
