"""Tabular history encoders and the samplers used by the property suites.

Latent classes are indexed per depth, so a latent state always carries the
time step it belongs to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numkit.rng import as_generator
from .tree import HistoryTree, QTable

SIGNATURE_DECIMALS = 10


class UnassignedNodeError(ValueError):
    pass


@dataclass(frozen=True)
class TabularEncoder:
    """``labels[t][i]`` is the class of node i at depth t, dense in [0, n_t)."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(np.asarray(lab, dtype=np.int64) for lab in self.labels)
        object.__setattr__(self, "labels", labels)
        for depth, lab in enumerate(labels):
            if lab.size and lab.min() < 0:
                bad = int(np.flatnonzero(lab < 0)[0])
                raise UnassignedNodeError(f"node {bad} at depth {depth} has no class")
            if lab.size and len(np.unique(lab)) != lab.max() + 1:
                raise ValueError(f"class ids at depth {depth} are not dense")

    @property
    def n_classes(self) -> tuple:
        return tuple(int(lab.max()) + 1 if lab.size else 0 for lab in self.labels)

    @property
    def total_classes(self) -> int:
        return sum(self.n_classes)

    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.n_classes)[:-1]]).astype(int)

    def global_ids(self, depth: int) -> np.ndarray:
        return self.labels[depth] + self.offsets()[depth]

    def check_tree(self, tree: HistoryTree) -> None:
        if len(self.labels) != tree.horizon:
            raise UnassignedNodeError(f"encoder covers {len(self.labels)} depths, tree has {tree.horizon}")
        for depth, (lab, layer) in enumerate(zip(self.labels, tree.layers)):
            if lab.shape != (layer.size,):
                raise UnassignedNodeError(
                    f"depth {depth}: {lab.shape[0]} labels for {layer.size} nodes "
                    f"(first unassigned node id {min(lab.shape[0], layer.size)})")


def dense_labels(keys) -> np.ndarray:
    """Map arbitrary hashable keys to dense ids in order of first appearance."""
    index, out = {}, np.empty(len(keys), dtype=np.int64)
    for i, k in enumerate(keys):
        out[i] = index.setdefault(k, len(index))
    return out


def _rows_as_keys(arr: np.ndarray):
    flat = np.round(np.asarray(arr, dtype=np.float64).reshape(arr.shape[0], -1), SIGNATURE_DECIMALS)
    flat = flat + 0.0  # fold -0.0 into 0.0
    return [row.tobytes() for row in flat]


def constant_encoder(tree: HistoryTree) -> TabularEncoder:
    return TabularEncoder(tuple(np.zeros(layer.size, dtype=np.int64) for layer in tree.layers))


def identity_encoder(tree: HistoryTree) -> TabularEncoder:
    return TabularEncoder(tuple(np.arange(layer.size) for layer in tree.layers))


def last_observation_encoder(tree: HistoryTree) -> TabularEncoder:
    return TabularEncoder(tuple(dense_labels(layer.obs.tolist()) for layer in tree.layers))


def belief_partition(tree: HistoryTree) -> TabularEncoder:
    """Histories share a class exactly when their beliefs coincide."""
    return TabularEncoder(tuple(dense_labels(_rows_as_keys(layer.belief)) for layer in tree.layers))


def state_encoder(tree: HistoryTree, state_classes) -> TabularEncoder:
    """For MDP trees: class = state_classes[current state]."""
    fn = np.asarray(state_classes)
    labels = []
    for layer in tree.layers:
        if not np.allclose(layer.belief.max(axis=1), 1.0, atol=1e-12):
            raise ValueError("state encoders need a tree whose beliefs are point masses")
        labels.append(dense_labels(fn[np.argmax(layer.belief, axis=1)].tolist()))
    return TabularEncoder(tuple(labels))


def random_partition(tree: HistoryTree, rng, max_classes: int | None = None) -> TabularEncoder:
    gen = as_generator(rng)
    labels = []
    for layer in tree.layers:
        cap = layer.size if max_classes is None else min(max_classes, layer.size)
        m = int(gen.integers(1, cap + 1))
        labels.append(dense_labels(gen.integers(0, m, layer.size).tolist()))
    return TabularEncoder(tuple(labels))


def coarse_random_partition(tree: HistoryTree, rng, max_classes: int = 3) -> TabularEncoder:
    return random_partition(tree, rng, max_classes=max_classes)


def next_latent_distribution(tree: HistoryTree, depth: int, next_labels: np.ndarray,
                             n_next: int) -> np.ndarray:
    """P(z' | h, a) for every node at ``depth``: shape (n, A, n_next)."""
    layer = tree.layers[depth]
    n, A, _ = layer.child.shape
    out = np.zeros((n, A, n_next))
    h, a, o = np.nonzero(layer.child >= 0)
    np.add.at(out, (h, a, next_labels[layer.child[h, a, o]]), layer.next_obs[h, a, o])
    return out


def refine(tree: HistoryTree, base: TabularEncoder | None = None, require=("ZP",),
           qtable: QTable | None = None) -> TabularEncoder:
    """Coarsest refinement of ``base`` that makes each required signature a class function.

    Works backward from the last depth so that next-latent signatures see the
    final partition of the following layer. ``require`` may contain ZP, RP,
    OP, Rec, OR and Q.
    """
    base = constant_encoder(tree) if base is None else base
    labels = [None] * tree.horizon
    for depth in reversed(range(tree.horizon)):
        layer = tree.layers[depth]
        parts = [base.labels[depth][:, None].astype(np.float64)]
        last = depth + 1 >= tree.horizon
        for cond in require:
            if cond == "RP":
                parts.append(layer.reward)
            elif cond == "OP":
                parts.append(layer.next_obs.reshape(layer.size, -1))
            elif cond == "OR":
                parts.append(layer.obs[:, None].astype(np.float64))
            elif cond == "Q":
                if qtable is None:
                    raise ValueError("Q refinement needs a qtable")
                parts.append(qtable.q[depth])
            elif cond == "ZP":
                if not last:
                    nxt = labels[depth + 1]
                    dist = next_latent_distribution(tree, depth, nxt, int(nxt.max()) + 1)
                    parts.append(dist.reshape(layer.size, -1))
            elif cond == "Rec":
                if not last:
                    safe = np.where(layer.child >= 0, layer.child, 0)
                    mapped = np.where(layer.child >= 0, labels[depth + 1][safe], -1)
                    parts.append(mapped.reshape(layer.size, -1).astype(np.float64))
            else:
                raise ValueError(f"unknown refinement requirement {cond!r}")
        labels[depth] = dense_labels(_rows_as_keys(np.concatenate(parts, axis=1)))
    return TabularEncoder(tuple(labels))


def recurrent_encoder(tree: HistoryTree, rng, max_classes: int = 4) -> TabularEncoder:
    """Forward construction where each child's class is a random function of
    (parent class, action, observation), so Rec holds by construction."""
    gen = as_generator(rng)
    first = tree.layers[0]
    labels = [dense_labels(gen.integers(0, min(max_classes, first.size), first.size).tolist())]
    for depth in range(1, tree.horizon):
        layer = tree.layers[depth]
        keys = list(zip(labels[-1][layer.parent].tolist(), layer.action.tolist(), layer.obs.tolist()))
        distinct = sorted(set(keys))
        m = int(gen.integers(1, min(max_classes, len(distinct)) + 1))
        table = {k: int(gen.integers(m)) for k in distinct}
        labels.append(dense_labels([table[k] for k in keys]))
    return TabularEncoder(tuple(labels))


def product_encoder(*encoders: TabularEncoder) -> TabularEncoder:
    """Common refinement: classes are tuples of the input classes."""
    depth_count = len(encoders[0].labels)
    out = []
    for depth in range(depth_count):
        keys = list(zip(*(e.labels[depth].tolist() for e in encoders)))
        out.append(dense_labels(keys))
    return TabularEncoder(tuple(out))
