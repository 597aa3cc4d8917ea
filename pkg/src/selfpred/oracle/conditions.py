"""Condition checkers on exact history trees.

Each grounded quantity of (h, a) is compared with its class-conditional
counterpart: the reach-weighted mixture over histories that share a class at
the same depth. Distributions are compared in total variation (half the L1
distance), expectations by absolute (max-norm) difference. Conditions about
the next step (ZP, EZP, OP, ZM, Rec) are checked at every depth whose
successors are part of the tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .encoders import TabularEncoder, dense_labels, next_latent_distribution
from .tree import HistoryTree, QTable, value_iteration

DEFAULT_TOL = 1e-9
CONDITIONS = ("RP", "ZP", "EZP", "OP", "OR", "ZM", "Rec", "Q*", "pi*")
MULTISTEP = ("ZP", "RP", "OP")


@dataclass
class ConditionReport:
    condition: str
    satisfied: bool
    max_violation: float
    tol: float
    witness: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_line(self) -> str:
        witness = "-"
        if self.witness:
            witness = ";".join(f"{k}={_fmt_witness(v)}" for k, v in self.witness.items())
        verdict = "pass" if self.satisfied else "fail"
        return f"{self.condition}\t{verdict}\t{self.max_violation:.17g}\t{witness}"

    @staticmethod
    def from_line(line: str) -> "ConditionReport":
        cond, verdict, viol, witness = line.rstrip("\n").split("\t")
        parsed = None
        if witness != "-":
            parsed = {}
            for item in witness.split(";"):
                k, _, v = item.partition("=")
                parsed[k] = _parse_witness(k, v)
        return ConditionReport(cond, verdict == "pass", float(viol), float("nan"), parsed)


def _fmt_witness(v) -> str:
    if isinstance(v, (tuple, list)):
        return ".".join(str(int(x)) for x in v)
    return str(v)


SEQUENCE_KEYS = ("path", "actions")


def _parse_witness(key: str, v: str):
    if key in SEQUENCE_KEYS:
        return tuple(int(x) for x in v.split(".")) if v else ()
    try:
        return int(v)
    except ValueError:
        return v


_SUM = np.add


def class_mixture(labels: np.ndarray, weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Weighted mean of ``values`` over each label group, broadcast back to members."""
    n = labels.shape[0]
    flat = values.reshape(n, -1)
    m = int(labels.max()) + 1
    num = np.zeros((m, flat.shape[1]))
    np.add.at(num, labels, weights[:, None] * flat)
    den = np.bincount(labels, weights=weights, minlength=m)
    return (num / den[:, None])[labels].reshape(values.shape)


def tv(p: np.ndarray, q: np.ndarray, axis=-1) -> np.ndarray:
    return 0.5 * np.sum(np.abs(p - q), axis=axis)


class _Worst:
    def __init__(self):
        self.value = 0.0
        self.witness = None

    def update(self, viol: np.ndarray, make_witness):
        if viol.size == 0:
            return
        idx = np.unravel_index(int(np.argmax(viol)), viol.shape)
        val = float(viol[idx])
        if val > self.value or self.witness is None:
            if val > self.value:
                self.value = val
            self.witness = make_witness(idx)

    def report(self, name, tol, **extra):
        ok = self.value <= tol
        return ConditionReport(name, ok, self.value, tol, None if ok else self.witness, extra)


def _wit(tree, depth, idx, **more):
    node = int(idx[0])
    out = {"depth": depth, "node": node, "path": tree.path(depth, node)}
    if len(idx) > 1:
        out["action"] = int(idx[1])
    out.update(more)
    return out


def next_latent(tree: HistoryTree, encoder: TabularEncoder, depth: int) -> np.ndarray:
    nxt = encoder.labels[depth + 1]
    return next_latent_distribution(tree, depth, nxt, encoder.n_classes[depth + 1])


def check_condition(tree: HistoryTree, encoder: TabularEncoder, condition: str,
                    tol: float = DEFAULT_TOL, embedding=None, qtable: QTable | None = None
                    ) -> ConditionReport:
    """Worst violation of one condition over all reachable (h, a)."""
    encoder.check_tree(tree)
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}; expected one of {CONDITIONS}")
    worst = _Worst()
    if condition in ("Q*", "pi*") and qtable is None:
        qtable = value_iteration(tree)
    for depth, layer in enumerate(tree.layers):
        lab, w = encoder.labels[depth], layer.reach
        last = depth + 1 >= tree.horizon
        viol = None
        if condition == "RP":
            viol = np.abs(layer.reward - class_mixture(lab, w, layer.reward))
        elif condition == "OR":
            own = np.eye(tree.pomdp.n_observations)[layer.obs]
            viol = tv(own, class_mixture(lab, w, own))
        elif condition == "Q*":
            q = qtable.q[depth]
            viol = np.abs(q - class_mixture(lab, w, q))
        elif condition == "pi*":
            q = qtable.q[depth]
            regret = q.max(axis=1, keepdims=True) - q
            m = int(lab.max()) + 1
            per_class = np.full((m, q.shape[1]), -np.inf)
            np.maximum.at(per_class, lab, regret)
            best = per_class.min(axis=1)
            viol = best[lab]
        elif last:
            continue
        elif condition == "OP":
            viol = tv(layer.next_obs, class_mixture(lab, w, layer.next_obs))
        elif condition == "ZP":
            p = next_latent(tree, encoder, depth)
            viol = tv(p, class_mixture(lab, w, p))
        elif condition == "EZP":
            p = next_latent(tree, encoder, depth)
            emb = np.eye(p.shape[2]) if embedding is None else np.asarray(embedding[depth + 1])
            e = p @ emb
            viol = np.max(np.abs(e - class_mixture(lab, w, e)), axis=-1)
        elif condition == "ZM":
            viol = _zm_violation(tree, encoder, depth)
        elif condition == "Rec":
            viol = _rec_violation(tree, encoder, depth)
        worst.update(viol, lambda idx, d=depth: _wit(tree, d, idx))
    return worst.report(condition, tol)


def latent_trajectory_keys(tree: HistoryTree, encoder: TabularEncoder) -> list:
    keys = [encoder.labels[0].copy()]
    for depth in range(1, tree.horizon):
        layer = tree.layers[depth]
        triples = list(zip(keys[-1][layer.parent].tolist(), layer.action.tolist(),
                           encoder.labels[depth].tolist()))
        keys.append(dense_labels(triples))
    return keys


def _zm_violation(tree, encoder, depth):
    layer = tree.layers[depth]
    keys = latent_trajectory_keys(tree, encoder)[depth]
    p = next_latent(tree, encoder, depth)
    by_traj = class_mixture(keys, layer.reach, p)
    by_class = class_mixture(encoder.labels[depth], layer.reach, p)
    return tv(by_traj, by_class)


def _rec_violation(tree, encoder, depth):
    layer = tree.layers[depth]
    n, A, O = layer.child.shape
    h, a, o = np.nonzero(layer.child >= 0)
    cls = encoder.labels[depth][h]
    group = dense_labels(list(zip(cls.tolist(), a.tolist(), o.tolist())))
    nxt = encoder.labels[depth + 1][layer.child[h, a, o]]
    m_next = encoder.n_classes[depth + 1]
    weights = layer.reach[h] * layer.next_obs[h, a, o]
    mix = class_mixture(group, weights, np.eye(m_next)[nxt])
    member = 1.0 - mix[np.arange(len(nxt)), nxt]
    out = np.zeros((n, A))
    np.maximum.at(out, (h, a), member)
    return out


# -- multi-step conditions --------------------------------------------------

def _propagate(tree: HistoryTree, depth: int, values: np.ndarray, action: int) -> np.ndarray:
    """E_{o'}[values(child) | h, action] for nodes at ``depth``; values has shape (n_{t+1}, D)."""
    layer = tree.layers[depth]
    child = layer.child[:, action, :]
    safe = np.where(child >= 0, child, 0)
    gathered = np.where((child >= 0)[..., None], values[safe], 0.0)
    return np.einsum("no,nod->nd", layer.next_obs[:, action, :], gathered)


def _sequence_quantities(tree, start, target_depth, terminal_values, n_actions, extra_action):
    """Map action sequence -> grounded quantity at nodes of ``start``.

    ``terminal_values(seq_tail)`` returns the per-node quantity at
    ``target_depth``; the sequence covers depths start .. target_depth-1 and,
    when ``extra_action`` is set, one more action at ``target_depth``.
    """
    out = {}
    k = target_depth - start
    tails = list(product(range(n_actions), repeat=1)) if extra_action else [()]
    for tail in tails:
        base = terminal_values(tail)
        for seq in product(range(n_actions), repeat=k):
            vals = base
            for j in reversed(range(k)):
                vals = _propagate(tree, start + j, vals, seq[j])
            out[seq + tuple(tail)] = vals
    return out


def check_multistep(tree: HistoryTree, encoder: TabularEncoder, condition: str, k: int,
                    tol: float = DEFAULT_TOL) -> ConditionReport:
    """k-step versions of ZP, OP and RP.

    ZP(k): law of z_{t+k} given h_t and a_t..a_{t+k-1} (k = 1 is ZP).
    OP(k): law of o_{t+k} given the same conditioning (k = 1 is OP).
    RP(k): E[r_{t+k}] given h_t and a_t..a_{t+k} (k = 0 is RP).
    """
    encoder.check_tree(tree)
    if condition not in MULTISTEP:
        raise ValueError(f"multi-step check supports {MULTISTEP}, got {condition!r}")
    A = tree.pomdp.n_actions
    T = tree.horizon
    worst = _Worst()
    feasible = 0
    for t in range(T):
        if condition == "ZP":
            target = t + k
            if k < 1 or target > T - 1:
                continue

            def term(tail, target=target):
                return np.eye(encoder.n_classes[target])[encoder.labels[target]]

            seqs = _sequence_quantities(tree, t, target, term, A, False)
        elif condition == "OP":
            target = t + k - 1
            if k < 1 or target > T - 2:
                continue

            def term(tail, target=target):
                return tree.layers[target].next_obs[:, tail[0], :]

            seqs = _sequence_quantities(tree, t, target, term, A, True)
        else:
            target = t + k
            if k < 0 or target > T - 1:
                continue

            def term(tail, target=target):
                return tree.layers[target].reward[:, tail[0]][:, None]

            seqs = _sequence_quantities(tree, t, target, term, A, True)
        feasible += 1
        layer = tree.layers[t]
        lab = encoder.labels[t]
        for seq, vals in seqs.items():
            mix = class_mixture(lab, layer.reach, vals)
            if condition == "RP":
                viol = np.abs(vals - mix)[:, 0]
            else:
                viol = tv(vals, mix)
            worst.update(viol, lambda idx, d=t, s=seq: _wit(tree, d, idx, actions=s))
    if feasible == 0:
        raise ValueError(f"k={k} leaves no feasible depth for {condition} with horizon {T}")
    return worst.report(f"multi-step-{condition}({k})", tol, k=k)


def check_all(tree, encoder, tol=DEFAULT_TOL, qtable=None) -> dict:
    qtable = value_iteration(tree) if qtable is None else qtable
    return {c: check_condition(tree, encoder, c, tol, qtable=qtable) for c in CONDITIONS}
