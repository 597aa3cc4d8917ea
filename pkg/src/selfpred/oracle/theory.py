"""Latent reward construction, the approximate reward bound and the implication suites."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..envs.pomdp import random_finite_pomdp
from ..numkit.rng import Rng, as_generator
from . import encoders as enc
from .conditions import (DEFAULT_TOL, ConditionReport, check_condition, check_multistep,
                         next_latent)
from .tree import HistoryTree, QTable, enumerate_histories, value_iteration

SAMPLED_TOL = 1e-6


class PreconditionError(ValueError):
    def __init__(self, message, report: ConditionReport):
        super().__init__(message)
        self.report = report


def class_table(encoder: enc.TabularEncoder, depth: int, weights, values) -> np.ndarray:
    """Per-class reach-weighted mean of node ``values`` at ``depth``: shape (m_t, ...)."""
    lab = encoder.labels[depth]
    m = encoder.n_classes[depth]
    flat = values.reshape(len(lab), -1)
    num = np.zeros((m, flat.shape[1]))
    np.add.at(num, lab, weights[:, None] * flat)
    den = np.bincount(lab, weights=weights, minlength=m)
    return (num / den[:, None]).reshape((m,) + values.shape[1:])


def latent_q(tree: HistoryTree, encoder: enc.TabularEncoder, qtable: QTable) -> tuple:
    return tuple(class_table(encoder, t, layer.reach, qtable.q[t])
                 for t, layer in enumerate(tree.layers))


def latent_transition(tree: HistoryTree, encoder: enc.TabularEncoder) -> tuple:
    """Class-conditional P_z(z' | z, a) per depth: shape (m_t, A, m_{t+1})."""
    out = [class_table(encoder, t, tree.layers[t].reach, next_latent(tree, encoder, t))
           for t in range(tree.horizon - 1)]
    return tuple(out)


def latent_reward_from(lq: tuple, lt: tuple, gamma: float) -> tuple:
    """R_z = Q_z - gamma * E_{P_z}[max Q_z(z', .)], and R_z = Q_z at the last step."""
    out = []
    for t, q in enumerate(lq):
        if t == len(lq) - 1:
            out.append(q.copy())
        else:
            v_next = lq[t + 1].max(axis=1)
            out.append(q - gamma * lt[t] @ v_next)
    return tuple(out)


def construct_latent_reward(tree: HistoryTree, qtable: QTable, encoder: enc.TabularEncoder,
                            transition: tuple | None = None, tol: float = DEFAULT_TOL) -> tuple:
    """Latent reward table per depth, gated on ZP and on the latent Q matching Q*."""
    zp = check_condition(tree, encoder, "ZP", tol)
    if not zp.satisfied:
        raise PreconditionError(f"encoder violates ZP by {zp.max_violation:.3g}", zp)
    qm = check_condition(tree, encoder, "Q*", tol, qtable=qtable)
    if not qm.satisfied:
        raise PreconditionError(f"latent Q misses Q* by {qm.max_violation:.3g}", qm)
    lt = latent_transition(tree, encoder) if transition is None else transition
    return latent_reward_from(latent_q(tree, encoder, qtable), lt, tree.pomdp.gamma)


def reward_reconstruction_error(tree: HistoryTree, encoder: enc.TabularEncoder, rz: tuple) -> float:
    worst = 0.0
    for t, layer in enumerate(tree.layers):
        gap = np.abs(layer.reward - rz[t][encoder.labels[t]])
        worst = max(worst, float(gap.max()))
    return worst


@dataclass
class BoundReport:
    alpha: np.ndarray
    delta: np.ndarray
    rho: float
    epsilon: np.ndarray
    gap: np.ndarray
    violations: int
    worst_slack: float

    @property
    def satisfied(self) -> bool:
        return self.violations == 0


def check_approx_bound(tree: HistoryTree, encoder: enc.TabularEncoder, lq: tuple, lt: tuple,
                       qtable: QTable | None = None, per_step_rho: bool = False,
                       slack: float = 1e-12) -> BoundReport:
    """Measure the reward gap of the constructed latent reward against its bound.

    alpha_t = max |Q* - Q_z o phi| at depth t; delta_t = max over (h, a) of the
    sup-norm-ball IPM between P(z'|h,a) and P_z(z'|phi(h),a), which equals the
    L1 distance; rho = max_t ||V_{t+1}||_inf unless ``per_step_rho``.
    """
    qtable = value_iteration(tree) if qtable is None else qtable
    T, gamma = tree.horizon, tree.pomdp.gamma
    alpha = np.zeros(T)
    delta = np.zeros(T)
    rho_t = np.zeros(T)
    for t, layer in enumerate(tree.layers):
        lab = encoder.labels[t]
        alpha[t] = np.max(np.abs(qtable.q[t] - lq[t][lab]))
        if t < T - 1:
            p = next_latent(tree, encoder, t)
            delta[t] = np.max(np.sum(np.abs(p - lt[t][lab]), axis=-1))
            rho_t[t] = np.max(np.abs(lq[t + 1].max(axis=1)))
    rho = float(rho_t.max())
    rz = latent_reward_from(lq, lt, gamma)
    eps = np.zeros(T)
    gap = np.zeros(T)
    violations, worst = 0, np.inf
    for t, layer in enumerate(tree.layers):
        r_t = rho_t[t] if per_step_rho else rho
        eps[t] = alpha[t] if t == T - 1 else alpha[t] + gamma * (alpha[t + 1] + r_t * delta[t])
        g = np.abs(layer.reward - rz[t][encoder.labels[t]])
        gap[t] = g.max()
        violations += int(np.sum(g > eps[t] + slack))
        worst = min(worst, float(eps[t] - g.max()))
    return BoundReport(alpha, delta, rho, eps, gap, violations, worst)


# -- implication and granularity suites ---------------------------------------

@dataclass
class EdgeResult:
    name: str
    premises: tuple
    conclusions: tuple
    tested: int = 0
    premise_held: int = 0
    counterexamples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.counterexamples


def _holds(tree, encoder, cond, tol, qtable=None):
    if isinstance(cond, tuple):
        name, k = cond
        return check_multistep(tree, encoder, name, k, tol)
    return check_condition(tree, encoder, cond, tol, qtable=qtable)


def _expand(tree, conds):
    """Turn ('ms', name) placeholders into every feasible k."""
    out = []
    T = tree.horizon
    for c in conds:
        if c == "ZP*":
            out.extend(("ZP", k) for k in range(1, T))
        elif c == "RP*":
            out.extend(("RP", k) for k in range(0, T))
        else:
            out.append(c)
    return out


def _state_encoders(tree, gen, n_samples):
    S = tree.pomdp.n_states
    out = []
    for i in range(n_samples):
        if i % 2 == 0:
            fn = gen.permutation(S)
        else:
            fn = gen.integers(0, max(S - 1, 1), S)
        out.append(enc.state_encoder(tree, fn))
    return out


def _sample_for(tree, premises, gen, n_samples, qtable):
    """Encoders aimed at satisfying ``premises`` plus a few unconstrained ones."""
    samples = [enc.constant_encoder(tree), enc.belief_partition(tree)]
    for i in range(n_samples):
        base = enc.random_partition(tree, gen, max_classes=int(gen.integers(1, 4)))
        kind = i % 4
        if kind == 3:
            samples.append(base)
            continue
        req = [p for p in premises if p in ("ZP", "RP", "OP", "Rec", "OR")]
        if kind == 1:
            base = enc.recurrent_encoder(tree, gen)
        if "OR" in premises:
            base = enc.product_encoder(base, enc.last_observation_encoder(tree))
        samples.append(enc.refine(tree, base, tuple(req) or ("ZP",), qtable))
    return samples


EDGES = {
    "ZP=>ZM": (("ZP",), ("ZM",)),
    "ZP=>Rec": (("ZP",), ("Rec",)),
    "OP+Rec=>ZP": (("OP", "Rec"), ("ZP",)),
    "OR+ZP=>OP": (("OR", "ZP"), ("OP",)),
    "MDP:OR=>ZP+OP": (("OR",), ("ZP", "OP")),
    "ZP=>multi-step-ZP": (("ZP",), ("ZP*",)),
    "multi-step-ZP=>ZP": (("ZP*",), ("ZP",)),
    "ZP+RP=>multi-step-RP": (("ZP", "RP"), ("RP*",)),
}


def random_tree(rng, mdp=False, deterministic=False):
    gen = as_generator(rng)
    s = int(gen.integers(2, 5))
    pomdp = random_finite_pomdp(
        gen, n_states=s, n_actions=int(gen.integers(1, 3)), n_observations=int(gen.integers(2, 4)),
        horizon=int(gen.integers(2, 5)), gamma=float(gen.uniform(0.5, 0.99)),
        deterministic=deterministic, mdp=mdp, sparsity=float(gen.choice([0.0, 0.5])))
    return enumerate_histories(pomdp)


def check_implications(tree: HistoryTree, rng, edges=None, n_samples: int = 12,
                       premise_tol: float = DEFAULT_TOL, conclusion_tol: float = SAMPLED_TOL,
                       results: dict | None = None) -> dict:
    """Sample encoders, keep those meeting each edge's premises, test the conclusions."""
    gen = as_generator(rng)
    qtable = value_iteration(tree)
    results = {} if results is None else results
    is_mdp = tree.pomdp.is_mdp
    for name in (EDGES if edges is None else edges):
        premises, conclusions = EDGES[name]
        if name.startswith("MDP:") and not is_mdp:
            continue
        res = results.setdefault(name, EdgeResult(name, premises, conclusions))
        if name.startswith("MDP:"):
            pool = _state_encoders(tree, gen, n_samples)
        else:
            pool = _sample_for(tree, premises, gen, n_samples, qtable)
        for e in pool:
            res.tested += 1
            if not all(_holds(tree, e, c, premise_tol, qtable).satisfied
                       for c in _expand(tree, premises)):
                continue
            res.premise_held += 1
            for c in _expand(tree, conclusions):
                rep = _holds(tree, e, c, conclusion_tol, qtable)
                if not rep.satisfied:
                    res.counterexamples.append((tree.pomdp, e, rep))
                    break
    return results


def run_implication_suite(seed: int, n_pomdps: int = 100, n_samples: int = 12) -> dict:
    root = Rng(seed, 7)
    results = {}
    for i in range(n_pomdps):
        r = root.split(("pomdp", i))
        check_implications(random_tree(r.split("tree")), r.split("enc"), n_samples=n_samples,
                           results=results)
        check_implications(random_tree(r.split("mdp"), mdp=True), r.split("mdp-enc"),
                           edges=["MDP:OR=>ZP+OP"], n_samples=n_samples, results=results)
    return results


@dataclass
class GranularityReport:
    tested: int
    levels: dict
    counterexamples: list

    @property
    def passed(self) -> bool:
        return not self.counterexamples


def verify_granularity(tree: HistoryTree, rng, n_samples: int = 20, tol: float = DEFAULT_TOL,
                       conclusion_tol: float = SAMPLED_TOL) -> GranularityReport:
    """Forward implications between abstraction levels on sampled encoders.

    phi_O (RP, OP, Rec) => phi_L (RP, ZP) => phi_Q* => phi_pi*.
    """
    gen = as_generator(rng)
    qtable = value_iteration(tree)
    pool = [enc.belief_partition(tree), enc.constant_encoder(tree)]
    for i in range(n_samples):
        base = enc.random_partition(tree, gen, max_classes=3)
        req = [("RP", "OP", "Rec"), ("RP", "ZP"), ("Q",), ()][i % 4]
        pool.append(enc.refine(tree, base, req, qtable) if req else base)
    levels = {"phi_O": 0, "phi_L": 0, "phi_Q*": 0, "phi_pi*": 0}
    bad = []
    for e in pool:
        def ok(c, t=tol):
            return check_condition(tree, e, c, t, qtable=qtable).satisfied

        is_o = ok("RP") and ok("OP") and ok("Rec")
        is_l = ok("RP") and ok("ZP")
        is_q = ok("Q*")
        is_pi = ok("pi*")
        levels["phi_O"] += is_o
        levels["phi_L"] += is_l
        levels["phi_Q*"] += is_q
        levels["phi_pi*"] += is_pi
        if is_o and not (ok("RP", conclusion_tol) and ok("ZP", conclusion_tol)):
            bad.append(("phi_O=>phi_L", e))
        if is_l and not ok("Q*", conclusion_tol):
            bad.append(("phi_L=>phi_Q*", e))
        if is_q and not ok("pi*", conclusion_tol):
            bad.append(("phi_Q*=>phi_pi*", e))
    return GranularityReport(len(pool), levels, bad)


def find_op_without_multistep_op(seed: int = 0, attempts: int = 2000):
    """Random search for a POMDP and encoder with OP but not 2-step OP."""
    root = Rng(seed, 11)
    for i in range(attempts):
        r = root.split(i)
        gen = r.generator
        s = int(gen.integers(2, 5))
        pomdp = random_finite_pomdp(gen, n_states=s, n_actions=2, n_observations=2, horizon=4,
                                    gamma=0.9, deterministic=bool(i % 2), sparsity=0.5)
        pomdp = replace(pomdp, initial=np.full(s, 1.0 / s))
        tree = enumerate_histories(pomdp)
        for _ in range(4):
            base = enc.random_partition(tree, gen, max_classes=2)
            e = enc.refine(tree, base, ("OP",))
            if not check_condition(tree, e, "OP").satisfied:
                continue
            rep = check_multistep(tree, e, "OP", 2)
            if rep.max_violation > 1e-3:
                return pomdp, e, rep
    raise RuntimeError(f"no OP-without-2-step-OP instance in {attempts} attempts")
