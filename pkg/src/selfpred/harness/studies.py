"""Experiment runners. Each returns claims plus the data needed for artifacts."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..envs.classic import make_load_unload
from ..envs.pomdp import random_finite_pomdp
from ..numkit.rng import Rng
from ..objectives.ideal import NodeEmbedding, ezp_stationarity, ideal_zp_loss
from ..oracle import encoders as enc
from ..oracle.conditions import check_condition, check_multistep
from ..oracle.fixtures import load_fixture
from ..oracle.theory import (EDGES, check_approx_bound, construct_latent_reward, latent_q,
                             latent_transition, reward_reconstruction_error,
                             run_implication_suite)
from ..oracle.tree import enumerate_histories, value_iteration
from .aggregate import Claim

WORKERS_ENV = "SELFPRED_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as err:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from err
    return max(1, n)


def fan_out(fn, items):
    """``[fn(x) for x in items]``, on a bounded process pool when workers > 1."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass
class StudyResult:
    claims: list
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    plots: dict = field(default_factory=dict)   # name -> (series list, PlotSpec)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.claims)


# -- exact tabular studies ------------------------------------------------------

def _random_pomdp(gen, deterministic: bool):
    s = int(gen.integers(2, 5))
    return random_finite_pomdp(gen, n_states=s, n_actions=int(gen.integers(1, 3)),
                               n_observations=int(gen.integers(2, 4)),
                               horizon=int(gen.integers(2, 5)), gamma=0.9,
                               deterministic=deterministic)


class _LinearModel:
    """g(z, a) = z W + a U + b, with an optional affine log-std head."""

    def __init__(self, gen, d, n_actions, gaussian):
        self.w = gen.normal(size=(d, d))
        self.u = gen.normal(size=(n_actions, d))
        self.b = gen.normal(size=d)
        self.gaussian = gaussian
        self.ls_u = gen.uniform(-0.5, 0.5, size=(n_actions, d))

    def __call__(self, z, a):
        mean = z @ self.w + a @ self.u + self.b
        if not self.gaussian:
            return mean
        return mean, a @ self.ls_u + 0.1 * np.tanh(z)


def zp_gap_suite(seed: int = 0, n_deterministic: int = 50, n_stochastic: int = 50,
                 latent_dim: int = 2) -> StudyResult:
    """Practical vs ideal ZP loss on random POMDPs with random latents and models."""
    gen = Rng(seed, 31).generator
    det_worst = 0.0
    stoch_min_gap = np.inf
    stoch_cases = 0
    l2_var_err = 0.0
    rows = []
    for kind, count in (("deterministic", n_deterministic), ("stochastic", n_stochastic)):
        for i in range(count):
            pomdp = _random_pomdp(gen, kind == "deterministic")
            tree = enumerate_histories(pomdp)
            if tree.horizon < 2:
                continue
            means = tuple(gen.normal(size=(layer.size, latent_dim)) for layer in tree.layers)
            log_stds = tuple(gen.uniform(-1.0, 0.5, size=(layer.size, latent_dim))
                             for layer in tree.layers)
            for metric in ("l2", "fkl"):
                model = _LinearModel(gen, latent_dim, pomdp.n_actions, metric == "fkl")
                emb = NodeEmbedding(means, log_stds if metric == "fkl" else None)
                cmp = ideal_zp_loss(pomdp, tree, emb, model, metric)
                rows.append((kind, i, metric, cmp.practical, cmp.ideal, cmp.variance))
                if kind == "deterministic":
                    det_worst = max(det_worst, abs(cmp.gap))
                elif cmp.variance > 1e-6:
                    stoch_cases += 1
                    stoch_min_gap = min(stoch_min_gap, cmp.gap)
                if kind == "stochastic" and metric == "l2":
                    l2_var_err = max(l2_var_err, abs(cmp.gap - cmp.variance))
    claims = [
        Claim("deterministic |practical - ideal|", det_worst, 1e-8, "<"),
        Claim("stochastic min(practical - ideal) where variance > 1e-6", stoch_min_gap, 0.0, ">"),
        Claim("stochastic |l2 gap - variance|", l2_var_err, 1e-8, "<"),
    ]
    header = ("kind", "index", "metric", "practical", "ideal", "variance")
    return StudyResult(claims, {"zp_gap": (header, rows)}, info={"stochastic_cases": stoch_cases})


def reward_recovery_suite(seed: int = 0, n_pomdps: int = 50, load_unload_horizon: int = 6):
    """Latent reward from exact belief-partition encoders and exact Q*."""
    gen = Rng(seed, 41).generator
    trees = [("load-unload", enumerate_histories(make_load_unload(horizon=load_unload_horizon)))]
    for i in range(n_pomdps):
        trees.append((f"random-{i}", enumerate_histories(_random_pomdp(gen, bool(i % 2)))))
    worst = 0.0
    rows = []
    for name, tree in trees:
        qtable = value_iteration(tree)
        encoder = enc.belief_partition(tree)
        rz = construct_latent_reward(tree, qtable, encoder)
        err = reward_reconstruction_error(tree, encoder, rz)
        rows.append((name, err))
        worst = max(worst, err)
    claims = [Claim("max reward reconstruction error", worst, 1e-7, "<")]
    return StudyResult(claims, {"reward_recovery": (("pomdp", "max_error"), rows)})


def approx_bound_suite(seed: int = 0, n_pairs: int = 50, scale: float = 0.1):
    """Reward gap against the computed bound for perturbed (encoder, Q, P_z) triples."""
    gen = Rng(seed, 43).generator
    violations = 0
    worst_slack = np.inf
    rows = []
    for i in range(n_pairs):
        tree = enumerate_histories(_random_pomdp(gen, False))
        qtable = value_iteration(tree)
        encoder = enc.random_partition(tree, gen, max_classes=3) if i % 2 else \
            enc.refine(tree, enc.random_partition(tree, gen, max_classes=2), ("ZP",))
        lq = tuple(q + scale * gen.normal(size=q.shape) for q in latent_q(tree, encoder, qtable))
        lt = []
        for p in latent_transition(tree, encoder):
            noise = gen.dirichlet(np.ones(p.shape[-1]), size=p.shape[:-1])
            lt.append((1 - scale) * p + scale * noise)
        rep = check_approx_bound(tree, encoder, lq, tuple(lt), qtable)
        violations += rep.violations
        worst_slack = min(worst_slack, rep.worst_slack)
        rows.append((i, float(rep.gap.max()), float(rep.epsilon.max()), rep.violations))
    claims = [Claim("bound violations", violations, 0, "<=")]
    header = ("pair", "max_gap", "max_epsilon", "violations")
    return StudyResult(claims, {"approx_bound": (header, rows)}, info={"worst_slack": worst_slack})


def stationarity_pomdp():
    """Small stochastic POMDP used for the stop-gradient stationarity fixture."""
    gen = Rng(2024, 47).generator
    return random_finite_pomdp(gen, n_states=3, n_actions=2, n_observations=2, horizon=3,
                               gamma=0.9)


def stationarity_suite():
    res = ezp_stationarity(enumerate_histories(stationarity_pomdp()))
    claims = [
        Claim("stop-gradient gradient norm at EZP solution", res.stop_gradient_norm, 1e-7, "<"),
        Claim("online-target gradient norm at EZP solution", res.online_norm, 1e-4, ">"),
        Claim("EZP residual of the constructed solution", res.ezp_violation, 1e-9, "<"),
    ]
    rows = [(res.stop_gradient_norm, res.online_norm, res.ezp_violation, res.loss)]
    header = ("stop_gradient_norm", "online_norm", "ezp_violation", "loss")
    return StudyResult(claims, {"stationarity": (header, rows)})


ACCEPTANCE_EDGES = ("ZP=>ZM", "ZP=>Rec", "OP+Rec=>ZP", "OR+ZP=>OP", "MDP:OR=>ZP+OP",
                    "ZP=>multi-step-ZP", "multi-step-ZP=>ZP", "ZP+RP=>multi-step-RP")


def implication_suite(seed: int = 0, n_pomdps: int = 100, n_samples: int = 12) -> StudyResult:
    results = run_implication_suite(seed, n_pomdps, n_samples)
    claims, rows = [], []
    for name in EDGES:
        r = results[name]
        rows.append((name, r.tested, r.premise_held, len(r.counterexamples)))
        claims.append(Claim(f"{name} counterexamples", len(r.counterexamples), 0, "<="))
        claims.append(Claim(f"{name} premise instances", r.premise_held, 1, ">="))
    _, e, tree = load_fixture("op_without_2step_op")
    op = check_condition(tree, e, "OP")
    two = check_multistep(tree, e, "OP", 2)
    claims.append(Claim("fixture: OP violation", op.max_violation, 1e-9, "<"))
    claims.append(Claim("fixture: 2-step OP violation", two.max_violation, 1e-3, ">"))
    header = ("edge", "encoders_tested", "premise_held", "counterexamples")
    return StudyResult(claims, {"implications": (header, rows)},
                       info={"n_pomdps": n_pomdps})
