"""End-to-end acceptance checks, one test per criterion, at full settings.

Each test prints a single ``criterion N: PASS|FAIL ...`` line. The RL study
(criterion 8) trains 81 agents and takes about an hour on one core.
"""

import os
import time

import numpy as np
import pytest

from selfpred.agents import (VARIANTS, AgentConfig, ReplayBuffer, build_agent, rl_loss_minimalist,
                             td_loss_discrete)
from selfpred.agents.core import _assemble, _batch
from selfpred.harness.aggregate import Claim
from selfpred.harness.config import load_config, loads_config
from selfpred.harness.registry import run_study, write_artifacts
from selfpred.numkit import autodiff as ad
from selfpred.numkit.linalg import pinv, svd
from selfpred.objectives import gaussian_kl_np

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def config(name):
    return load_config(os.path.join(CONFIGS, name))


@pytest.fixture
def report(acceptance_line):
    def emit(n, claims, seconds=None, extra=""):
        ok = all(c.passed for c in claims)
        timing = f" in {seconds:.0f}s" if seconds is not None else ""
        detail = "; ".join(c.line() for c in claims)
        acceptance_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}{timing} {extra}{detail}")
        return ok
    return emit


def timed(cfg):
    start = time.perf_counter()
    result = run_study(cfg)
    return result, time.perf_counter() - start


def by_name(claims, *fragments):
    return [c for c in claims if any(f in c.name for f in fragments)]


@pytest.fixture(scope="module")
def collapse():
    return timed(config("collapse.ini"))


@pytest.fixture(scope="module")
def oracle():
    return timed(config("oracle.ini"))


def test_criterion_1_collapse_ordering(collapse, report):
    result, seconds = collapse
    assert len(config("collapse.ini").seeds) == 100
    # the measured time also covers the drift sweep of criterion 2
    claims = by_name(result.claims, "median final |cos|") + [
        Claim("collapse study seconds", seconds, 300.0, "<=")]
    assert len(claims) == 5
    assert report(1, claims, seconds)


def test_criterion_2_drift_monotone(collapse, report):
    result, _ = collapse
    claims = by_name(result.claims, "drift")
    assert len(claims) == 2
    assert report(2, claims, extra=f"medians {result.info['drift_medians']}; ")


def test_criterion_3_zp_gap_suite(report):
    result, seconds = timed(loads_config("[experiment]\nkind = oracle-suite\n"
                                         "[params]\nsuites = zp-gap\n"))
    claims = result.claims + [Claim("zp-gap suite seconds", seconds, 60.0, "<=")]
    assert report(3, claims, seconds)


def test_criterion_4_reward_recovery(oracle, report):
    result, _ = oracle
    claims = by_name(result.claims, "reward reconstruction")
    assert len(claims) == 1
    assert report(4, claims)


def test_criterion_5_implication_edges(report):
    result, seconds = timed(loads_config("[experiment]\nkind = oracle-suite\n[params]\n"
                                         "suites = implications\nn_pomdps = 100\n"))
    claims = result.claims + [Claim("implication suite seconds", seconds, 180.0, "<=")]
    edges = {c.name.split(" counterexamples")[0] for c in by_name(result.claims, "counterexamples")}
    assert len(edges) >= 7
    assert report(5, claims, seconds)


def test_criterion_6_bound(report):
    result, seconds = timed(config("bound.ini"))
    assert report(6, result.claims, seconds)


def test_criterion_7_stationarity(oracle, report):
    result, _ = oracle
    claims = by_name(result.claims, "gradient norm at EZP")
    assert len(claims) == 2
    assert report(7, claims)


# -- criterion 8: directional RL claims ---------------------------------------------

RL_TOTAL_SECONDS = []


def rl_study(name):
    cfg = config(name)
    assert len(cfg.seeds) >= 9 and cfg.get("budget") <= 200_000
    result, seconds = timed(cfg)
    RL_TOTAL_SECONDS.append(seconds)
    return result, seconds


def test_criterion_8a_keydoor_ordering(report):
    result, seconds = rl_study("train-keydoor.ini")
    assert len(result.claims) == 2
    assert report("8a", result.claims, seconds)


def test_criterion_8b_distractor_degradation(report):
    result, seconds = rl_study("train-distractors.ini")
    assert len(result.claims) == 1
    assert report("8b", result.claims, seconds)


def test_criterion_8c_rank_and_total_time(report):
    result, seconds = rl_study("rank.ini")
    claims = result.claims + [Claim("criterion 8 total seconds", sum(RL_TOTAL_SECONDS), 7200.0,
                                    "<=")]
    assert len(claims) == 2
    assert report("8c", claims, seconds, extra=f"median ranks {result.info['median_rank']}; ")


# -- criterion 9: numerics ----------------------------------------------------------

def assembled_grad_error(variant, discrete, seed=0):
    """Worst finite-difference error of the assembled loss for one agent.

    Semi-gradient terms (the actor objective and the phased TD loss) treat
    some parameters as constants; for those groups the full gradient is first
    shown equal to that of the loss with the frozen term removed, and the
    reduced loss is then checked numerically.
    """
    gen = np.random.default_rng(seed)
    h_dim, o_dim, a_dim = 5, 3, 2
    cfg = AgentConfig(variant=variant, latent_dim=2, hidden=4, batch_size=8, target_mode="online")
    state = build_agent(cfg, h_dim, o_dim, a_dim, discrete, gen)
    buf = ReplayBuffer(64, h_dim, a_dim, o_dim)
    for t in range(40):
        a = np.eye(a_dim)[gen.integers(a_dim)] if discrete else gen.uniform(-1, 1, a_dim)
        buf.add(gen.normal(size=h_dim), a, gen.normal(), gen.normal(size=h_dim),
                gen.normal(size=o_dim), done=t % 14 == 6, end=t % 7 == 6)
    sample = buf.sample(8, gen, n_step=3 if discrete else 1, gamma=0.9)
    batch = _batch(sample)
    params = state.trainable()
    enc = state.encoder.parameters()

    def except_(group, among):
        return [p for p in among if all(p is not q for q in group)]

    def grads(fn, ps):
        ad.zero_grad(ps)
        ad.backward(fn())
        out = [np.zeros_like(p.value) if p.grad is None else p.grad.copy() for p in ps]
        ad.zero_grad(ps)
        return out

    def same_grads(f, g, ps):
        return all(np.allclose(a, b, rtol=1e-12, atol=1e-14)
                   for a, b in zip(grads(f, ps), grads(g, ps)))

    def build(rl=True, actor=True):
        def fn():
            rng = np.random.default_rng(99)
            if discrete:
                td = td_loss_discrete(state, sample) if rl else ad.Tensor(0.0)
                return _assemble(state, td, "rl", batch, rng).graph
            td, act = rl_loss_minimalist(state, sample)
            return _assemble(state, td if rl else ad.Tensor(0.0), "rl", batch, rng,
                             {"actor": act} if actor else None).graph
        return fn

    errors = []
    if discrete:
        full = build()
        if not cfg.phased:
            return ad.grad_check(full, params)
        errors.append(ad.grad_check(full, except_(enc, params)))
        assert same_grads(full, build(rl=False), enc)
        errors.append(ad.grad_check(build(rl=False), enc))
        return max(errors)
    full, reduced = build(), build(actor=False)
    actor = state.heads["actor"].parameters()
    others = except_(actor, params)
    errors.append(ad.grad_check(full, actor))
    assert same_grads(full, reduced, others)
    if cfg.phased:
        errors.append(ad.grad_check(reduced, except_(enc, others)))
        no_td = build(rl=False, actor=False)
        assert same_grads(reduced, no_td, enc)
        errors.append(ad.grad_check(no_td, enc))
    else:
        errors.append(ad.grad_check(reduced, others))
    return max(errors)


def test_criterion_9_numerics(report):
    grad_err = max(assembled_grad_error(v, d) for v in VARIANTS for d in (True, False))
    gen = np.random.default_rng(9)
    svd_err, penrose_err = 0.0, 0.0
    for i in range(60):
        m, n = gen.integers(1, 13, size=2)
        a = gen.normal(size=(m, n)) * 10.0 ** gen.uniform(-3, 3)
        if i % 3 == 0 and min(m, n) > 1:  # exactly rank deficient
            r = int(gen.integers(1, min(m, n)))
            a = gen.normal(size=(m, r)) @ gen.normal(size=(r, n))
        res = svd(a)
        svd_err = max(svd_err, np.linalg.norm(res.reconstruct() - a) / np.linalg.norm(a))
        x = pinv(a)
        ax, xa = a @ x, x @ a
        penrose_err = max(penrose_err,
                          np.abs(a @ x @ a - a).max() / np.abs(a).max(),
                          np.abs(x @ a @ x - x).max() / np.abs(x).max(),
                          np.abs(ax.T - ax).max(), np.abs(xa.T - xa).max())
    mu1, ls1 = np.array([0.3, -1.0, 0.0]), np.array([-0.2, 0.4, 0.1])
    mu2, ls2 = np.array([1.0, 0.5, -0.4]), np.array([0.1, -0.3, 0.5])
    x = mu1 + np.exp(ls1) * np.random.default_rng(10).standard_normal((10**6, 3))

    def logp(x, mu, ls):
        return np.sum(-0.5 * ((x - mu) / np.exp(ls)) ** 2 - ls, axis=1)

    diff = logp(x, mu1, ls1) - logp(x, mu2, ls2)
    se = diff.std(ddof=1) / np.sqrt(len(diff))
    kl_z = abs(diff.mean() - float(gaussian_kl_np(mu1, ls1, mu2, ls2))) / se
    claims = [Claim("max assembled-loss grad_check error", grad_err, 1e-4, "<"),
              Claim("max relative SVD reconstruction error", svd_err, 1e-6, "<"),
              Claim("max Penrose identity residual", penrose_err, 1e-8, "<"),
              Claim("|closed-form KL - MC| in standard errors", kl_z, 3.0, "<=")]
    assert report(9, claims)


# -- criterion 10: reproducibility --------------------------------------------------

REPRO_CONFIGS = {
    "collapse": """
[experiment]
kind = linear-collapse
seeds = 0-2
[params]
steps = 100
drift_lrs = 0.01,0.001
""",
    "oracle": """
[experiment]
kind = oracle-suite
seeds = 3
[params]
suites = implications,zp-gap
n_pomdps = 10
""",
    "train": """
[experiment]
kind = train
seeds = 0-1
[params]
env = keydoor
variants = model-free,zp-l2
budget = 600
warmup_steps = 100
eval_every = 300
eval_episodes = 3
""",
    "rank": """
[experiment]
kind = rank-report
seeds = 0
[params]
env = pointmass
distractors = 4
budget = 400
warmup_steps = 100
eval_every = 200
eval_episodes = 2
""",
}


def test_criterion_10_byte_identical_csvs(tmp_path, report):
    mismatched, compared = [], 0
    for name, text in REPRO_CONFIGS.items():
        cfg = loads_config(text)
        written = []
        for rep in ("first", "second"):
            out = cfg.with_out(str(tmp_path / name / rep))
            paths = [p for p in write_artifacts(out, run_study(out)) if p.endswith(".csv")]
            written.append({os.path.basename(p): open(p, "rb").read() for p in paths})
        assert written[0] and written[0].keys() == written[1].keys()
        compared += len(written[0])
        mismatched += [f"{name}/{f}" for f in written[0] if written[0][f] != written[1][f]]
    claims = [Claim(f"CSV files differing on rerun (of {compared})", len(mismatched), 0, "<=")]
    assert report(10, claims), mismatched
