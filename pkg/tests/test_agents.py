import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selfpred.agents import (VARIANTS, AgentConfig, ReplayBuffer, RunRecord, Schedule,
                             build_agent, double_q_target, exploration_action, greedy_action,
                             latent_rank, parse_schedule, rl_loss_minimalist, td_loss_discrete,
                             train)
from selfpred.agents.core import _assemble, _aux_loss, _batch
from selfpred.envs import FinitePOMDP, POMDPEnv, PointMass
from selfpred.numkit import autodiff as ad
from selfpred.numkit.rng import Rng
from selfpred.objectives import ema_update, param_distance, rp_loss

H_DIM, OBS_DIM, A_DIM = 5, 3, 2


def small_config(variant, **kw):
    base = dict(variant=variant, latent_dim=2, hidden=4, batch_size=8, target_mode="ema")
    base.update(kw)
    return AgentConfig(**base)


def filled_replay(gen, discrete, n=40, capacity=64):
    buf = ReplayBuffer(capacity, H_DIM, A_DIM, OBS_DIM)
    for t in range(n):
        a = np.eye(A_DIM)[gen.integers(A_DIM)] if discrete else gen.uniform(-1, 1, A_DIM)
        end = t % 7 == 6
        buf.add(gen.normal(size=H_DIM), a, gen.normal(), gen.normal(size=H_DIM),
                gen.normal(size=OBS_DIM), done=end and t % 2 == 0, end=end)
    return buf


def agent_and_sample(variant, discrete, seed=0, **kw):
    gen = np.random.default_rng(seed)
    state = build_agent(small_config(variant, **kw), H_DIM, OBS_DIM, A_DIM, discrete, gen)
    sample = filled_replay(gen, discrete).sample(8, gen, n_step=3 if discrete else 1, gamma=0.9)
    return state, sample


def assembled(state, sample, drop_frozen=False):
    """The joint loss as the update rules build it; ``drop_frozen`` removes the
    semi-gradient term so finite differences apply to every parameter."""
    aux_rng = lambda: np.random.default_rng(99)  # noqa: E731 - same noise on every rebuild
    batch = _batch(sample)
    if state.discrete:
        def loss():
            return _assemble(state, td_loss_discrete(state, sample), "rl", batch, aux_rng()).graph
        return loss

    def loss():
        td, actor = rl_loss_minimalist(state, sample)
        extra = None if drop_frozen else {"actor": actor}
        return _assemble(state, td, "rl", batch, aux_rng(), extra).graph
    return loss


def grads(loss_fn, params):
    ad.zero_grad(params)
    ad.backward(loss_fn())
    out = [np.zeros_like(p.value) if p.grad is None else p.grad.copy() for p in params]
    ad.zero_grad(params)
    return out


# -- schedules ------------------------------------------------------------------------

@pytest.mark.parametrize("text,start,end,steps", [
    ("linear(1.0,0.1,100000)", 1.0, 0.1, 100000),
    ("exponential(1.0,0.05,400000)", 1.0, 0.05, 400000),
])
def test_schedule_anchors(text, start, end, steps):
    s = parse_schedule(text)
    assert s(0) == start
    assert s(steps) == end and s(10 * steps) == end
    assert end < s(steps // 2) < start
    assert parse_schedule(str(s)) == s


def test_exponential_midpoint_is_geometric_mean():
    s = parse_schedule("exponential(1.0,0.04,100)")
    assert s(50) == pytest.approx(0.2)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_schedules_are_monotone(a, b):
    for s in (Schedule("linear", 1.0, 0.1, 5000), Schedule("exponential", 1.0, 0.05, 5000)):
        lo, hi = sorted((a, b))
        assert s(hi) <= s(lo)


def test_schedule_parse_errors():
    for bad in ("cosine(1,0,10)", "linear(1.0,0.1)", "constant(1,2)", "exponential(0,1,10)"):
        with pytest.raises(ValueError):
            parse_schedule(bad)


# -- configuration --------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError, match="unknown variant"):
        AgentConfig(variant="dreamer")
    with pytest.raises(ValueError, match="model-free"):
        AgentConfig(variant="model-free", aux_coef=1.0)
    with pytest.raises(ValueError, match="model-free"):
        AgentConfig(variant="zp-l2", aux_coef=0.0)
    with pytest.raises(ValueError):
        AgentConfig(aux_coef=-1.0)


def test_default_coefficients():
    assert AgentConfig(variant="zp-l2").coefficient(32) == 10.0
    assert AgentConfig(variant="zp-fkl").coefficient(32) == 1.0
    assert AgentConfig(variant="op").coefficient(17) == 1.0
    assert AgentConfig(variant="zp-l2").coefficient(32, discrete=True) == pytest.approx(1 / 32)
    assert AgentConfig(variant="op").coefficient(20, discrete=True) == pytest.approx(0.01 / 20)
    assert AgentConfig(variant="phased-rp-op").coefficient(20, discrete=True) == \
        pytest.approx(1 / 20)
    assert AgentConfig(variant="model-free").coefficient(5) == 0.0
    assert AgentConfig(variant="op", aux_coef=2.0, normalize_aux=True).coefficient(4) == 0.5


def test_config_hash_tracks_fields():
    a = AgentConfig()
    assert a.content_hash() == AgentConfig().content_hash()
    assert a.content_hash() != a.replace(lr=2e-3).content_hash()


# -- losses and gradients --------------------------------------------------------------

@pytest.mark.parametrize("discrete", [False, True])
def test_model_free_total_is_rl_loss(discrete):
    state, sample = agent_and_sample("model-free", discrete)
    out = _assemble(state, td_loss_discrete(state, sample) if discrete
                    else rl_loss_minimalist(state, sample)[0], "rl", _batch(sample), None)
    assert set(out.components) == {"rl"}
    assert out.total == out.components["rl"]


@pytest.mark.parametrize("variant", [v for v in VARIANTS if v != "model-free"])
@pytest.mark.parametrize("discrete", [False, True])
def test_total_is_rl_plus_weighted_aux(variant, discrete):
    state, sample = agent_and_sample(variant, discrete)
    g = assembled(state, sample)()
    if discrete:
        rl = td_loss_discrete(state, sample).item()
    else:
        td, actor = rl_loss_minimalist(state, sample)
        rl = td.item() + actor.item()
    batch = _batch(sample)
    aux = _aux_loss(state, batch, np.random.default_rng(99)).total
    lam = state.config.coefficient(state.aux_out_dim, discrete)
    rp = 0.0
    if state.reward_head is not None:
        rp = rp_loss(state.encoder, state.reward_head, batch).total
    assert g.item() == pytest.approx(rl + lam * aux + rp, abs=1e-12)


@pytest.mark.parametrize("variant", VARIANTS)
def test_assembled_discrete_loss_grad_check(variant):
    state, sample = agent_and_sample(variant, True, target_mode="online")
    loss = assembled(state, sample)
    params = state.trainable()
    if not state.config.phased:
        assert ad.grad_check(loss, params) < 1e-4
        return
    # phased: the TD term sees a detached latent, so the encoder gradient is that of RP + aux
    enc = state.encoder.parameters()
    rest = [p for p in params if all(p is not q for q in enc)]
    assert ad.grad_check(loss, rest) < 1e-4
    batch = _batch(sample)

    def no_td():
        return _assemble(state, ad.Tensor(0.0), "rl", batch, np.random.default_rng(99)).graph

    for a, b in zip(grads(loss, enc), grads(no_td, enc)):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-14)
    assert ad.grad_check(no_td, enc) < 1e-4


@pytest.mark.parametrize("variant", VARIANTS)
def test_assembled_continuous_loss_grad_check(variant):
    state, sample = agent_and_sample(variant, False, target_mode="online")
    full, reduced = assembled(state, sample), assembled(state, sample, drop_frozen=True)
    actor = state.heads["actor"].parameters()
    others = [p for p in state.trainable() if all(p is not q for q in actor)]
    # the actor appears only in the actor term, where the loss is a true function of it
    assert ad.grad_check(full, actor) < 1e-4
    # the actor term treats critic and encoder as constants, so their gradients are those
    # of the loss without it, which finite differences can check
    for a, b in zip(grads(full, others), grads(reduced, others)):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-14)
    if state.config.phased:
        enc = state.encoder.parameters()
        rest = [p for p in others if all(p is not q for q in enc)]
        assert ad.grad_check(reduced, rest) < 1e-4
    else:
        assert ad.grad_check(reduced, others) < 1e-4


def test_actor_loss_leaves_critic_and_encoder_untouched():
    state, sample = agent_and_sample("zp-l2", False)
    _, actor_loss = rl_loss_minimalist(state, sample)
    ad.backward(actor_loss)
    for p in state.heads["critic"].parameters() + state.encoder.parameters() + \
            state.encoder_target.parameters():
        assert p.grad is None or not np.any(p.grad)
    assert any(p.grad is not None and np.any(p.grad) for p in state.heads["actor"].parameters())


@pytest.mark.parametrize("discrete", [False, True])
def test_phased_rl_gradient_skips_encoder(discrete):
    state, sample = agent_and_sample("phased-rp-zp", discrete)
    td = td_loss_discrete(state, sample) if discrete else rl_loss_minimalist(state, sample)[0]
    ad.backward(td)
    assert all(p.grad is None or not np.any(p.grad) for p in state.encoder.parameters())


def test_one_step_double_q_target():
    state, _ = agent_and_sample("model-free", True)
    gen = np.random.default_rng(1)
    one = filled_replay(gen, True).sample(8, gen, n_step=1, gamma=0.9)
    state.config = state.config.replace(gamma=0.9)
    q_on = state.heads["q"](state.encoder(one.h_next)[0]).value
    q_tg = state.heads_target["q"](state.encoder_target(one.h_next)[0]).value
    best = np.argmax(q_on, axis=1)
    expect = one.r + 0.9 * (1.0 - one.done) * q_tg[np.arange(8), best]
    assert np.allclose(double_q_target(state, one), expect, atol=1e-14)


def test_greedy_and_zero_epsilon_actions_are_argmax():
    state, _ = agent_and_sample("model-free", True, exploration="constant(0.0)")
    gen = np.random.default_rng(3)
    for _ in range(10):
        h = gen.normal(size=H_DIM)
        q = state.heads["q"](state.encoder(h[None])[0]).value[0]
        assert greedy_action(state, h) == int(np.argmax(q))
        assert exploration_action(state, h, gen, 10**6) == int(np.argmax(q))


def test_continuous_exploration_noise_is_clipped():
    state, _ = agent_and_sample("model-free", False, exploration="constant(10.0)")
    gen = np.random.default_rng(4)
    h = gen.normal(size=H_DIM)
    base = greedy_action(state, h)
    for _ in range(20):
        a = exploration_action(state, h, gen, 0)
        assert np.all(np.abs(a - base) <= 0.3 + 1e-12) and np.all(np.abs(a) <= 1.0)


def test_targets_approach_frozen_online_nets():
    state, _ = agent_and_sample("zp-l2", False)
    for p in state.encoder_target.parameters():
        p.value += 0.5
    last = param_distance(state.encoder_target, state.encoder)
    for _ in range(5):
        ema_update(state.encoder_target, state.encoder, 0.1)
        d = param_distance(state.encoder_target, state.encoder)
        assert d <= last
        last = d


def test_latent_rank_of_collapsed_encoder():
    state, _ = agent_and_sample("model-free", True)
    last = state.encoder.trunk.layers[-1]
    last.weight.value[...] = 0.0
    last.bias.value[...] = 1.0
    assert latent_rank(state, np.random.default_rng(0).normal(size=(20, H_DIM))) == 1


# -- replay ----------------------------------------------------------------------------

def test_replay_never_samples_unwritten_slots():
    gen = np.random.default_rng(5)
    buf = filled_replay(gen, True, n=10, capacity=100)
    s = buf.sample(500, gen)
    assert s.indices.max() < 10
    with pytest.raises(IndexError):
        buf.gather(np.array([10]))
    with pytest.raises(ValueError):
        ReplayBuffer(10, 1, 1, 1).sample(1, gen)


def test_replay_sampling_is_deterministic():
    a = filled_replay(np.random.default_rng(6), True).sample(16, np.random.default_rng(7))
    b = filled_replay(np.random.default_rng(6), True).sample(16, np.random.default_rng(7))
    assert np.array_equal(a.indices, b.indices) and np.array_equal(a.h, b.h)


def test_n_step_return_stops_at_episode_end():
    buf = ReplayBuffer(10, 1, 1, 1)
    rewards = [1.0, 2.0, 4.0, 8.0]
    for t, r in enumerate(rewards):
        end = t == 2
        buf.add([t], [1], r, [t + 1], [0], done=end, end=end)
    s = buf.gather(np.array([0, 1, 3]), n_step=3, gamma=0.5)
    assert s.n_return.tolist() == [1 + 0.5 * 2 + 0.25 * 4, 2 + 0.5 * 4, 8.0]
    assert s.discount.tolist() == [0.125, 0.25, 0.5]
    assert s.done_boot.tolist() == [True, True, False]
    assert s.h_boot[:, 0].tolist() == [3.0, 3.0, 4.0]


def test_replay_ring_overwrites_oldest():
    buf = ReplayBuffer(3, 1, 1, 1)
    for t in range(5):
        buf.add([t], [1], float(t), [t], [0], done=False, end=False)
    assert len(buf) == 3 and sorted(buf.r.tolist()) == [2.0, 3.0, 4.0]
    # the newest slot never bootstraps past the write head
    s = buf.gather(np.array([(buf.pos - 1) % 3]), n_step=3, gamma=1.0)
    assert s.n_return.tolist() == [4.0]


# -- training loop --------------------------------------------------------------------

def chain_mdp(n=10, gamma=0.9):
    trans = np.zeros((n, 2, n))
    for s in range(n):
        trans[s, 0, max(s - 1, 0)] = 1.0
        trans[s, 1, min(s + 1, n - 1)] = 1.0
    reward = np.zeros((n, 2))
    reward[n - 2, 1] = 1.0
    terminal = np.zeros(n, dtype=bool)
    terminal[-1] = True
    initial = np.r_[np.full(n - 1, 1.0 / (n - 1)), 0.0]
    return FinitePOMDP(trans, np.eye(n), reward, initial, gamma, 50, terminal=terminal)


def discounted_q_star(p, sweeps=500):
    q = np.zeros(p.reward_mean.shape)
    for _ in range(sweeps):
        v = q.max(axis=1)
        v[p.terminal] = 0.0
        q = p.reward_mean + p.gamma * p.transition @ v
    return q


def test_tabular_q_converges_to_value_iteration():
    p = chain_mdp()
    cfg = AgentConfig(variant="model-free", gamma=0.9, exploration="constant(1.0)", latent_dim=8,
                      hidden=32, warmup_steps=500, target_mix=0.05, lr=3e-3, eval_every=4000,
                      eval_episodes=1)
    rec = train(cfg, POMDPEnv(p, Rng(0, 1)), 4000, Rng(0))
    z, _ = rec.state.encoder(np.eye(10))
    q = rec.state.heads["q"](z).value
    assert np.max(np.abs(q - discounted_q_star(p))[:-1]) < 0.05


def test_zero_budget_gives_empty_record():
    rec = train(AgentConfig(), PointMass(Rng(0)), 0, Rng(0))
    assert rec.rows == [] and rec.env_steps == 0


def test_training_is_reproducible():
    cfg = AgentConfig(variant="zp-l2", latent_dim=4, hidden=8, batch_size=16, warmup_steps=50,
                      eval_every=100, eval_episodes=2)
    a = train(cfg, PointMass(Rng(3, 1)), 200, Rng(3))
    b = train(cfg, PointMass(Rng(3, 1)), 200, Rng(3))
    assert a.to_csv() == b.to_csv()
    assert [r[0] for r in a.rows] == [100, 200]
    assert a.updates == 150


class NanReward(PointMass):
    def step(self, action):
        obs, r, done = super().step(action)
        return obs, float("nan") if self.t % 3 == 0 else r, done


def test_non_finite_losses_are_skipped_and_logged():
    cfg = AgentConfig(variant="model-free", latent_dim=2, hidden=4, batch_size=32,
                      warmup_steps=20, eval_every=60, eval_episodes=1)
    rec = train(cfg, NanReward(Rng(0)), 60, Rng(0))
    assert rec.incidents and all(step > 20 for step, _ in rec.incidents)
    assert all(all(np.isfinite(p.value).all() for p in m.parameters())
               for m in [rec.state.encoder, *rec.state.heads.values()])


def test_run_record_csv():
    rec = RunRecord("op", 1)
    rec.log(step=10, eval_return=1.5, success_rate=0.0, rl_loss=float("nan"), aux_loss=0.25,
            est_rank=3, epsilon_or_std=0.5)
    text = rec.to_csv("config abc")
    assert text.splitlines()[0] == "# config abc"
    assert text.splitlines()[2] == "10,1.5,0.0,nan,0.25,3,0.5"
    assert rec.final("est_rank") == 3
    with pytest.raises(ValueError, match="missing"):
        rec.log(step=1)
