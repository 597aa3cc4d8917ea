import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selfpred.envs import FinitePOMDP, random_finite_pomdp
from selfpred.harness.studies import stationarity_pomdp
from selfpred.numkit import autodiff as ad
from selfpred.numkit.nn import Adam, AdamConfig
from selfpred.objectives import (Batch, Encoder, EncoderSpec, LatentModel, NodeEmbedding,
                                 NotTabularError, RewardHead, TargetMode, clone_module, combine,
                                 ema_update, ezp_stationarity, gaussian_kl, gaussian_kl_np,
                                 ideal_zp_loss, op_loss, param_distance, rp_loss, zp_loss_kl,
                                 zp_loss_l2)
from selfpred.oracle import enumerate_histories

seeds = st.integers(0, 2**32 - 1)


def make_batch(gen, n=6, h_dim=3, a_dim=2, o_dim=3):
    return Batch(h=gen.normal(size=(n, h_dim)), a=np.eye(a_dim)[gen.integers(0, a_dim, n)],
                 h_next=gen.normal(size=(n, h_dim)), r=gen.normal(size=n),
                 o_next=gen.normal(size=(n, o_dim)), done=np.zeros(n))


def nets(gen, head="deterministic", h_dim=3, d=2, a_dim=2, hidden=5):
    enc = Encoder(EncoderSpec(h_dim, d, "mlp", head, hidden=hidden), gen)
    model = LatentModel(d, a_dim, gen, head=head, hidden=hidden)
    target = clone_module(enc, lambda: Encoder(EncoderSpec(h_dim, d, "mlp", head, hidden=hidden),
                                               gen))
    return enc, model, target


def fork_tree(next_means=(0.0, 2.0)):
    """One action; the root moves to one of two observable states with probability 1/2."""
    trans = np.zeros((3, 1, 3))
    trans[0, 0, 1:] = 0.5
    trans[1, 0, 1] = trans[2, 0, 2] = 1.0
    p = FinitePOMDP(trans, np.eye(3), np.zeros((3, 1)), [1.0, 0.0, 0.0], 0.9, 2)
    tree = enumerate_histories(p)
    depth1 = np.array([[next_means[int(o) - 1]] for o in tree.layers[1].obs])
    return p, tree, NodeEmbedding((np.zeros((1, 1)), depth1))


def random_embedding(tree, gen, d=2, stochastic=False):
    means = tuple(gen.normal(size=(layer.size, d)) for layer in tree.layers)
    log_stds = tuple(gen.uniform(-0.5, 0.3, (layer.size, d)) for layer in tree.layers)
    return NodeEmbedding(means, log_stds if stochastic else None)


def linear_model(gen, d, n_actions, stochastic=False):
    w, b = gen.normal(size=(d + n_actions, d)), gen.normal(size=d)
    ls = gen.uniform(-0.3, 0.3, d)

    def model(z, a):
        mu = np.concatenate([z, a], axis=1) @ w + b
        return (mu, np.broadcast_to(ls, mu.shape)) if stochastic else mu

    return model


# -- ZP l2 --------------------------------------------------------------------------------

def test_exact_prediction_gives_zero_l2_loss():
    gen = np.random.default_rng(0)
    enc = Encoder(EncoderSpec(2, 2, "linear"), gen)
    model = LatentModel(2, 1, gen, architecture="linear")
    model.trunk.layers[0].weight.value[...] = np.vstack([np.eye(2), np.zeros((1, 2))])
    model.trunk.layers[0].bias.value[...] = 0.0
    h = gen.normal(size=(5, 2))
    batch = Batch(h, np.ones((5, 1)), h.copy())  # the environment keeps h unchanged
    assert zp_loss_l2(enc, model, None, batch, TargetMode("online")).total == pytest.approx(0.0)


def test_two_equiprobable_next_latents():
    p, tree, emb = fork_tree()
    res = ideal_zp_loss(p, tree, emb, lambda z, a: np.ones((len(z), 1)))
    assert res.practical == pytest.approx(1.0)
    assert res.ideal == pytest.approx(0.0)
    assert res.gap == pytest.approx(1.0) and res.variance == pytest.approx(1.0)


def test_l2_rejects_gaussian_heads():
    gen = np.random.default_rng(1)
    enc, model, target = nets(gen, "gaussian")
    with pytest.raises(TypeError, match="zp_loss_kl"):
        zp_loss_l2(enc, model, target, make_batch(gen))


@pytest.mark.parametrize("mode", ["online", "detached", "ema"])
def test_l2_grad_check(mode):
    gen = np.random.default_rng(2)
    enc, model, target = nets(gen)
    batch = make_batch(gen)
    # a detached target has the encoder's current values; finite differences must not perturb
    # it, so the check uses a snapshot copy
    tgt = clone_module(enc, lambda: nets(gen)[0]) if mode == "detached" else target
    params = enc.parameters() + model.parameters()
    err = ad.grad_check(lambda: zp_loss_l2(enc, model, tgt, batch, TargetMode(mode)).graph, params)
    assert err < 1e-4


def test_target_encoder_receives_no_gradient():
    gen = np.random.default_rng(3)
    enc, model, target = nets(gen)
    batch = make_batch(gen)
    loss = zp_loss_l2(enc, model, target, batch, TargetMode("ema"))
    loss.backward()
    assert all(p.grad is None or not np.any(p.grad) for p in target.parameters())


def test_online_target_changes_encoder_gradient():
    gen = np.random.default_rng(4)
    enc, model, target = nets(gen)
    batch = make_batch(gen)

    def enc_grad(mode, tgt):
        ad.zero_grad(enc.parameters() + model.parameters())
        zp_loss_l2(enc, model, tgt, batch, TargetMode(mode)).backward()
        return np.concatenate([p.grad.ravel() for p in enc.parameters()])

    # the detached target is the current encoder, so only the gradient path differs
    assert not np.allclose(enc_grad("online", None), enc_grad("detached", enc))


def test_missing_target_encoder():
    gen = np.random.default_rng(5)
    enc, model, _ = nets(gen)
    with pytest.raises(ValueError, match="target encoder"):
        zp_loss_l2(enc, model, None, make_batch(gen), TargetMode("ema"))


# -- Gaussian KL --------------------------------------------------------------------------

def test_kl_closed_form_cases():
    z = np.zeros((1, 1))
    assert gaussian_kl_np(z, z, z, z)[0] == 0.0
    assert gaussian_kl_np(z + 1.0, z, z, z)[0] == pytest.approx(0.5)
    t = ad.Tensor
    assert gaussian_kl(t(z + 1.0), t(z), t(z), t(z)).value[0] == pytest.approx(0.5)


def test_kl_matches_monte_carlo():
    mu1, ls1 = np.array([0.3, -1.0]), np.array([-0.2, 0.4])
    mu2, ls2 = np.array([1.0, 0.5]), np.array([0.1, -0.3])
    gen = np.random.default_rng(6)
    x = mu1 + np.exp(ls1) * gen.standard_normal((10**6, 2))

    def logp(x, mu, ls):
        return np.sum(-0.5 * ((x - mu) / np.exp(ls)) ** 2 - ls, axis=1)

    diff = logp(x, mu1, ls1) - logp(x, mu2, ls2)
    se = diff.std(ddof=1) / np.sqrt(len(diff))
    exact = gaussian_kl_np(mu1, ls1, mu2, ls2)
    assert abs(diff.mean() - exact) < 3 * se


@pytest.mark.parametrize("direction", ["fkl", "rkl"])
@pytest.mark.parametrize("mode", ["online", "ema"])
def test_kl_loss_grad_check(direction, mode):
    gen = np.random.default_rng(7)
    enc, model, target = nets(gen, "gaussian")
    batch = make_batch(gen)
    noise = gen.standard_normal((len(batch), 2))
    params = enc.parameters() + model.parameters()

    def loss():
        return zp_loss_kl(enc, model, target, batch, direction, TargetMode(mode), noise=noise).graph

    assert ad.grad_check(loss, params) < 1e-4


def test_kl_loss_identical_distributions_is_zero():
    gen = np.random.default_rng(8)
    enc = Encoder(EncoderSpec(2, 1, "linear", "gaussian"), gen)
    model = LatentModel(1, 1, gen, architecture="linear", head="gaussian")
    # the model ignores its input and emits N(0, 1); the encoder does too
    for layer in (enc.trunk.layers[0], model.trunk.layers[0]):
        layer.weight.value[...] = 0.0
        layer.bias.value[...] = 0.0
    batch = make_batch(gen, h_dim=2, a_dim=1)
    for direction in ("fkl", "rkl"):
        out = zp_loss_kl(enc, model, None, batch, direction, TargetMode("online"), rng=gen)
        assert out.total == pytest.approx(0.0, abs=1e-15)


def test_kl_clamp_is_flagged():
    gen = np.random.default_rng(9)
    enc, model, target = nets(gen, "gaussian")
    enc.trunk.layers[-1].bias.value[0, 2:] = -50.0
    out = zp_loss_kl(enc, model, target, make_batch(gen), rng=gen)
    assert out.flags["clamped_log_std"] >= 12
    assert np.isfinite(out.total)


def test_kl_argument_errors():
    gen = np.random.default_rng(10)
    enc, model, target = nets(gen, "gaussian")
    batch = make_batch(gen)
    with pytest.raises(ValueError, match="direction"):
        zp_loss_kl(enc, model, target, batch, "js", rng=gen)
    with pytest.raises(ValueError, match="rng"):
        zp_loss_kl(enc, model, target, batch)
    det_enc, det_model, det_target = nets(gen)
    with pytest.raises(TypeError):
        zp_loss_kl(det_enc, det_model, det_target, batch, rng=gen)


# -- ideal vs practical ---------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(seeds)
def test_deterministic_pomdp_ideal_equals_practical(seed):
    gen = np.random.default_rng(seed)
    p = random_finite_pomdp(gen, deterministic=True, horizon=3)
    tree = enumerate_histories(p)
    l2 = ideal_zp_loss(p, tree, random_embedding(tree, gen), linear_model(gen, 2, p.n_actions))
    assert abs(l2.practical - l2.ideal) <= 1e-10
    kl = ideal_zp_loss(p, tree, random_embedding(tree, gen, stochastic=True),
                       linear_model(gen, 2, p.n_actions, stochastic=True), metric="fkl")
    assert abs(kl.practical - kl.ideal) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_stochastic_pomdp_practical_upper_bounds_ideal(seed):
    gen = np.random.default_rng(seed)
    p = random_finite_pomdp(gen, horizon=3)
    tree = enumerate_histories(p)
    l2 = ideal_zp_loss(p, tree, random_embedding(tree, gen), linear_model(gen, 2, p.n_actions))
    assert l2.gap == pytest.approx(l2.variance, abs=1e-8)
    assert l2.gap >= -1e-12
    kl = ideal_zp_loss(p, tree, random_embedding(tree, gen, stochastic=True),
                       linear_model(gen, 2, p.n_actions, stochastic=True), metric="fkl")
    assert kl.practical >= kl.ideal - 1e-8


def test_strict_gap_when_next_latent_varies():
    p, tree, emb = fork_tree()
    res = ideal_zp_loss(p, tree, emb, lambda z, a: np.full((len(z), 1), 0.7))
    assert res.gap > 0.5


def test_constant_encoder_has_zero_ideal_loss():
    p, tree, _ = fork_tree()
    emb = NodeEmbedding(tuple(np.full((layer.size, 1), 3.0) for layer in tree.layers))
    res = ideal_zp_loss(p, tree, emb, lambda z, a: np.full((len(z), 1), 3.0))
    assert res.ideal == 0.0 and res.practical == 0.0


def test_ideal_loss_needs_tabular_input():
    _, tree, emb = fork_tree()
    with pytest.raises(NotTabularError):
        ideal_zp_loss(object(), tree, emb, lambda z, a: z)


# -- stationarity ---------------------------------------------------------------------

def test_stop_gradient_stationary_online_not():
    res = ezp_stationarity(enumerate_histories(stationarity_pomdp()))
    assert res.ezp_violation < 1e-9
    assert res.stop_gradient_norm < 1e-7
    assert res.online_norm > 1e-4


# -- OP and RP ------------------------------------------------------------------------

def test_op_perfect_predictor_is_zero():
    gen = np.random.default_rng(11)
    enc = Encoder(EncoderSpec(2, 2, "linear"), gen)
    enc.trunk.layers[0].weight.value[...] = np.eye(2)
    enc.trunk.layers[0].bias.value[...] = 0.0
    pred = LatentModel(2, 1, gen, architecture="linear", out_dim=2)
    pred.trunk.layers[0].weight.value[...] = np.vstack([np.eye(2), np.zeros((1, 2))])
    pred.trunk.layers[0].bias.value[...] = 0.0
    h = gen.normal(size=(8, 2))
    batch = Batch(h, np.ones((8, 1)), h, o_next=h.copy())
    assert op_loss(enc, pred, batch).total == pytest.approx(0.0, abs=1e-24)


def test_op_dimension_mismatch():
    gen = np.random.default_rng(12)
    enc, _, _ = nets(gen)
    pred = LatentModel(2, 2, gen, out_dim=4)
    with pytest.raises(ValueError, match="4 dims"):
        op_loss(enc, pred, make_batch(gen, o_dim=3))


@pytest.mark.parametrize("metric", ["l2", "fkl"])
def test_op_grad_check(metric):
    gen = np.random.default_rng(13)
    enc, _, _ = nets(gen)
    head = "gaussian" if metric == "fkl" else "deterministic"
    pred = LatentModel(2, 2, gen, head=head, hidden=5, out_dim=3)
    batch = make_batch(gen)
    params = enc.parameters() + pred.parameters()
    assert ad.grad_check(lambda: op_loss(enc, pred, batch, metric).graph, params) < 1e-4


def test_op_distractor_floor():
    # o' = (2h, noise): no predictor can beat the summed distractor variance
    gen = np.random.default_rng(14)
    n, k = 2000, 4
    h = gen.normal(size=(n, 2))
    o_next = np.hstack([2 * h, gen.standard_normal((n, k))])
    batch = Batch(h, np.ones((n, 1)), h, o_next=o_next)
    enc = Encoder(EncoderSpec(2, 2, "linear"), gen)
    pred = LatentModel(2, 1, gen, architecture="linear", out_dim=2 + k)
    opt = Adam(enc.parameters() + pred.parameters(), AdamConfig(lr=0.05))
    for _ in range(600):
        opt.zero_grad()
        loss = op_loss(enc, pred, batch)
        loss.backward()
        opt.step()
    # best linear fit on this sample, from least squares
    x = np.hstack([h, np.ones((n, 1))])
    resid = o_next - x @ np.linalg.lstsq(x, o_next, rcond=None)[0]
    best = np.mean(np.sum(resid ** 2, axis=1))
    final = op_loss(enc, pred, batch).total
    assert final >= best - 1e-9
    assert final == pytest.approx(best, abs=0.01)
    assert best == pytest.approx(k, rel=0.05)


def test_rp_zero_head_on_zero_reward():
    gen = np.random.default_rng(15)
    enc, _, _ = nets(gen)
    head = RewardHead(2, 2, gen, hidden=4)
    for p in head.net.layers[-1].parameters():
        p.value[...] = 0.0
    batch = make_batch(gen)
    batch.r = np.zeros(len(batch))
    assert rp_loss(enc, head, batch).total == 0.0


def test_rp_grad_check():
    gen = np.random.default_rng(16)
    enc, _, _ = nets(gen)
    head = RewardHead(2, 2, gen, hidden=4)
    batch = make_batch(gen)
    params = enc.parameters() + head.parameters()
    assert ad.grad_check(lambda: rp_loss(enc, head, batch).graph, params) < 1e-4


def test_rp_converges_to_tabular_average():
    gen = np.random.default_rng(17)
    n_cls, n_act, n = 3, 2, 600
    cls, act = gen.integers(0, n_cls, n), gen.integers(0, n_act, n)
    means = np.array([[0.5, -1.0], [2.0, 0.0], [-0.3, 1.2]])
    r = means[cls, act] + gen.normal(0, 0.2, n)
    batch = Batch(np.eye(n_cls)[cls], np.eye(n_act)[act], np.eye(n_cls)[cls], r=r)
    enc = Encoder(EncoderSpec(n_cls, n_cls, "linear"), gen)
    head = RewardHead(n_cls, n_act, gen, hidden=16)
    opt = Adam(enc.parameters() + head.parameters(), AdamConfig(lr=0.01))
    for _ in range(3000):
        opt.zero_grad()
        rp_loss(enc, head, batch).backward()
        opt.step()
    z, _ = enc(np.eye(n_cls)[np.repeat(np.arange(n_cls), n_act)])
    pred = head(z, np.eye(n_act)[np.tile(np.arange(n_act), n_cls)]).value.reshape(n_cls, n_act)
    table = np.array([[r[(cls == c) & (act == a)].mean() for a in range(n_act)]
                      for c in range(n_cls)])
    assert np.max(np.abs(pred - table)) < 1e-3


# -- combination and non-negativity ------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_losses_nonnegative_and_total_is_weighted_sum(seed, w_zp, w_op):
    gen = np.random.default_rng(seed)
    enc, model, target = nets(gen)
    pred = LatentModel(2, 2, gen, hidden=5, out_dim=3)
    head = RewardHead(2, 2, gen, hidden=4)
    batch = make_batch(gen)
    parts = {"zp": zp_loss_l2(enc, model, target, batch), "op": op_loss(enc, pred, batch),
             "rp": rp_loss(enc, head, batch)}
    g_enc, g_model, g_target = nets(gen, "gaussian")
    parts_kl = [zp_loss_kl(g_enc, g_model, g_target, batch, d, rng=gen) for d in ("fkl", "rkl")]
    assert all(p.total >= 0 for p in list(parts.values()) + parts_kl)
    out = combine(parts, {"zp": w_zp, "op": w_op, "rp": 1.0})
    assert out.total == pytest.approx(out.weighted_sum(), abs=1e-12)
    assert out.weighted_sum() == pytest.approx(
        w_zp * parts["zp"].total + w_op * parts["op"].total + parts["rp"].total, abs=1e-12)


# -- targets ------------------------------------------------------------------------------

def test_ema_copy_and_fixed_point():
    gen = np.random.default_rng(18)
    a, _, b = nets(gen)
    b.trunk.layers[0].weight.value[...] += 1.0
    same = clone_module(a, lambda: nets(gen)[0])
    ema_update(same, a, 0.005)
    assert param_distance(same, a) == 0.0
    ema_update(b, a, 1.0)
    assert param_distance(b, a) == 0.0


def test_ema_geometric_convergence():
    online = [np.array([1.0, -2.0])]
    target = [np.array([5.0, 3.0])]
    d0 = np.linalg.norm(target[0] - online[0])
    for n in range(1, 201):
        ema_update(target, online, 0.05)
        if n % 50 == 0:
            dist = np.linalg.norm(target[0] - online[0])
            assert dist == pytest.approx(d0 * 0.95 ** n, rel=1e-10)


def test_ema_errors():
    with pytest.raises(ValueError, match="shape"):
        ema_update([np.zeros(2)], [np.zeros(3)], 0.5)
    with pytest.raises(ValueError, match="count"):
        ema_update([np.zeros(2)], [], 0.5)
    with pytest.raises(ValueError, match="mix"):
        ema_update([np.zeros(2)], [np.zeros(2)], 0.0)


def test_target_mode_conventions():
    assert TargetMode("detached", 0.3).effective_mix == 1.0
    assert TargetMode("ema", 0.3).effective_mix == 0.3
    assert TargetMode.from_tau("ema", 0.995).mix == pytest.approx(0.005)
    with pytest.raises(ValueError):
        TargetMode("frozen")
