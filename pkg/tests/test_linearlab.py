import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selfpred.linearlab import (ENVS, LinearDataset, LinearLabConfig, LinearProblem, abs_cosine,
                                collect_dataset, gram_drift, run_collapse, solve_theta, trace_csv,
                                zp_gradient, zp_loss)
from selfpred.numkit.linalg import pinv
from selfpred.numkit.rng import Rng


@pytest.fixture(scope="module")
def datasets():
    return {env: collect_dataset(LinearLabConfig(env=env), Rng(0, 0)) for env in ENVS}


def synthetic(gen, n=40, k=6, d=2, n_actions=3, noise=0.0):
    """Dataset whose target latents are exactly linear in (phi^T s, a) plus optional noise."""
    S = gen.normal(size=(n, k))
    A = np.eye(n_actions)[gen.integers(0, n_actions, n)]
    phi = gen.normal(size=(k, d))
    M, N = gen.normal(size=(d, d)), gen.normal(size=(n_actions, d))
    Z_next = S @ phi @ M + A @ N + noise * gen.normal(size=(n, d))
    S_next = Z_next @ pinv(phi)  # full column rank, so S_next @ phi == Z_next
    return LinearDataset(S, A, S_next), phi, M, N


def regressor_grad(data, phi, target_phi, tz, ta):
    X = np.hstack([data.S @ phi, data.A])
    R = X @ np.vstack([tz, ta]) - data.S_next @ target_phi
    return 2.0 / len(data) * X.T @ R


# -- datasets -----------------------------------------------------------------------

def test_feature_dims(datasets):
    assert datasets["load-unload"].feature_dim == 98
    assert datasets["mountain-car"].feature_dim == 100
    assert datasets["load-unload"].A.shape[1] == 2
    assert datasets["mountain-car"].A.shape[1] == 3


def test_dataset_size_capped(datasets):
    for data in datasets.values():
        assert 0 < len(data) <= 10 * 200
        assert data.S.shape == data.S_next.shape
        assert np.all(data.A.sum(axis=1) == 1)


def test_dataset_reproducible():
    a = collect_dataset(LinearLabConfig(env="mountain-car"), 7)
    b = collect_dataset(LinearLabConfig(env="mountain-car"), Rng(7))
    assert np.array_equal(a.S, b.S) and np.array_equal(a.A, b.A)


def test_load_unload_next_window_shifts():
    # S' of one row is S of the next row within a trajectory
    data = collect_dataset(LinearLabConfig(env="load-unload", n_trajectories=1), Rng(0))
    assert np.array_equal(data.S_next[:-1], data.S[1:])


# -- least squares ------------------------------------------------------------------

def test_solve_theta_realizable():
    gen = np.random.default_rng(0)
    data, phi, M, N = synthetic(gen)
    sol = solve_theta(data, phi, phi)
    assert not sol.rank_deficient
    assert zp_loss(data, phi, phi, *sol) < 1e-10
    assert np.allclose(sol.theta_z, M, atol=1e-8) and np.allclose(sol.theta_a, N, atol=1e-8)


@given(st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_theta_stationary(seed):
    gen = np.random.default_rng(seed)
    data, phi, _, _ = synthetic(gen, noise=0.5)
    target = phi + 0.1 * gen.normal(size=phi.shape)
    tz, ta = solve_theta(data, phi, target)
    assert np.linalg.norm(regressor_grad(data, phi, target, tz, ta)) < 1e-8


def test_theta_row_permutation_invariant():
    gen = np.random.default_rng(1)
    data, phi, _, _ = synthetic(gen, noise=0.3)
    perm = gen.permutation(len(data))
    shuffled = LinearDataset(data.S[perm], data.A[perm], data.S_next[perm])
    a, b = solve_theta(data, phi, phi), solve_theta(shuffled, phi, phi)
    assert np.allclose(a.theta_z, b.theta_z, atol=1e-10)
    assert np.allclose(a.theta_a, b.theta_a, atol=1e-10)


def test_degenerate_regressor_flagged_and_min_norm():
    gen = np.random.default_rng(2)
    data, phi, _, _ = synthetic(gen, noise=0.3)
    twin = np.hstack([phi[:, :1], phi[:, :1]])
    sol = solve_theta(data, twin, twin)
    assert sol.rank_deficient and sol.rank == sol.n_columns - 1
    # the minimum-norm answer splits weight evenly across identical columns
    assert np.allclose(sol.theta_z[0], sol.theta_z[1], atol=1e-10)


def test_empty_dataset_rejected():
    empty = LinearDataset(np.zeros((0, 3)), np.zeros((0, 2)), np.zeros((0, 3)))
    with pytest.raises(ValueError, match="empty"):
        solve_theta(empty, np.eye(3, 2), np.eye(3, 2))


@given(st.integers(0, 10**6), st.booleans())
@settings(max_examples=25, deadline=None)
def test_reduced_problem_matches_direct(seed, online):
    gen = np.random.default_rng(seed)
    data, _, _, _ = synthetic(gen, n=30, k=5, noise=1.0)
    phi, target = gen.normal(size=(5, 2)), gen.normal(size=(5, 2))
    prob = LinearProblem(data)
    direct, reduced = solve_theta(data, phi, target), prob.solve(phi, target)
    assert np.allclose(direct.theta_z, reduced.theta_z, atol=1e-8)
    assert np.allclose(direct.theta_a, reduced.theta_a, atol=1e-8)
    tz, ta = direct
    assert prob.loss(phi, target, tz, ta) == pytest.approx(zp_loss(data, phi, target, tz, ta),
                                                            rel=1e-8, abs=1e-10)
    assert np.allclose(prob.gradient(phi, target, tz, ta, online),
                       zp_gradient(data, phi, target, tz, ta, online), atol=1e-8)


@pytest.mark.parametrize("twin", [False, True])
def test_reduced_problem_with_unused_action(twin):
    # one action column is all zero, and twin columns force the joint fallback
    gen = np.random.default_rng(4)
    data, phi, _, _ = synthetic(gen, n=30, k=5, n_actions=3, noise=1.0)
    A = data.A.copy()
    A[:, 1] = 0.0
    data = LinearDataset(data.S, A, data.S_next)
    if twin:
        phi = np.hstack([phi[:, :1], phi[:, :1]])
    direct, reduced = solve_theta(data, phi, phi), LinearProblem(data).solve(phi, phi)
    assert reduced.rank == direct.rank == (3 if twin else 4)
    assert np.allclose(direct.theta_z, reduced.theta_z, atol=1e-8)
    assert np.allclose(direct.theta_a, reduced.theta_a, atol=1e-8)


@pytest.mark.parametrize("online", [False, True])
def test_zp_gradient_finite_difference(online):
    gen = np.random.default_rng(3)
    data, _, _, _ = synthetic(gen, n=25, k=4, noise=1.0)
    phi, target = gen.normal(size=(4, 2)), gen.normal(size=(4, 2))
    tz, ta = gen.normal(size=(2, 2)), gen.normal(size=(3, 2))

    def loss(p):
        return zp_loss(data, p, p if online else target, tz, ta)

    g = zp_gradient(data, phi, phi if online else target, tz, ta, online)
    eps = 1e-6
    fd = np.zeros_like(phi)
    for idx in np.ndindex(phi.shape):
        step = np.zeros_like(phi)
        step[idx] = eps
        fd[idx] = (loss(phi + step) - loss(phi - step)) / (2 * eps)
    assert np.max(np.abs(fd - g)) < 1e-6


# -- telemetry ----------------------------------------------------------------------

def test_abs_cosine_cases():
    assert abs_cosine(np.eye(3, 2)) == 0.0
    assert abs_cosine(np.array([[1.0, -2.0], [1.0, -2.0]])) == pytest.approx(1.0)
    assert abs_cosine(np.array([[1.0, 0.0], [0.0, 0.0]])) == 1.0
    assert abs_cosine(np.ones((4, 1))) == 0.0


@given(st.integers(0, 10**6), st.integers(2, 5))
@settings(max_examples=50, deadline=None)
def test_telemetry_ranges(seed, d):
    gen = np.random.default_rng(seed)
    phi = gen.normal(size=(6, d))
    c = abs_cosine(phi)
    assert 0.0 <= c <= 1.0
    assert abs_cosine(phi * np.abs(gen.normal(size=d))) == pytest.approx(c, abs=1e-12)
    g0 = phi.T @ phi
    assert gram_drift(phi, g0) == 0.0
    assert gram_drift(gen.normal(size=(6, d)), g0) >= 0.0


# -- collapse runs ------------------------------------------------------------------

def test_config_invariants():
    with pytest.raises(ValueError):
        LinearLabConfig(env="cartpole")
    with pytest.raises(ValueError):
        LinearLabConfig(target="frozen")
    with pytest.raises(ValueError):
        LinearLabConfig(steps=0)
    with pytest.raises(ValueError):
        LinearLabConfig(lr=-0.1)


def test_latent_dim_exceeds_features():
    data, _, _, _ = synthetic(np.random.default_rng(0), k=3)
    with pytest.raises(ValueError, match="latent_dim"):
        run_collapse(LinearLabConfig(latent_dim=4, steps=1), 0, data=data)


def test_zero_lr_means_zero_drift():
    trace = run_collapse(LinearLabConfig(lr=0.0, steps=30, target="online"), 0)
    assert all(d == 0.0 for d in trace.gram_drift)
    assert all(d == 0.0 for d in trace.step_drift)


def test_stride_and_initial_orthogonality():
    trace = run_collapse(LinearLabConfig(steps=45, stride=10), 1)
    assert trace.steps == [0, 10, 20, 30, 40]
    assert trace.abs_cos[0] < 1e-12  # orthogonal initialisation
    assert trace.gram_drift[0] == 0.0
    assert len(trace.step_drift) == 45


def test_trace_deterministic():
    cfg = LinearLabConfig(env="mountain-car", steps=40, target="ema")
    assert trace_csv(run_collapse(cfg, 5)) == trace_csv(run_collapse(cfg, 5))
    assert trace_csv(run_collapse(cfg, 5)) != trace_csv(run_collapse(cfg, 6))


def test_divergence_aborts():
    trace = run_collapse(LinearLabConfig(lr=1e4, steps=500, target="online"), 0)
    assert trace.diverged
    assert trace.steps[-1] < 500


def test_ema_target_starts_at_phi():
    # with mix 0 the EMA target never moves, but step 0 matches the detached run exactly
    cfg = LinearLabConfig(steps=1, stride=1)
    ema = run_collapse(cfg.replace(target="ema", mix=0.0), 2)
    det = run_collapse(cfg.replace(target="detached"), 2)
    assert ema.zp_loss[0] == det.zp_loss[0]


@pytest.mark.parametrize("env", ENVS)
def test_stop_gradient_step_drift_is_second_order(env, datasets):
    # ||G(t+1) - G(t)|| / lr^2 stays flat under detached targets but grows like 1/lr online
    cfg = LinearLabConfig(env=env, steps=100)
    prob = LinearProblem(datasets[env])

    def constant(lr, mode):
        tr = run_collapse(cfg.replace(lr=lr, target=mode), 0, problem=prob)
        return max(tr.step_drift) / lr**2

    det_big, det_small = constant(0.01, "detached"), constant(0.001, "detached")
    on_big, on_small = constant(0.01, "online"), constant(0.001, "online")
    assert det_small <= 1.1 * det_big
    assert on_small >= 5.0 * on_big


def test_drift_shrinks_with_lr(datasets):
    prob = LinearProblem(datasets["load-unload"])
    cfg = LinearLabConfig(env="load-unload", target="detached")
    drifts = [run_collapse(cfg.replace(lr=lr), 0, problem=prob).final_drift
              for lr in (0.01, 0.003, 0.001)]
    assert drifts[0] > drifts[1] > drifts[2]
    assert drifts[2] < 0.05

