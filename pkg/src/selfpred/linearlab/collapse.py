"""Linear self-prediction on truncated-history features and its collapse telemetry.

The encoder is a matrix phi (k x d) acting on history features, the latent
model is linear, g(z, a) = theta_z^T z + theta_a^T a, and theta is re-solved
by minimum-norm least squares before every gradient step on phi.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from ..envs.classic import MountainCar, make_load_unload, mountain_car_grid
from ..envs.features import RollingWindow, WindowStack, one_hot, rbf_featurize
from ..envs.policies import ScriptedPolicy
from ..envs.pomdp import POMDPEnv
from ..numkit.linalg import (DEFAULT_SV_CUTOFF, householder_qr, lstsq_min_norm, orthogonal_init,
                             pinv, svd)
from ..numkit.rng import Rng

ENVS = ("mountain-car", "load-unload")
DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class LinearLabConfig:
    env: str = "load-unload"
    latent_dim: int = 2
    window: int = 20
    lr: float = 0.01
    steps: int = 500
    stride: int = 10
    target: str = "detached"
    mix: float = 0.005
    n_trajectories: int = 10
    max_transitions: int = 200
    sv_cutoff: float = DEFAULT_SV_CUTOFF

    def __post_init__(self):
        if self.env not in ENVS:
            raise ValueError(f"env must be one of {ENVS}, got {self.env!r}")
        if self.target not in ("online", "detached", "ema"):
            raise ValueError(f"unknown target mode {self.target!r}")
        if self.lr < 0 or self.steps < 1 or self.stride < 1:
            raise ValueError("need lr >= 0, steps >= 1 and stride >= 1")

    def replace(self, **kw) -> "LinearLabConfig":
        return LinearLabConfig(**{**asdict(self), **kw})


@dataclass(frozen=True)
class LinearDataset:
    """Rows are transitions: features S, one-hot actions A, next features S'."""

    S: np.ndarray
    A: np.ndarray
    S_next: np.ndarray

    def __len__(self):
        return self.S.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.S.shape[1]


def _collect_mountain_car(cfg: LinearLabConfig, rng: Rng) -> LinearDataset:
    grid = mountain_car_grid()
    env = MountainCar(rng.split("env"), horizon=cfg.max_transitions)
    policy = ScriptedPolicy("energy-pumping", 3)
    S, A, S2 = [], [], []
    for _ in range(cfg.n_trajectories):
        obs = env.reset()
        done = False
        while not done:
            a = policy.act(obs, rng)
            nxt, _, done = env.step(a)
            S.append(rbf_featurize(obs, grid))
            A.append(one_hot(a, 3))
            S2.append(rbf_featurize(nxt, grid))
            obs = nxt
    return LinearDataset(np.array(S), np.array(A), np.array(S2))


def _collect_load_unload(cfg: LinearLabConfig, rng: Rng) -> LinearDataset:
    pomdp = make_load_unload(horizon=cfg.max_transitions)
    env = POMDPEnv(pomdp, rng.split("env"))
    stack = WindowStack(cfg.window, pomdp.n_observations, pomdp.n_actions)
    policy = ScriptedPolicy("sticky-action", 2, repeat_prob=0.8, initial_action=0)
    act_rng = rng.split("policy")
    window = RollingWindow(stack)
    S, A, S2 = [], [], []
    for _ in range(cfg.n_trajectories):
        policy.reset()
        before = window.reset(env.reset())
        done = False
        while not done:
            a = policy.act(None, act_rng)
            o, _, done = env.step(a)
            after = window.push(a, o)
            S.append(before)
            A.append(one_hot(a, 2))
            S2.append(after)
            before = after
    return LinearDataset(np.array(S), np.array(A), np.array(S2))


def collect_dataset(cfg: LinearLabConfig, rng) -> LinearDataset:
    rng = rng if isinstance(rng, Rng) else Rng(int(rng))
    if cfg.env == "mountain-car":
        return _collect_mountain_car(cfg, rng.split("data"))
    return _collect_load_unload(cfg, rng.split("data"))


@dataclass(frozen=True)
class ThetaSolution:
    theta_z: np.ndarray
    theta_a: np.ndarray
    rank: int
    n_columns: int

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.n_columns

    def __iter__(self):
        return iter((self.theta_z, self.theta_a))


def solve_theta(data: LinearDataset, phi: np.ndarray, target_phi: np.ndarray,
                sv_cutoff: float = DEFAULT_SV_CUTOFF) -> ThetaSolution:
    """Joint minimum-norm least squares for [theta_z; theta_a].

    Unpacks as ``theta_z, theta_a``; ``rank_deficient`` flags a degenerate regressor.
    """
    if len(data) == 0:
        raise ValueError("dataset is empty")
    X = np.hstack([data.S @ phi, data.A])
    Y = data.S_next @ target_phi
    theta, rank = lstsq_min_norm(X, Y, sv_cutoff)
    d = phi.shape[1]
    return ThetaSolution(theta[:d], theta[d:], rank, X.shape[1])


def zp_loss(data: LinearDataset, phi, target_phi, theta_z, theta_a) -> float:
    R = data.S @ phi @ theta_z + data.A @ theta_a - data.S_next @ target_phi
    return float(np.sum(R * R) / len(data))


def zp_gradient(data: LinearDataset, phi, target_phi, theta_z, theta_a, online: bool) -> np.ndarray:
    """d loss / d phi with theta held fixed; the online case also differentiates the target."""
    n = len(data)
    R = data.S @ phi @ theta_z + data.A @ theta_a - data.S_next @ target_phi
    grad = 2.0 / n * data.S.T @ R @ theta_z.T
    if online:
        grad -= 2.0 / n * data.S_next.T @ R
    return grad


class LinearProblem:
    """Dataset with a one-off QR of [S, A] so each inner solve is small.

    With [S, A] = Q0 R0, the regressor [S phi, A] equals Q0 (R0 M) for
    M = blockdiag(phi, I), and Q0 has orthonormal columns, so the minimum-norm
    least-squares solution of the full system equals that of the reduced
    system (R0 M) theta = Q0^T S' phi_target. Gradients use Gram matrices.

    The action block C of R0 M never changes, so ``solve`` projects it out
    once: theta_z comes from the d-column system (P B phi) theta_z = P y with
    P the projector off span(C), then theta_a = C^+ (y - B phi theta_z). When
    P B phi has full column rank the joint solution is unique and the two
    routes agree; otherwise the joint minimum-norm solve runs instead.
    """

    def __init__(self, data: LinearDataset, sv_cutoff: float = DEFAULT_SV_CUTOFF):
        self.data = data
        self.sv_cutoff = sv_cutoff
        S, A, S2 = data.S, data.A, data.S_next
        self.n = len(data)
        self.k = S.shape[1]
        self.n_actions = A.shape[1]
        q0, self.r0 = householder_qr(np.hstack([S, A]))
        self.qt_s2 = q0.T @ S2
        self.SS, self.SA, self.SS2 = S.T @ S, S.T @ A, S.T @ S2
        self.S2S, self.S2A, self.S2S2 = S2.T @ S, S2.T @ A, S2.T @ S2
        self.AA, self.AS2 = A.T @ A, A.T @ S2
        c = self.r0[:, self.k:]
        sv = svd(c)
        keep = sv.singular_values > sv_cutoff * sv.singular_values[0]
        # an action never taken leaves a zero column, so span(C) can be smaller than C
        self._qc, self._c_pinv, self._c_rank = sv.u[:, keep], pinv(c, sv_cutoff), int(keep.sum())
        b = self.r0[:, :self.k]
        self._pb = b - self._qc @ (self._qc.T @ b)
        self._b = b

    def solve(self, phi, target_phi) -> ThetaSolution:
        d = phi.shape[1]
        y = self.qt_s2 @ target_phi
        y_perp = y - self._qc @ (self._qc.T @ y)
        theta_z, rank = lstsq_min_norm(self._pb @ phi, y_perp, self.sv_cutoff)
        if rank < d:
            return self.solve_joint(phi, target_phi)
        theta_a = self._c_pinv @ (y - self._b @ phi @ theta_z)
        return ThetaSolution(theta_z, theta_a, d + self._c_rank, d + self.n_actions)

    def solve_joint(self, phi, target_phi) -> ThetaSolution:
        k, d = self.k, phi.shape[1]
        M = np.zeros((k + self.n_actions, d + self.n_actions))
        M[:k, :d] = phi
        M[k:, d:] = np.eye(self.n_actions)
        theta, rank = lstsq_min_norm(self.r0 @ M, self.qt_s2 @ target_phi, self.sv_cutoff)
        return ThetaSolution(theta[:d], theta[d:], rank, d + self.n_actions)

    def gradient(self, phi, target_phi, theta_z, theta_a, online: bool) -> np.ndarray:
        sr = self.SS @ phi @ theta_z + self.SA @ theta_a - self.SS2 @ target_phi
        grad = (2.0 / self.n) * sr @ theta_z.T
        if online:
            s2r = self.S2S @ phi @ theta_z + self.S2A @ theta_a - self.S2S2 @ target_phi
            grad -= (2.0 / self.n) * s2r
        return grad

    def loss(self, phi, target_phi, theta_z, theta_a) -> float:
        p, tz, ta, y = phi, theta_z, theta_a, target_phi
        pred_pred = (tz.T @ p.T @ self.SS @ p @ tz + 2.0 * tz.T @ p.T @ self.SA @ ta
                     + ta.T @ self.AA @ ta)
        pred_tgt = tz.T @ p.T @ self.SS2 @ y + ta.T @ self.AS2 @ y
        tgt_tgt = y.T @ self.S2S2 @ y
        value = np.trace(pred_pred) - 2.0 * np.trace(pred_tgt) + np.trace(tgt_tgt)
        return float(max(value, 0.0) / self.n)


def abs_cosine(phi: np.ndarray) -> float:
    """Largest |cos| between two encoder columns (0 for a single column)."""
    d = phi.shape[1]
    if d < 2:
        return 0.0
    norms = np.linalg.norm(phi, axis=0)
    if np.any(norms == 0):
        return 1.0  # a zero column is fully collapsed
    cos = (phi.T @ phi) / np.outer(norms, norms)
    return float(min(np.max(np.abs(cos[np.triu_indices(d, 1)])), 1.0))


def gram_drift(phi: np.ndarray, gram0: np.ndarray) -> float:
    return float(np.linalg.norm(phi.T @ phi - gram0) / np.linalg.norm(gram0))


@dataclass
class CollapseTrace:
    seed: int
    config: LinearLabConfig
    steps: list = field(default_factory=list)
    abs_cos: list = field(default_factory=list)
    gram_drift: list = field(default_factory=list)
    zp_loss: list = field(default_factory=list)
    step_drift: list = field(default_factory=list)  # ||G(t+1) - G(t)||_F per step
    diverged: bool = False
    rank_deficient_steps: int = 0

    @property
    def rank_deficient(self) -> bool:
        return self.rank_deficient_steps > 0

    @property
    def final_abs_cos(self) -> float:
        return self.abs_cos[-1]

    @property
    def final_drift(self) -> float:
        return self.gram_drift[-1]

    def rows(self):
        return list(zip(self.steps, self.abs_cos, self.gram_drift, self.zp_loss))


def run_collapse(cfg: LinearLabConfig, seed: int, data: LinearDataset | None = None,
                 problem: LinearProblem | None = None) -> CollapseTrace:
    rng = Rng(seed, 0)
    if problem is None:
        data = collect_dataset(cfg, rng) if data is None else data
        problem = LinearProblem(data, cfg.sv_cutoff)
    if cfg.latent_dim > problem.k:
        raise ValueError(f"latent_dim {cfg.latent_dim} exceeds feature dim {problem.k}")
    phi = orthogonal_init(problem.k, cfg.latent_dim, rng.split("init"))
    ema = phi.copy()
    gram0 = phi.T @ phi
    gram_prev = gram0
    trace = CollapseTrace(seed, cfg)
    online = cfg.target == "online"

    def target():
        return ema if cfg.target == "ema" else phi

    def record(step, loss):
        trace.steps.append(step)
        trace.abs_cos.append(abs_cosine(phi))
        trace.gram_drift.append(gram_drift(phi, gram0))
        trace.zp_loss.append(loss)

    for step in range(cfg.steps + 1):
        sol = problem.solve(phi, target())
        trace.rank_deficient_steps += sol.rank_deficient
        tz, ta = sol
        loss = problem.loss(phi, target(), tz, ta)
        if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
            trace.diverged = True
            record(step, loss)
            break
        if step % cfg.stride == 0:
            record(step, loss)
        if step == cfg.steps:
            break
        phi = phi - cfg.lr * problem.gradient(phi, target(), tz, ta, online)
        if cfg.target == "ema":
            ema = (1.0 - cfg.mix) * ema + cfg.mix * phi
        gram = phi.T @ phi
        trace.step_drift.append(float(np.linalg.norm(gram - gram_prev)))
        gram_prev = gram
    return trace


def run_seeds(cfg: LinearLabConfig, seeds, modes=("online", "detached", "ema")) -> dict:
    """Traces per (mode, seed); each seed's dataset and QR are shared across modes."""
    out = {m: [] for m in modes}
    for seed in seeds:
        problem = LinearProblem(collect_dataset(cfg, Rng(seed, 0)), cfg.sv_cutoff)
        for m in modes:
            out[m].append(run_collapse(cfg.replace(target=m), seed, problem=problem))
    return out


def drift_study(cfg: LinearLabConfig, seeds, lrs=(0.01, 0.003, 0.001)) -> dict:
    """Stop-gradient Gram drift per learning rate, with the fitted O(alpha^2) step constant.

    Returns {lr: {"drifts": final drift per seed, "step_constant": max step drift / lr^2}}.
    """
    problems = [LinearProblem(collect_dataset(cfg, Rng(s, 0)), cfg.sv_cutoff) for s in seeds]
    out = {}
    for lr in lrs:
        run_cfg = cfg.replace(lr=lr, target="detached")
        traces = [run_collapse(run_cfg, s, problem=p) for s, p in zip(seeds, problems)]
        worst = max((max(t.step_drift) for t in traces if t.step_drift), default=0.0)
        out[lr] = {
            "drifts": [t.final_drift for t in traces],
            "step_constant": worst / lr**2 if lr > 0 else 0.0,
        }
    return out


TRACE_COLUMNS = ("step", "abs_cos", "gram_drift", "zp_loss")


def trace_csv(trace: CollapseTrace) -> str:
    """CSV text with a fixed column order and round-trip float formatting."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for step, c, g, loss in trace.rows():
        writer.writerow([step, repr(c), repr(g), repr(loss)])
    return buf.getvalue()
