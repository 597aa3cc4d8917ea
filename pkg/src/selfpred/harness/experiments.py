"""Config-driven studies over seeds: linear collapse, agent training and rank reports.

Each study turns an :class:`ExperimentConfig` into a :class:`StudyResult`
whose tables become one CSV per run plus a summary CSV. ``*_figures``
rebuild the SVG series from those tables alone, so ``plot`` can redraw
from artifacts without rerunning anything.
"""

from __future__ import annotations

import re

import numpy as np

from ..agents.config import AgentConfig
from ..agents.record import RECORD_COLUMNS
from ..agents.train import train
from ..envs.classic import PointMass
from ..envs.distractors import wrap_distractors
from ..envs.keydoor import make_grid_keydoor
from ..linearlab.collapse import (TRACE_COLUMNS, LinearLabConfig, LinearProblem, collect_dataset,
                                  run_collapse)
from ..numkit.rng import Rng
from .aggregate import Claim, SeriesRecord, aggregate
from .config import ExperimentConfig
from .studies import StudyResult, fan_out
from .svg import PlotSpec, Series

MODES = ("online", "detached", "ema")
COLLAPSE_RATIO = 10.0


# -- linear collapse ------------------------------------------------------------

def collapse_settings(cfg: ExperimentConfig, env: str) -> LinearLabConfig:
    return LinearLabConfig(env=env, latent_dim=cfg.get("latent_dim", 2),
                           window=cfg.get("window", 20), lr=cfg.get("lr", 0.01),
                           steps=cfg.get("steps", 500), stride=cfg.get("stride", 10),
                           mix=cfg.get("mix", 0.005))


def _collapse_job(job):
    """Every (mode, lr) run for one seed, sharing the dataset and its QR."""
    lab, seed, runs = job
    problem = LinearProblem(collect_dataset(lab, Rng(seed, 0)), lab.sv_cutoff)
    return {(mode, lr): run_collapse(lab.replace(target=mode, lr=lr), seed, problem=problem)
            for mode, lr in runs}


def _run_name(prefix: str, *parts) -> str:
    return "-".join([prefix] + [str(p) for p in parts])


def linear_collapse_study(cfg: ExperimentConfig) -> StudyResult:
    """Final |cos| across target modes per env, plus the stop-gradient drift sweep."""
    envs = cfg.get("envs", ("mountain-car", "load-unload"))
    modes = cfg.get("modes", MODES)
    tables, claims, finals = {}, [], []
    base_lr = cfg.get("lr", 0.01)
    drift_lrs = cfg.get("drift_lrs", (0.01, 0.003, 0.001))
    drift_env = cfg.get("drift_env", "load-unload")
    drift_seeds = cfg.seeds[:cfg.get("drift_seeds", len(cfg.seeds))]
    drift_results = {}
    envs_run = list(envs) + ([drift_env] if drift_lrs and drift_env not in envs else [])
    for env in envs_run:
        lab = collapse_settings(cfg, env)
        main = [(m, base_lr) for m in modes] if env in envs else []
        jobs = []
        for s in cfg.seeds:
            extra = [("detached", lr) for lr in drift_lrs
                     if env == drift_env and s in drift_seeds and ("detached", lr) not in main]
            jobs.append((lab, s, main + extra))
        results = fan_out(_collapse_job, jobs)
        if env == drift_env:
            drift_results = dict(zip(cfg.seeds, results))
        if env not in envs:
            continue
        for seed, res in zip(cfg.seeds, results):
            for mode in modes:
                tr = res[mode, base_lr]
                tables[_run_name("collapse", env, mode, f"seed{seed}")] = (TRACE_COLUMNS, tr.rows())
                finals.append((env, mode, seed, tr.final_abs_cos, tr.final_drift,
                               int(tr.diverged), tr.rank_deficient_steps))
        med = {m: float(np.median([f[3] for f in finals
                                   if f[0] == env and f[1] == m and not f[5]])) for m in modes}
        if "online" in modes:
            for m in ("detached", "ema"):
                if m in modes:
                    ratio = med["online"] / med[m] if med[m] > 0 else np.inf
                    claims.append(Claim(f"{env}: median final |cos| online / {m}", ratio,
                                        COLLAPSE_RATIO, ">="))
    tables["collapse-final"] = (("env", "mode", "seed", "final_abs_cos", "final_drift",
                                 "diverged", "rank_deficient_steps"), finals)
    info = {}
    if drift_lrs:
        env, seeds = drift_env, drift_seeds
        results = [drift_results[s] for s in seeds]
        rows, medians = [], []
        for lr in drift_lrs:
            traces = [res["detached", lr] for res in results]
            rows.extend((lr, s, tr.final_drift) for s, tr in zip(seeds, traces))
            medians.append(float(np.median([tr.final_drift for tr in traces])))
            worst = max((max(tr.step_drift) for tr in traces if tr.step_drift), default=0.0)
            info[f"step_constant@{lr!r}"] = worst / lr**2 if lr > 0 else 0.0
        tables["collapse-drift"] = (("lr", "seed", "final_drift"), rows)
        order = np.argsort(drift_lrs)[::-1]  # largest step first
        ordered = [medians[i] for i in order]
        steps_down = [a - b for a, b in zip(ordered, ordered[1:])]
        claims.append(Claim(f"{env}: min decrease of median drift as lr shrinks",
                            min(steps_down) if steps_down else np.inf, 0.0, ">"))
        claims.append(Claim(f"{env}: median drift at lr={drift_lrs[order[-1]]!r}",
                            ordered[-1], 0.05, "<"))
        info["drift_medians"] = dict(zip(map(repr, drift_lrs), medians))
    return StudyResult(claims, tables, collapse_figures(cfg, tables), info)


def _records(tables: dict, pattern: str, columns) -> dict:
    """Group per-run tables whose names match ``pattern`` by its non-seed groups."""
    rx = re.compile(pattern)
    groups = {}
    for name, (header, rows) in sorted(tables.items()):
        m = rx.fullmatch(name)
        if not m:
            continue
        key = m.group("key")
        seed = int(m.group("seed"))
        cols = {c: [row[list(header).index(c)] for row in rows] for c in columns}
        steps = cols.pop(columns[0])
        groups.setdefault(key, []).append(SeriesRecord(seed, steps, cols, label=key))
    for recs in groups.values():
        longest = max(len(r.steps) for r in recs)
        for r in recs:
            r.complete = len(r.steps) == longest
    return groups


def _series(groups: dict, metric: str, keys) -> list:
    out = []
    for key in keys:
        if key not in groups:
            continue
        summary = aggregate(groups[key])
        out.append(Series(key, tuple(summary.steps), tuple(summary.median[metric]),
                          (tuple(summary.q25[metric]), tuple(summary.q75[metric]))))
    return out


def collapse_figures(cfg: ExperimentConfig, tables: dict) -> dict:
    plots = {}
    for env in cfg.get("envs", ("mountain-car", "load-unload")):
        groups = _records(tables, rf"collapse-{re.escape(env)}-(?P<key>[a-z]+)-seed(?P<seed>\d+)",
                          TRACE_COLUMNS[:2])
        series = _series(groups, "abs_cos", cfg.get("modes", MODES))
        if series:
            plots[f"collapse-{env}"] = (series, PlotSpec(
                title=f"{env}: max |cos| between latent columns (median, IQR)",
                ylabel="|cos|", log_y=True))
    return plots


# -- agent training ---------------------------------------------------------------

AGENT_KEYS = ("gamma", "exploration", "warmup_steps", "n_step", "window", "latent_dim",
              "eval_every", "batch_size", "update_every", "aux_coef", "lr", "hidden",
              "eval_episodes", "replay_capacity")


def agent_config(cfg: ExperimentConfig, variant: str, target_mode: str = "ema") -> AgentConfig:
    kw = {k: cfg.params[k] for k in AGENT_KEYS if k in cfg.params}
    if variant == "model-free":
        kw.pop("aux_coef", None)
    return AgentConfig(variant=variant, target_mode=target_mode, **kw)


def make_env(cfg: ExperimentConfig, seed: int, n_distractors: int = 0):
    name = cfg.get("env", "keydoor")
    if name == "keydoor":
        world = make_grid_keydoor(5, Rng(seed, 1), n_layouts=cfg.get("n_layouts", 1))
        env = world.env(Rng(seed, 2))
    elif name == "pointmass":
        env = PointMass(Rng(seed, 1))
    else:
        raise ValueError(f"unknown training env {name!r}")
    return wrap_distractors(env, n_distractors, Rng(seed, 3)) if n_distractors else env


def _train_job(job):
    cfg, variant, target_mode, n_distractors, seed = job
    env = make_env(cfg, seed, n_distractors)
    rec = train(agent_config(cfg, variant, target_mode), env, cfg.get("budget", 20000), Rng(seed))
    return rec.rows, len(rec.incidents)


def _run_grid(cfg: ExperimentConfig, variants, target_modes, distractors, prefix):
    jobs = [(cfg, v, tm, nd, s) for v in variants for tm in target_modes
            for nd in distractors for s in cfg.seeds]
    results = fan_out(_train_job, jobs)
    tables, finals = {}, []
    for (_, v, tm, nd, s), (rows, incidents) in zip(jobs, results):
        tables[_run_name(prefix, v, tm, f"d{nd}", f"seed{s}")] = (RECORD_COLUMNS, rows)
        last = dict(zip(RECORD_COLUMNS, rows[-1]))
        finals.append((v, tm, nd, s, last["eval_return"], last["success_rate"],
                       last["est_rank"], incidents))
    header = ("variant", "target_mode", "distractors", "seed", "final_return",
              "final_success", "final_rank", "skipped_updates")
    tables[f"{prefix}-final"] = (header, finals)
    return tables, finals


def _median_final(finals, column: int, **match) -> float:
    keys = {"variant": 0, "target_mode": 1, "distractors": 2}
    vals = [f[column] for f in finals if all(f[keys[k]] == v for k, v in match.items())]
    return float(np.median(vals)) if vals else float("nan")


def train_study(cfg: ExperimentConfig) -> StudyResult:
    """Variants x distractor levels; claims depend on which comparisons the grid allows."""
    variants = cfg.get("variants", ("model-free", "zp-l2", "op"))
    distractors = cfg.get("distractors", (0,))
    tables, finals = _run_grid(cfg, variants, ("ema",), distractors, "train")
    claims = []
    top = max(distractors)
    if {"model-free", "zp-l2", "op"} <= set(variants) and cfg.get("env", "keydoor") == "keydoor":
        succ = {v: _median_final(finals, 5, variant=v, distractors=top) for v in variants}
        claims += [
            Claim("median final success: op - zp-l2", succ["op"] - succ["zp-l2"], 0.0, ">="),
            Claim("median final success: zp-l2 - model-free", succ["zp-l2"] - succ["model-free"],
                  cfg.get("margin", 0.1), ">="),
        ]
    if 0 in distractors and top > 0 and {"zp-l2", "op"} <= set(variants):
        deg = {}
        for v in ("zp-l2", "op"):
            clean = _median_final(finals, 4, variant=v, distractors=0)
            noisy = _median_final(finals, 4, variant=v, distractors=top)
            deg[v] = 1.0 - noisy / clean if clean > 0 else float("nan")
        claims.append(Claim(f"relative return drop at {top} distractors: op - zp-l2",
                            deg["op"] - deg["zp-l2"], 0.0, ">"))
    return StudyResult(claims, tables, train_figures(cfg, tables))


def rank_study(cfg: ExperimentConfig) -> StudyResult:
    """Estimated latent rank of zp-l2 under online versus EMA targets."""
    variant = cfg.get("variants", ("zp-l2",))[0]
    modes = cfg.get("target_modes", ("online", "ema"))
    distractors = cfg.get("distractors", (64,))
    tables, finals = _run_grid(cfg, (variant,), modes, distractors, "rank")
    ranks = {m: _median_final(finals, 6, target_mode=m) for m in modes}
    claims = []
    if {"online", "ema"} <= set(modes):
        claims.append(Claim("median final rank: ema - online", ranks["ema"] - ranks["online"],
                            0.0, ">="))
    return StudyResult(claims, tables, rank_figures(cfg, tables), {"median_rank": ranks})


_RUN_RX = r"{prefix}-(?P<key>.+)-seed(?P<seed>\d+)"


def train_figures(cfg: ExperimentConfig, tables: dict) -> dict:
    groups = _records(tables, _RUN_RX.format(prefix="train"),
                      ("step", "eval_return", "success_rate"))
    keys = sorted(groups)
    metric = "success_rate" if cfg.get("env", "keydoor") == "keydoor" else "eval_return"
    series = _series(groups, metric, keys)
    if not series:
        return {}
    return {"train": (series, PlotSpec(title=f"{cfg.get('env', 'keydoor')}: {metric} (median, IQR)",
                                       ylabel=metric))}


def rank_figures(cfg: ExperimentConfig, tables: dict) -> dict:
    groups = _records(tables, _RUN_RX.format(prefix="rank"), ("step", "est_rank"))
    series = _series(groups, "est_rank", sorted(groups))
    if not series:
        return {}
    return {"rank": (series, PlotSpec(title="estimated latent rank (median, IQR)",
                                      ylabel="rank"))}
