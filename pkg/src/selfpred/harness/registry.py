"""Experiment kinds, their default configs, and artifact emission."""

from __future__ import annotations

import glob
import os
import re

from .config import ExperimentConfig, loads_config
from .experiments import (collapse_figures, linear_collapse_study, rank_figures, rank_study,
                          train_figures, train_study)
from .io import artifact_path, csv_text, read_csv, write_bytes, write_json, write_text
from .studies import (StudyResult, approx_bound_suite, implication_suite, reward_recovery_suite,
                      stationarity_suite, zp_gap_suite)
from .svg import emit_plot

ORACLE_SUITES = {
    "implications": lambda cfg: implication_suite(cfg.seeds[0], cfg.get("n_pomdps", 100),
                                                  cfg.get("n_samples", 12)),
    "zp-gap": lambda cfg: zp_gap_suite(cfg.seeds[0]),
    "reward-recovery": lambda cfg: reward_recovery_suite(cfg.seeds[0]),
    "stationarity": lambda cfg: stationarity_suite(),
}


def oracle_study(cfg: ExperimentConfig) -> StudyResult:
    merged = StudyResult([])
    for name in cfg.get("suites", tuple(ORACLE_SUITES)):
        if name not in ORACLE_SUITES:
            raise ValueError(f"unknown oracle suite {name!r}; expected one of {tuple(ORACLE_SUITES)}")
        res = ORACLE_SUITES[name](cfg)
        merged.claims.extend(res.claims)
        merged.tables.update(res.tables)
        merged.info.update({f"{name}.{k}": v for k, v in res.info.items()})
    return merged


def bound_study(cfg: ExperimentConfig) -> StudyResult:
    return approx_bound_suite(cfg.seeds[0], cfg.get("n_pomdps", 50), cfg.get("scale", 0.1))


RUNNERS = {
    "oracle-suite": oracle_study,
    "bound-check": bound_study,
    "linear-collapse": linear_collapse_study,
    "train": train_study,
    "rank-report": rank_study,
}

FIGURES = {
    "linear-collapse": collapse_figures,
    "train": train_figures,
    "rank-report": rank_figures,
}

# subcommand -> kinds it accepts (first one is the default)
SUBCOMMAND_KINDS = {
    "oracle": ("oracle-suite", "bound-check"),
    "collapse": ("linear-collapse",),
    "train": ("train",),
    "rank": ("rank-report",),
}

DEFAULT_CONFIGS = {
    "oracle": """
[experiment]
kind = oracle-suite
seeds = 0
""",
    "collapse": """
[experiment]
kind = linear-collapse
seeds = 0-99

[params]
envs = mountain-car,load-unload
modes = online,detached,ema
lr = 0.01
steps = 500
stride = 10
latent_dim = 2
drift_lrs = 0.01,0.003,0.001
drift_env = load-unload
""",
    "train": """
[experiment]
kind = train
seeds = 0-8

[params]
env = keydoor
n_layouts = 8
variants = model-free,zp-l2,op
budget = 10000
window = 8
n_step = 5
exploration = exponential(1.0,0.05,5000)
eval_every = 2000
eval_episodes = 20
margin = 0.1
""",
    "rank": """
[experiment]
kind = rank-report
seeds = 0-8

[params]
env = pointmass
variants = zp-l2
target_modes = online,ema
distractors = 64
budget = 10000
exploration = linear(1.0,0.1,5000)
eval_every = 2000
""",
}


def default_config(subcommand: str) -> ExperimentConfig:
    return loads_config(DEFAULT_CONFIGS[subcommand])


def run_study(cfg: ExperimentConfig) -> StudyResult:
    return RUNNERS[cfg.kind](cfg)


def _comment(cfg: ExperimentConfig) -> str:
    return f"kind={cfg.kind} config={cfg.content_hash()}"


def write_figures(cfg: ExperimentConfig, plots: dict) -> list:
    h = cfg.content_hash()
    return [write_bytes(artifact_path(cfg.out, name, h, "svg"), emit_plot(series, spec))
            for name, (series, spec) in sorted(plots.items())]


def write_artifacts(cfg: ExperimentConfig, result: StudyResult) -> list:
    """CSV per table, SVG per figure and a JSON summary; returns the written paths."""
    h = cfg.content_hash()
    paths = []
    for name, (header, rows) in sorted(result.tables.items()):
        paths.append(write_text(artifact_path(cfg.out, name, h, "csv"),
                                csv_text(header, rows, _comment(cfg))))
    paths += write_figures(cfg, result.plots)
    summary = {
        "kind": cfg.kind,
        "config_hash": h,
        "seeds": list(cfg.seeds),
        "passed": result.passed,
        "claims": [{"name": c.name, "measured": float(c.measured), "threshold": float(c.threshold),
                    "op": c.op, "passed": c.passed, "margin": c.margin} for c in result.claims],
        "info": {k: v for k, v in sorted(result.info.items())},
    }
    paths.append(write_json(artifact_path(cfg.out, f"summary-{cfg.kind}", h, "json"), summary))
    return paths


def load_tables(cfg: ExperimentConfig) -> dict:
    """Tables previously written for ``cfg``, keyed by artifact name."""
    h = cfg.content_hash()
    suffix = f"-{h}.csv"
    tables = {}
    for path in sorted(glob.glob(os.path.join(glob.escape(cfg.out), f"*{suffix}"))):
        name = re.sub(re.escape(suffix) + "$", "", os.path.basename(path))
        tables[name] = read_csv(path)
    return tables


def figures_from_artifacts(cfg: ExperimentConfig) -> dict:
    if cfg.kind not in FIGURES:
        return {}
    return FIGURES[cfg.kind](cfg, load_tables(cfg))
