"""Configs, seed fan-out, studies, aggregation, artifacts and the CLI."""

from .aggregate import AggregateSummary, Claim, SeriesRecord, aggregate, final_median
from .config import ConfigError, ExperimentConfig, load_config, loads_config, parse_seeds
from .registry import (DEFAULT_CONFIGS, RUNNERS, default_config, run_study, write_artifacts)
from .studies import StudyResult, fan_out, worker_count
from .svg import EmptyPlotError, PlotSpec, Series, emit_plot

__all__ = [
    "AggregateSummary", "Claim", "ConfigError", "DEFAULT_CONFIGS", "EmptyPlotError",
    "ExperimentConfig", "PlotSpec", "RUNNERS", "Series", "SeriesRecord", "StudyResult",
    "aggregate", "default_config", "emit_plot", "fan_out", "final_median", "load_config",
    "loads_config", "parse_seeds", "run_study", "worker_count", "write_artifacts",
]
