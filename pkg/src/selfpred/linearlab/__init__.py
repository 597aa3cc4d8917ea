"""Linear encoder collapse experiments with an exact inner least-squares model."""

from .collapse import (
    ENVS,
    TRACE_COLUMNS,
    CollapseTrace,
    LinearDataset,
    LinearLabConfig,
    LinearProblem,
    ThetaSolution,
    abs_cosine,
    collect_dataset,
    drift_study,
    gram_drift,
    run_collapse,
    run_seeds,
    solve_theta,
    trace_csv,
    zp_gradient,
    zp_loss,
)

__all__ = [
    "ENVS", "TRACE_COLUMNS", "CollapseTrace", "LinearDataset", "LinearLabConfig", "LinearProblem",
    "ThetaSolution", "abs_cosine", "collect_dataset", "drift_study", "gram_drift", "run_collapse",
    "run_seeds", "solve_theta", "trace_csv", "zp_gradient", "zp_loss",
]
