"""Across-seed medians, interquartile ranges and claim bookkeeping."""

from __future__ import annotations

import operator
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SeriesRecord:
    """One run's metrics sampled at common steps."""

    seed: int
    steps: list
    metrics: dict
    complete: bool = True
    label: str = ""


@dataclass
class Claim:
    name: str
    measured: float
    threshold: float
    op: str = ">="  # measured <op> threshold must hold

    _OPS = {">=": operator.ge, ">": operator.gt, "<=": operator.le, "<": operator.lt}

    def __post_init__(self):
        if self.op not in self._OPS:
            raise ValueError(f"unknown comparison {self.op!r}")

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.measured)) and self._OPS[self.op](self.measured, self.threshold)

    @property
    def margin(self) -> float:
        """Signed distance to the threshold, positive when the claim holds."""
        d = self.measured - self.threshold
        return float(d if self.op in (">=", ">") else -d)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.name}: measured={self.measured:.6g} {self.op} "
                f"{self.threshold:.6g} (margin {self.margin:+.3g})")


@dataclass
class AggregateSummary:
    steps: list
    median: dict
    q25: dict
    q75: dict
    n_runs: int
    incomplete: list = field(default_factory=list)
    claims: list = field(default_factory=list)

    def iqr(self, metric: str) -> np.ndarray:
        return np.asarray(self.q75[metric]) - np.asarray(self.q25[metric])

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.claims)


def aggregate(records, claims=()) -> AggregateSummary:
    """Per-step median and quartiles over completed runs; incomplete seeds listed apart."""
    records = list(records)
    if not records:
        raise ValueError("aggregate needs at least one record")
    done = [r for r in records if r.complete]
    incomplete = [r.seed for r in records if not r.complete]
    if not done:
        raise ValueError("no completed records to aggregate")
    steps = list(done[0].steps)
    for r in done[1:]:
        if list(r.steps) != steps:
            raise ValueError(f"seed {r.seed} logged different steps")
    metrics = list(done[0].metrics)
    med, lo, hi = {}, {}, {}
    for m in metrics:
        table = np.array([r.metrics[m] for r in done], dtype=float)
        med[m] = np.median(table, axis=0).tolist()
        lo[m] = np.percentile(table, 25, axis=0).tolist()
        hi[m] = np.percentile(table, 75, axis=0).tolist()
    return AggregateSummary(steps, med, lo, hi, len(done), incomplete, list(claims))


def final_median(records, metric: str) -> float:
    vals = [r.metrics[metric][-1] for r in records if r.complete]
    if not vals:
        raise ValueError("no completed records")
    return float(np.median(vals))
