"""Annealing schedules for exploration noise and epsilon."""

from __future__ import annotations

import re
from dataclasses import dataclass

_PATTERN = re.compile(r"^\s*(linear|exponential|constant)\(([^)]*)\)\s*$")


@dataclass(frozen=True)
class Schedule:
    """``kind(start, end, decay_steps)``; the value is clamped at ``end`` after decay."""

    kind: str
    start: float
    end: float = 0.0
    decay_steps: int = 1

    def __post_init__(self):
        if self.kind not in ("linear", "exponential", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.decay_steps < 1:
            raise ValueError("decay_steps must be >= 1")
        if self.kind == "exponential" and (self.start <= 0 or self.end <= 0):
            raise ValueError("exponential schedules need positive start and end")

    def __call__(self, step: int) -> float:
        if self.kind == "constant":
            return self.start
        frac = min(max(step, 0) / self.decay_steps, 1.0)
        if frac >= 1.0:
            return self.end
        if self.kind == "linear":
            return self.start + (self.end - self.start) * frac
        return self.start * (self.end / self.start) ** frac

    def __str__(self):
        if self.kind == "constant":
            return f"constant({self.start!r})"
        return f"{self.kind}({self.start!r},{self.end!r},{self.decay_steps})"


def parse_schedule(text: str) -> Schedule:
    """Parse ``linear(1.0,0.1,100000)``, ``exponential(1.0,0.05,400000)`` or ``constant(0.1)``."""
    m = _PATTERN.match(text)
    if not m:
        raise ValueError(f"cannot parse schedule {text!r}")
    kind = m.group(1)
    args = [a.strip() for a in m.group(2).split(",") if a.strip()]
    if kind == "constant":
        if len(args) != 1:
            raise ValueError(f"constant schedule takes one value: {text!r}")
        return Schedule("constant", float(args[0]))
    if len(args) != 3:
        raise ValueError(f"{kind} schedule takes (start, end, decay_steps): {text!r}")
    return Schedule(kind, float(args[0]), float(args[1]), int(float(args[2])))
