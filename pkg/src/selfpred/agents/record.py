"""Per-run training records and their CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

RECORD_COLUMNS = ("step", "eval_return", "success_rate", "rl_loss", "aux_loss", "est_rank",
                  "epsilon_or_std")


def _fmt(x) -> str:
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


@dataclass
class RunRecord:
    variant: str
    seed: int
    rows: list = field(default_factory=list)
    incidents: list = field(default_factory=list)  # (step, message) for skipped updates
    env_steps: int = 0
    updates: int = 0

    def log(self, **values) -> None:
        missing = set(RECORD_COLUMNS) - set(values)
        if missing:
            raise ValueError(f"missing columns {sorted(missing)}")
        self.rows.append(tuple(values[c] for c in RECORD_COLUMNS))

    def column(self, name: str) -> list:
        j = RECORD_COLUMNS.index(name)
        return [row[j] for row in self.rows]

    def final(self, name: str) -> float:
        if not self.rows:
            raise ValueError("empty record")
        return self.column(name)[-1]

    def to_csv(self, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()
