"""Line-oriented text formats for condition reports and tabular encoders.

Report lines are tab-separated: ``condition  pass|fail  max_violation  witness``
where the witness is ``-`` or ``key=value`` pairs joined by ``;`` and paths
are dot-joined integers (o_1.a_1.o_2...). Encoders are written as one
``depth <t>: <labels>`` line per depth.
"""

from __future__ import annotations

from .conditions import ConditionReport
from .encoders import TabularEncoder

REPORT_HEADER = "# condition\tverdict\tmax_violation\twitness"


def dumps_reports(reports) -> str:
    lines = [REPORT_HEADER] + [r.to_line() for r in reports]
    return "\n".join(lines) + "\n"


def loads_reports(text: str) -> list:
    return [ConditionReport.from_line(line) for line in text.splitlines()
            if line.strip() and not line.startswith("#")]


def dumps_encoder(encoder: TabularEncoder) -> str:
    return "".join(f"depth {t}: {' '.join(map(str, lab.tolist()))}\n"
                   for t, lab in enumerate(encoder.labels))


def loads_encoder(text: str) -> TabularEncoder:
    labels = []
    for line in text.splitlines():
        if not line.startswith("depth "):
            continue
        head, _, body = line.partition(":")
        depth = int(head.split()[1])
        if depth != len(labels):
            raise ValueError(f"encoder depths out of order at depth {depth}")
        labels.append([int(v) for v in body.split()])
    return TabularEncoder(tuple(labels))
