"""Artifact paths and writers. Every file name embeds the config hash."""

from __future__ import annotations

import csv
import io as _io
import json
import os


def artifact_path(out_dir: str, name: str, config_hash: str, ext: str) -> str:
    return os.path.join(out_dir, f"{name}-{config_hash}.{ext}")


def write_bytes(path: str, data: bytes) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return path


def write_text(path: str, text: str) -> str:
    return write_bytes(path, text.encode("utf-8"))


def csv_text(header, rows, comment: str | None = None) -> str:
    buf = _io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def read_csv(path: str) -> tuple[list, list]:
    """(header, rows) with comment lines skipped and numeric cells parsed."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = []
    for row in reader:
        parsed = []
        for cell in row:
            try:
                parsed.append(int(cell))
            except ValueError:
                try:
                    parsed.append(float(cell))
                except ValueError:
                    parsed.append(cell)
        rows.append(parsed)
    return header, rows


def write_json(path: str, payload) -> str:
    return write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
