"""Minimal deterministic SVG line plots."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


@dataclass(frozen=True)
class Series:
    label: str
    xs: tuple
    ys: tuple
    band: tuple | None = None  # optional (lower, upper) per point


@dataclass(frozen=True)
class PlotSpec:
    title: str = ""
    xlabel: str = "step"
    ylabel: str = ""
    log_y: bool = False
    width: int = 640
    height: int = 420


class EmptyPlotError(ValueError):
    pass


def log_ticks(lo: float, hi: float) -> list[float]:
    """Powers of ten from floor(log10 lo) to ceil(log10 hi)."""
    if not (lo > 0 and hi > 0):
        raise ValueError("log ticks need a positive range")
    a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    if a == b:
        b = a + 1
    return [10.0 ** k for k in range(a, b + 1)]


def linear_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    """Round-number ticks whose first and last bracket [lo, hi]."""
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.floor(lo / step)
    stop = math.ceil(hi / step - 1e-9)  # last tick at or above hi
    return [round(k * step, 12) for k in range(start, stop + 1)]


def _clean(series, log_y):
    kept, dropped = [], 0
    for s in series:
        pts = []
        for i, (x, y) in enumerate(zip(s.xs, s.ys)):
            ok = math.isfinite(x) and math.isfinite(y) and (y > 0 or not log_y)
            if s.band is not None:
                lo, hi = s.band[0][i], s.band[1][i]
                ok = ok and math.isfinite(lo) and math.isfinite(hi) and (lo > 0 or not log_y)
                band = (lo, hi)
            else:
                band = None
            if ok:
                pts.append((float(x), float(y), band))
            else:
                dropped += 1
        kept.append((s.label, pts))
    return kept, dropped


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float, log_y: bool) -> str:
    if log_y:
        return f"1e{int(round(math.log10(v)))}"
    return f"{v:g}"


def emit_plot(series, spec: PlotSpec = PlotSpec()) -> bytes:
    """Render series as an SVG document. Non-finite points (and non-positive
    ones on a log axis) are dropped; the count is written into the <desc>."""
    series = list(series)
    if not series:
        raise EmptyPlotError("no series to plot")
    kept, dropped = _clean(series, spec.log_y)
    all_pts = [p for _, pts in kept for p in pts]
    if not all_pts:
        raise EmptyPlotError(f"all {dropped} points were dropped as non-finite")
    ys = [p[1] for p in all_pts] + [b for p in all_pts if p[2] for b in p[2]]
    xs = [p[0] for p in all_pts]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if spec.log_y:
        yt = log_ticks(min(ys), max(ys))
        ty = [math.log10(v) for v in yt]
    else:
        yt = linear_ticks(min(ys), max(ys))
        ty = yt
    y_lo, y_hi = ty[0], ty[-1]
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    left, right, top, bottom = 70, 150, 40, 50
    pw, ph = spec.width - left - right, spec.height - top - bottom

    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        v = math.log10(y) if spec.log_y else y
        return top + (1.0 - (v - y_lo) / (y_hi - y_lo)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" '
           f'height="{spec.height}" viewBox="0 0 {spec.width} {spec.height}">',
           f"<desc>dropped={dropped}</desc>",
           f'<rect x="0" y="0" width="{spec.width}" height="{spec.height}" fill="white"/>',
           f'<text x="{spec.width / 2:.1f}" y="20" text-anchor="middle" font-size="14">'
           f"{escape(spec.title)}</text>"]
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for v, t in zip(yt, ty):
        y = top + (1.0 - (t - y_lo) / (y_hi - y_lo)) * ph
        out.append(f'<line x1="{left - 4}" y1="{_fmt(y)}" x2="{left}" y2="{_fmt(y)}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{_fmt(y + 4)}" text-anchor="end" font-size="11">'
                   f"{_tick_label(v, spec.log_y)}</text>")
    for v in linear_ticks(x_lo, x_hi):
        if v < x_lo or v > x_hi:
            continue
        x = px(v)
        out.append(f'<line x1="{_fmt(x)}" y1="{top + ph}" x2="{_fmt(x)}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{top + ph + 18}" text-anchor="middle" font-size="11">{v:g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{spec.height - 10}" text-anchor="middle" '
               f'font-size="12">{escape(spec.xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(spec.ylabel)}</text>')
    for i, (label, pts) in enumerate(kept):
        color = PALETTE[i % len(PALETTE)]
        banded = [p for p in pts if p[2] is not None]
        if banded:
            upper = " ".join(f"{_fmt(px(x))},{_fmt(py(b[1]))}" for x, _, b in banded)
            lower = " ".join(f"{_fmt(px(x))},{_fmt(py(b[0]))}" for x, _, b in reversed(banded))
            out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.15" stroke="none"/>')
        if pts:
            path = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y, _ in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 14 + 18 * i
        lx = left + pw + 10
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}" font-size="12">{escape(label)}</text>')
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def dropped_count(svg: bytes) -> int:
    text = svg.decode("utf-8")
    start = text.index("<desc>dropped=") + len("<desc>dropped=")
    return int(text[start:text.index("</desc>", start)])
