"""Tiny static SVG line-chart writer.

Coordinates are printed with fixed precision so identical data always
produces identical bytes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#17becf", "#bcbd22", "#7f7f7f")


@dataclass
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: str = ""
    color: str = "#1f77b4"
    width: float = 1.5
    opacity: float = 1.0
    markers: bool = False


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(t) for t in np.arange(start, hi + step * 1e-9, step)]


def _tick_label(v: float) -> str:
    return f"{v:.0f}" if abs(v - round(v)) < 1e-9 else f"{v:.3g}"


def chart(series: Sequence[Series], title: str = "", xlabel: str = "", ylabel: str = "",
          width: int = 480, height: int = 320, xlim=None, ylim=None, legend: bool = True) -> str:
    """Render one chart as an SVG ``<g>`` fragment sized ``width`` x ``height``."""
    left, right, top, bottom = 56, 16, 28, 40
    pw, ph = width - left - right, height - top - bottom
    xs = np.concatenate([np.asarray(s.x, float) for s in series]) if series else np.array([0.0, 1.0])
    ys = np.concatenate([np.asarray(s.y, float) for s in series]) if series else np.array([0.0, 1.0])
    x0, x1 = xlim if xlim else (float(xs.min()), float(xs.max()))
    y0, y1 = ylim if ylim else (float(ys.min()), float(ys.max()))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_fmt(px(t))}" y1="{top + ph}" x2="{_fmt(px(t))}" y2="{top + ph + 4}" stroke="#333"/>')
        out.append(f'<text x="{_fmt(px(t))}" y="{top + ph + 16}" text-anchor="middle" font-size="10">{_tick_label(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{left - 4}" y1="{_fmt(py(t))}" x2="{left}" y2="{_fmt(py(t))}" stroke="#333"/>')
        out.append(f'<text x="{left - 6}" y="{_fmt(py(t) + 3)}" text-anchor="end" font-size="10">{_tick_label(t)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 6}" text-anchor="middle" font-size="11">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="11" '
                   f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylabel)}</text>')

    for s in series:
        pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(s.x, s.y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{s.color}" '
                   f'stroke-width="{s.width}" stroke-opacity="{s.opacity}"/>')
        if s.markers:
            out.extend(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(b))}" r="2.5" fill="{s.color}"/>'
                       for a, b in zip(s.x, s.y))

    labelled = [s for s in series if s.label] if legend else []
    for i, s in enumerate(labelled[:12]):
        ly = top + 12 + 14 * i
        out.append(f'<line x1="{left + pw - 110}" y1="{ly}" x2="{left + pw - 92}" y2="{ly}" stroke="{s.color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 88}" y="{ly + 4}" font-size="10">{escape(s.label)}</text>')
    return "\n".join(out)


def document(panels: Sequence[str], columns: int = 1, width: int = 480, height: int = 320) -> str:
    """Lay out chart fragments on a grid and wrap them in an ``<svg>`` root."""
    columns = max(1, min(columns, len(panels) or 1))
    rows = (len(panels) + columns - 1) // columns or 1
    body = []
    for i, panel in enumerate(panels):
        r, c = divmod(i, columns)
        body.append(f'<g transform="translate({c * width},{r * height})">\n{panel}\n</g>')
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{columns * width}" '
            f'height="{rows * height}" viewBox="0 0 {columns * width} {rows * height}">\n'
            + "\n".join(body) + "\n</svg>\n")


def line_chart(series: Sequence[Series], **kw) -> str:
    width, height = kw.get("width", 480), kw.get("height", 320)
    return document([chart(series, **kw)], 1, width, height)
