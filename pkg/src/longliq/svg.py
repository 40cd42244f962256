"""Minimal static SVG line charts."""
from __future__ import annotations

import json
import math
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def nice_ticks(lo: float, hi: float, target: int = 6) -> list:
    """Ticks at multiples of 1, 2 or 5 times a power of ten covering [lo, hi]."""
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1.0, 2.0, 5.0, 10.0) if m * mag >= raw)
    start = math.floor(lo / step) * step
    ticks = []
    k = 0
    while start + k * step <= hi + 1e-9 * step:
        ticks.append(round(start + k * step, 12))
        k += 1
    if ticks[-1] < hi:
        ticks.append(round(start + k * step, 12))
    return ticks


def _fmt(v: float) -> str:
    return f"{v:g}"


def line_chart(series: Sequence[tuple], title: str, xlabel: str, ylabel: str,
               width: int = 720, height: int = 420, meta: Optional[dict] = None,
               hline: Optional[float] = 0.0) -> str:
    """Render ``(x, y)`` series as polylines; returns the SVG document."""
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    xs = np.concatenate([np.asarray(s[0], float) for s in series])
    ys = np.concatenate([np.asarray(s[1], float) for s in series])
    xt = nice_ticks(float(xs.min()), float(xs.max()))
    yt = nice_ticks(float(min(ys.min(), 0.0 if hline is not None else ys.min())), float(ys.max()))
    x0, x1, y0, y1 = xt[0], xt[-1], yt[0], yt[-1]

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">']
    if meta:
        out.append(f"<metadata>{escape(json.dumps(meta, sort_keys=True))}</metadata>")
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>')
    out.append(f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" '
               f'font-size="15">{escape(title)}</text>')
    for x in xt:
        out.append(f'<line x1="{px(x):.2f}" y1="{top}" x2="{px(x):.2f}" y2="{top + ph}" stroke="#e5e5e5"/>')
        out.append(f'<text x="{px(x):.2f}" y="{top + ph + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{_fmt(x)}</text>')
    for y in yt:
        out.append(f'<line x1="{left}" y1="{py(y):.2f}" x2="{left + pw}" y2="{py(y):.2f}" stroke="#e5e5e5"/>')
        out.append(f'<text x="{left - 8}" y="{py(y) + 4:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{_fmt(y)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    if hline is not None and y0 <= hline <= y1:
        out.append(f'<line x1="{left}" y1="{py(hline):.2f}" x2="{left + pw}" y2="{py(hline):.2f}" '
                   f'stroke="#888" stroke-dasharray="4,3"/>')
    for i, s in enumerate(series):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(s[0], s[1]))
        out.append(f'<polyline fill="none" stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="1.2" '
                   f'points="{pts}"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="12" transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
