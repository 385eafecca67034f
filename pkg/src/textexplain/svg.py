"""Minimal deterministic SVG charts (no rendering dependency)."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

W, H = 720, 420
ML, MR, MT, MB = 70, 20, 40, 110


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]


def _axis(lo: float, hi: float, y0: float, y1: float, label: str, log: bool) -> list[str]:
    out = [f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{H - MB}" stroke="black"/>']
    for t in np.linspace(0, 1, 5):
        v = lo + t * (hi - lo)
        y = y0 - t * (y0 - y1)
        shown = 10**v if log else v
        out.append(f'<line x1="{ML - 4}" y1="{_fmt(y)}" x2="{ML}" y2="{_fmt(y)}" stroke="black"/>')
        out.append(f'<text x="{ML - 6}" y="{_fmt(y + 4)}" text-anchor="end">{shown:.3g}</text>')
    out.append(
        f'<text x="16" y="{(MT + H - MB) / 2:.1f}" transform="rotate(-90 16 {(MT + H - MB) / 2:.1f})" text-anchor="middle">{escape(label)}</text>'
    )
    return out


def boxplot(groups: Sequence[tuple[str, Sequence[float]]], title: str, ylabel: str, log: bool = False) -> str:
    """One box (quartiles, median, 1.5 IQR whiskers, outlier dots) per labeled group."""
    data = []
    for label, vals in groups:
        v = np.asarray([x for x in vals if x is not None], dtype=np.float64)
        if log:
            v = np.log10(v[v > 0])
        data.append((label, v))
    allv = np.concatenate([v for _, v in data if v.size]) if any(v.size for _, v in data) else np.zeros(1)
    lo, hi = float(allv.min()), float(allv.max())
    if hi <= lo:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    y0, y1 = H - MB, MT

    def sy(v):
        return y0 - (v - lo) / (hi - lo) * (y0 - y1)

    out = _header(title) + _axis(lo, hi, y0, y1, ylabel + (" (log10)" if log else ""), log)
    slot = (W - ML - MR) / max(1, len(data))
    for i, (label, v) in enumerate(data):
        cx = ML + slot * (i + 0.5)
        bw = min(40.0, slot * 0.6)
        out.append(
            f'<text x="{_fmt(cx)}" y="{H - MB + 14}" text-anchor="end" transform="rotate(-35 {_fmt(cx)} {H - MB + 14})">{escape(label)}</text>'
        )
        if v.size == 0:
            out.append(f'<text x="{_fmt(cx)}" y="{_fmt((y0 + y1) / 2)}" text-anchor="middle">n/a</text>')
            continue
        q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
        iqr = q3 - q1
        inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
        wlo, whi = inside.min(), inside.max()
        out.append(f'<line x1="{_fmt(cx)}" y1="{_fmt(sy(wlo))}" x2="{_fmt(cx)}" y2="{_fmt(sy(whi))}" stroke="black"/>')
        out.append(
            f'<rect x="{_fmt(cx - bw / 2)}" y="{_fmt(sy(q3))}" width="{_fmt(bw)}" height="{_fmt(max(sy(q1) - sy(q3), 0.5))}" fill="#9ecae1" stroke="black"/>'
        )
        out.append(f'<line x1="{_fmt(cx - bw / 2)}" y1="{_fmt(sy(med))}" x2="{_fmt(cx + bw / 2)}" y2="{_fmt(sy(med))}" stroke="#d62728" stroke-width="2"/>')
        for o in v[(v < wlo) | (v > whi)]:
            out.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(sy(o))}" r="2" fill="none" stroke="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def frontier_scatter(points: Sequence[tuple[str, float, float, bool]], xlabel: str, ylabel: str) -> str:
    """Scatter of (label, x, y, on_frontier); frontier points joined by a polyline sorted by x."""
    xs = np.array([p[1] for p in points], dtype=np.float64)
    ys = np.array([p[2] for p in points], dtype=np.float64)

    def rng(a):
        lo, hi = float(a.min()), float(a.max())
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        pad = 0.08 * (hi - lo)
        return lo - pad, hi + pad

    xlo, xhi = rng(xs)
    ylo, yhi = rng(ys)
    x0, x1 = ML, W - MR
    y0, y1 = H - MB, MT

    def px(v):
        return x0 + (v - xlo) / (xhi - xlo) * (x1 - x0)

    def py(v):
        return y0 - (v - ylo) / (yhi - ylo) * (y0 - y1)

    out = _header(f"{ylabel} vs {xlabel}") + _axis(ylo, yhi, y0, y1, ylabel, False)
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    for t in np.linspace(0, 1, 5):
        v = xlo + t * (xhi - xlo)
        out.append(f'<text x="{_fmt(px(v))}" y="{y0 + 16}" text-anchor="middle">{v:.3g}</text>')
    out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{y0 + 36}" text-anchor="middle">{escape(xlabel)}</text>')
    front = sorted((p for p in points if p[3]), key=lambda p: (p[1], p[2]))
    if len(front) > 1:
        pts = " ".join(f"{_fmt(px(p[1]))},{_fmt(py(p[2]))}" for p in front)
        out.append(f'<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="1.5"/>')
    for label, x, y, on in points:
        fill = "#d62728" if on else "#7f7f7f"
        out.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="4" fill="{fill}"/>')
        out.append(f'<text x="{_fmt(px(x) + 6)}" y="{_fmt(py(y) - 6)}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
