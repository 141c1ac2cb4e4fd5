"""Minimal SVG emitters for line plots, heat maps and box plots.

These only display results; the CSV files are the authoritative output.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
W, H = 480, 360
M_LEFT, M_RIGHT, M_TOP, M_BOTTOM = 60, 20, 30, 45


def _doc(width, height, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n{body}</svg>\n')


def _write(path, text):
    if path is not None:
        Path(path).write_text(text)
    return text


def _ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def line_plot(series: dict, path=None, title="", xlabel="", ylabel="",
              logx=False, logy=False) -> str:
    """Polyline per named series; ``series[name] = (x, y)``."""
    tx = (lambda v: math.log10(v)) if logx else float
    ty = (lambda v: math.log10(v)) if logy else float
    pts = {k: [(tx(a), ty(b)) for a, b in zip(*xy)
               if np.isfinite(a) and np.isfinite(b) and (not logx or a > 0) and (not logy or b > 0)]
           for k, xy in series.items()}
    allx = [p[0] for v in pts.values() for p in v] or [0.0, 1.0]
    ally = [p[1] for v in pts.values() for p in v] or [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = W - M_LEFT - M_RIGHT, H - M_TOP - M_BOTTOM

    def sx(v):
        return M_LEFT + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return M_TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<rect x="{M_LEFT}" y="{M_TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for v in _ticks(x0, x1):
        lab = f"{10 ** v:.3g}" if logx else f"{v:.3g}"
        out.append(f'<text x="{sx(v):.1f}" y="{H - M_BOTTOM + 15}" text-anchor="middle">{lab}</text>')
    for v in _ticks(y0, y1):
        lab = f"{10 ** v:.3g}" if logy else f"{v:.3g}"
        out.append(f'<text x="{M_LEFT - 5}" y="{sy(v) + 4:.1f}" text-anchor="end">{lab}</text>')
    for i, (name, p) in enumerate(pts.items()):
        color = _PALETTE[i % len(_PALETTE)]
        if p:
            coords = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in p)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            out.extend(f'<circle cx="{sx(a):.1f}" cy="{sy(b):.1f}" r="2.5" fill="{color}"/>'
                       for a, b in p)
        out.append(f'<text x="{M_LEFT + 8}" y="{M_TOP + 14 + 13 * i}" fill="{color}">'
                   f'{escape(str(name))}</text>')
    out.append(f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<text x="{M_LEFT + pw / 2}" y="{H - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{M_TOP + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {M_TOP + ph / 2})">{escape(ylabel)}</text>')
    return _write(path, _doc(W, H, "\n".join(out) + "\n"))


def _color(v, lo, hi):
    a = 0.0 if hi == lo else (v - lo) / (hi - lo)
    a = min(max(a, 0.0), 1.0)
    # white to dark blue
    r = int(255 * (1 - a) + 8 * a)
    g = int(255 * (1 - a) + 48 * a)
    b = int(255 * (1 - a) + 107 * a)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmaps(matrices: dict, path=None, title="", ncols=2) -> str:
    """Grid of heat maps sharing one color scale; row 0 of a matrix is drawn at the bottom."""
    names = list(matrices)
    lo = min(float(np.min(m)) for m in matrices.values())
    hi = max(float(np.max(m)) for m in matrices.values())
    cell, gap = 200, 30
    nrows = math.ceil(len(names) / ncols)
    width = ncols * (cell + gap) + gap
    height = nrows * (cell + gap + 15) + 40
    out = [f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>']
    for k, name in enumerate(names):
        M = np.asarray(matrices[name])
        p = M.shape[0]
        ox = gap + (k % ncols) * (cell + gap)
        oy = 40 + (k // ncols) * (cell + gap + 15)
        s = cell / p
        for i in range(p):
            for j in range(p):
                out.append(f'<rect x="{ox + j * s:.2f}" y="{oy + (p - 1 - i) * s:.2f}" '
                           f'width="{s + 0.05:.2f}" height="{s + 0.05:.2f}" '
                           f'fill="{_color(M[i, j], lo, hi)}"/>')
        out.append(f'<text x="{ox + cell / 2}" y="{oy + cell + 14}" text-anchor="middle">'
                   f'{escape(name)}</text>')
    return _write(path, _doc(width, height, "\n".join(out) + "\n"))


def boxplot(summary: list, path=None, title="", ylabel="prediction error") -> str:
    """Boxes from per-group ``q25``, ``q75`` and a whisker at +-``median_abs`` x 3."""
    names = [s["estimator"] for s in summary]
    lows = [min(s["q25"], -3 * s["median_abs"]) for s in summary]
    highs = [max(s["q75"], 3 * s["median_abs"]) for s in summary]
    y0, y1 = min(lows + [0.0]), max(highs + [0.0])
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = W - M_LEFT - M_RIGHT, H - M_TOP - M_BOTTOM

    def sy(v):
        return M_TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<rect x="{M_LEFT}" y="{M_TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
           f'<line x1="{M_LEFT}" x2="{M_LEFT + pw}" y1="{sy(0):.1f}" y2="{sy(0):.1f}" '
           f'stroke="#aaa" stroke-dasharray="3,3"/>']
    for v in _ticks(y0, y1):
        out.append(f'<text x="{M_LEFT - 5}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    step = pw / max(len(names), 1)
    for i, s in enumerate(summary):
        cx = M_LEFT + step * (i + 0.5)
        bw = step * 0.5
        color = _PALETTE[i % len(_PALETTE)]
        out.append(f'<line x1="{cx:.1f}" x2="{cx:.1f}" y1="{sy(lows[i]):.1f}" y2="{sy(highs[i]):.1f}" '
                   f'stroke="{color}"/>')
        top, bot = sy(s["q75"]), sy(s["q25"])
        out.append(f'<rect x="{cx - bw / 2:.1f}" y="{top:.1f}" width="{bw:.1f}" '
                   f'height="{max(bot - top, 0.5):.1f}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>')
        out.append(f'<text x="{cx:.1f}" y="{H - M_BOTTOM + 15}" text-anchor="middle">{escape(s["estimator"])}</text>')
        out.append(f'<text x="{cx:.1f}" y="{H - M_BOTTOM + 28}" text-anchor="middle" font-size="9">'
                   f'MSE {s["mse"]:.2e}</text>')
    out.append(f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<text x="14" y="{M_TOP + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {M_TOP + ph / 2})">{escape(ylabel)}</text>')
    return _write(path, _doc(W, H, "\n".join(out) + "\n"))
