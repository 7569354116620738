"""Minimal deterministic SVG chart emission: log-scale error curves, grouped
bars and per-cell heatmaps.  No plotting dependency: the charts are static
result displays, written directly as SVG primitives."""

from __future__ import annotations

import math

import numpy as np

from ..fields import StructuredMesh

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 36, 52


def _esc(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))


class _Svg:
    def __init__(self, width=_W, height=_H):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>']

    def line(self, x1, y1, x2, y2, color="#444", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
            f'stroke="{color}" stroke-width="{width}"{d}/>')

    def polyline(self, pts, color, width=1.6):
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"/>')

    def polygon(self, pts, fill, opacity=1.0):
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        self.parts.append(
            f'<polygon points="{coords}" fill="{fill}" '
            f'fill-opacity="{opacity}" stroke="none"/>')

    def rect(self, x, y, w, h, fill):
        self.parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" '
            f'fill="{fill}"/>')

    def text(self, x, y, s, size=12, anchor="middle", color="#000", rotate=None):
        r = f' transform="rotate({rotate} {x:.2f} {y:.2f})"' if rotate else ""
        self.parts.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" '
            f'font-size="{size}" text-anchor="{anchor}" fill="{color}"{r}>'
            f'{_esc(s)}</text>')

    def save(self, path):
        self.parts.append("</svg>")
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(self.parts) + "\n")


def _log_ticks(lo, hi):
    lo_e = math.floor(math.log10(lo))
    hi_e = math.ceil(math.log10(hi))
    return [10.0 ** e for e in range(lo_e, hi_e + 1)]


def _lin_ticks(lo, hi, n=6):
    span = hi - lo or 1.0
    step = 10 ** math.floor(math.log10(span / n))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * span:
        ticks.append(t)
        t += step
    return ticks


def line_chart(path, x, series: dict, title="", xlabel="", ylabel="",
               log_y=False, band=None):
    """Plot named series against x; ``band`` is an optional (lo, hi) pair
    drawn as a shaded region behind the curves."""
    x = np.asarray(x, dtype=np.float64)
    svg = _Svg()
    ys = [np.asarray(v, dtype=np.float64) for v in series.values()]
    stack = np.concatenate(ys + ([band[0], band[1]] if band is not None else []))
    if log_y:
        stack = stack[stack > 0]
        y_lo, y_hi = float(stack.min()), float(stack.max())
        ticks = _log_ticks(y_lo, y_hi)
        y_lo, y_hi = min(ticks), max(ticks)

        def ty(v):
            v = max(v, y_lo * 1e-3)
            return _H - _MB - (math.log10(v) - math.log10(y_lo)) / \
                (math.log10(y_hi) - math.log10(y_lo)) * (_H - _MT - _MB)
    else:
        y_lo, y_hi = float(stack.min()), float(stack.max())
        if y_hi == y_lo:
            y_hi = y_lo + 1.0
        pad = 0.05 * (y_hi - y_lo)
        y_lo, y_hi = y_lo - pad, y_hi + pad
        ticks = _lin_ticks(y_lo, y_hi)

        def ty(v):
            return _H - _MB - (v - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    x_lo, x_hi = float(x.min()), float(x.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    def tx(v):
        return _ML + (v - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    for t in ticks:
        svg.line(_ML, ty(t), _W - _MR, ty(t), color="#ddd")
        svg.text(_ML - 6, ty(t) + 4, f"{t:g}", size=10, anchor="end")
    for t in _lin_ticks(x_lo, x_hi):
        svg.line(tx(t), _H - _MB, tx(t), _MT, color="#eee")
        svg.text(tx(t), _H - _MB + 16, f"{t:g}", size=10)
    if band is not None:
        lo, hi = band
        pts = [(tx(xv), ty(lv)) for xv, lv in zip(x, lo)] + \
              [(tx(xv), ty(hv)) for xv, hv in zip(x[::-1], np.asarray(hi)[::-1])]
        svg.polygon(pts, fill="#bbbbbb", opacity=0.45)
    for i, (label, y) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        pts = [(tx(xv), ty(yv)) for xv, yv in zip(x, y)
               if not log_y or yv > 0]
        svg.polyline(pts, color)
        svg.text(_W - _MR - 6, _MT + 16 + 16 * i, label, size=11,
                 anchor="end", color=color)
    svg.line(_ML, _H - _MB, _W - _MR, _H - _MB)
    svg.line(_ML, _H - _MB, _ML, _MT)
    svg.text((_ML + _W - _MR) / 2, 20, title, size=13)
    svg.text((_ML + _W - _MR) / 2, _H - 14, xlabel, size=11)
    svg.text(16, (_MT + _H - _MB) / 2, ylabel, size=11, rotate=-90)
    svg.save(path)


def bar_chart(path, groups, series: dict, title="", ylabel="", log_y=True):
    """Grouped bars (one group per label, one bar per series entry)."""
    svg = _Svg()
    vals = np.concatenate([np.asarray(v, dtype=np.float64)
                           for v in series.values()])
    vals = vals[vals > 0] if log_y else vals
    y_lo, y_hi = float(vals.min()), float(vals.max())
    if log_y:
        ticks = _log_ticks(y_lo, y_hi)
        y_lo, y_hi = min(ticks) / 1.5, max(ticks)

        def ty(v):
            return _H - _MB - (math.log10(max(v, y_lo)) - math.log10(y_lo)) / \
                (math.log10(y_hi) - math.log10(y_lo)) * (_H - _MT - _MB)
    else:
        ticks = _lin_ticks(0.0, y_hi)
        y_lo = 0.0

        def ty(v):
            return _H - _MB - (v - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    for t in ticks:
        svg.line(_ML, ty(t), _W - _MR, ty(t), color="#ddd")
        svg.text(_ML - 6, ty(t) + 4, f"{t:g}", size=10, anchor="end")
    n_groups, n_series = len(groups), len(series)
    span = (_W - _ML - _MR) / n_groups
    bar_w = span * 0.7 / n_series
    for gi, group in enumerate(groups):
        x0 = _ML + gi * span + span * 0.15
        for si, (label, v) in enumerate(series.items()):
            val = float(np.asarray(v)[gi])
            if log_y and val <= 0:
                continue
            svg.rect(x0 + si * bar_w, ty(val), bar_w * 0.92,
                     _H - _MB - ty(val), fill=_PALETTE[si % len(_PALETTE)])
        svg.text(_ML + gi * span + span / 2, _H - _MB + 16, group, size=11)
    for si, label in enumerate(series):
        svg.text(_W - _MR - 6, _MT + 16 + 16 * si, label, size=11,
                 anchor="end", color=_PALETTE[si % len(_PALETTE)])
    svg.line(_ML, _H - _MB, _W - _MR, _H - _MB)
    svg.line(_ML, _H - _MB, _ML, _MT)
    svg.text((_ML + _W - _MR) / 2, 20, title, size=13)
    svg.text(16, (_MT + _H - _MB) / 2, ylabel, size=11, rotate=-90)
    svg.save(path)


def _colormap(u: float) -> str:
    """Blue -> cyan -> yellow -> red, u in [0, 1]."""
    stops = [(0.0, (40, 40, 160)), (0.33, (40, 170, 200)),
             (0.66, (230, 220, 60)), (1.0, (200, 30, 30))]
    for (u0, c0), (u1, c1) in zip(stops[:-1], stops[1:]):
        if u <= u1:
            w = 0.0 if u1 == u0 else (u - u0) / (u1 - u0)
            r, g, b = (round(a + w * (b_ - a)) for a, b_ in zip(c0, c1))
            return f"#{r:02x}{g:02x}{b:02x}"
    return "#c81e1e"


def heatmap(path, mesh: StructuredMesh, values, title=""):
    """Per-cell colour map of a field (contour-style dump)."""
    vals = np.asarray(values, dtype=np.float64)
    lo, hi = float(vals.min()), float(vals.max())
    span = hi - lo or 1.0
    size = 520
    cw, ch = size / mesh.nx, size / mesh.ny
    svg = _Svg(width=size + 40, height=size + 60)
    grid = mesh.as_grid(vals)
    for j in range(mesh.ny):
        y = 30 + size - (j + 1) * ch
        for i in range(mesh.nx):
            svg.rect(20 + i * cw, y, cw + 0.5, ch + 0.5,
                     _colormap((grid[j, i] - lo) / span))
    svg.text(20 + size / 2, 18, f"{title} [{lo:.4g}, {hi:.4g}]", size=13)
    svg.save(path)
