"""Dependency-free SVG figures for sweeps and width profiles.

Every drawing routine is a pure function of its inputs: floats are written
through one fixed format, series are iterated in sorted order, and nothing
time- or environment-dependent enters the output, so a figure regenerated
from the same data is byte-identical (golden files pin this).
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

__all__ = ["risk_svg", "profile_svg"]

_W, _H = 640, 440
_LEFT, _RIGHT, _TOP, _BOTTOM = 64, 616, 24, 392

_PALETTE = ("#1965b0", "#dc050c", "#4eb265", "#882e72", "#f1932d")


def _f(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError("cannot place a non-finite coordinate")
    return format(float(x), ".6g")


def _text(x: float, y: float, s: str, size: int = 12, anchor: str = "start", fill: str = "#222") -> str:
    return (
        f'<text x="{_f(x)}" y="{_f(y)}" font-family="sans-serif" font-size="{size}" '
        f'text-anchor="{anchor}" fill="{fill}">{s}</text>'
    )


def _line(x1, y1, x2, y2, stroke="#222", width=1.0, dash: Optional[str] = None) -> str:
    d = "" if dash is None else f' stroke-dasharray="{dash}"'
    return (
        f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
        f'stroke="{stroke}" stroke-width="{_f(width)}"{d}/>'
    )


def _polyline(pts, stroke: str, width=1.6, dash: Optional[str] = None) -> str:
    coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
    d = "" if dash is None else f' stroke-dasharray="{dash}"'
    return f'<polyline points="{coords}" fill="none" stroke="{stroke}" stroke-width="{_f(width)}"{d}/>'


def _circle(x, y, r, fill) -> str:
    return f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{_f(r)}" fill="{fill}"/>'


class _Axes:
    """Linear map from data coordinates (already log-scaled by the caller
    where needed) to the fixed pixel rectangle."""

    def __init__(self, x0, x1, y0, y1):
        if x1 <= x0:
            x0, x1 = x0 - 0.5, x0 + 0.5
        if y1 <= y0:
            y0, y1 = y0 - 0.5, y0 + 0.5
        px, py = 0.04 * (x1 - x0), 0.06 * (y1 - y0)
        self.x0, self.x1 = x0 - px, x1 + px
        self.y0, self.y1 = y0 - py, y1 + py

    def x(self, v) -> float:
        return _LEFT + (v - self.x0) / (self.x1 - self.x0) * (_RIGHT - _LEFT)

    def y(self, v) -> float:
        return _BOTTOM - (v - self.y0) / (self.y1 - self.y0) * (_BOTTOM - _TOP)


def _document(body, title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">'
    )
    frame = (
        f'<rect x="{_LEFT}" y="{_TOP}" width="{_RIGHT - _LEFT}" height="{_BOTTOM - _TOP}" '
        f'fill="none" stroke="#999" stroke-width="1"/>'
    )
    parts = [head, f'<rect width="{_W}" height="{_H}" fill="white"/>', frame]
    if title:
        parts.append(_text((_LEFT + _RIGHT) / 2, 16, title, size=13, anchor="middle"))
    parts.extend(body)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _decade_ticks(lo: float, hi: float):
    """Tick positions (log10 values) covering [lo, hi]: decades, with 2x and
    5x minors added when fewer than two decades fit."""
    first, last = math.ceil(lo), math.floor(hi)
    majors = list(range(first, last + 1))
    ticks = [(float(k), True) for k in majors]
    if len(majors) < 2:
        for k in range(first - 1, last + 1):
            for mult in (2.0, 5.0):
                v = k + math.log10(mult)
                if lo <= v <= hi:
                    ticks.append((v, False))
    return sorted(ticks)


def _sci(v: float) -> str:
    return format(v, ".3g")


def risk_svg(series, d: Optional[int] = None, title: str = "", value_label: str = "mean risk") -> str:
    """Log-log scatter+line figure of per-n mean risks.

    series: list of (label, [(n, risk), ...]); drawn in the given order with
    a fixed palette.  When d is given, dashed guide lines with the two
    candidate rate exponents for that dimension are anchored at the first
    series' final point.
    """
    if not series:
        raise ValueError("no series to draw")
    pts_all = [(math.log10(n), math.log10(r)) for _, pts in series for n, r in pts if r > 0]
    if not pts_all:
        raise ValueError("no positive risks to draw")
    xs = [p[0] for p in pts_all]
    ys = [p[1] for p in pts_all]
    ax = _Axes(min(xs), max(xs), min(ys), max(ys))
    body = []

    for v, major in _decade_ticks(ax.x0, ax.x1):
        x = ax.x(v)
        body.append(_line(x, _BOTTOM, x, _BOTTOM + (5 if major else 3)))
        if major:
            body.append(_text(x, _BOTTOM + 18, _sci(10.0**v), anchor="middle"))
    for v, major in _decade_ticks(ax.y0, ax.y1):
        y = ax.y(v)
        body.append(_line(_LEFT - (5 if major else 3), y, _LEFT, y))
        body.append(_text(_LEFT - 8, y + 4, _sci(10.0**v), anchor="end", size=11))
    body.append(_text((_LEFT + _RIGHT) / 2, _H - 12, "n", anchor="middle"))
    body.append(
        f'<text x="14" y="{(_TOP + _BOTTOM) / 2}" font-family="sans-serif" font-size="12" '
        f'text-anchor="middle" fill="#222" transform="rotate(-90 14 {(_TOP + _BOTTOM) / 2})">'
        f"{value_label}</text>"
    )

    for i, (label, pts) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        lp = [(ax.x(math.log10(n)), ax.y(math.log10(r))) for n, r in pts if r > 0]
        if len(lp) > 1:
            body.append(_polyline(lp, color))
        for x, y in lp:
            body.append(_circle(x, y, 3.0, color))
        body.append(_line(_RIGHT - 150, _TOP + 14 + 16 * i, _RIGHT - 126, _TOP + 14 + 16 * i, stroke=color, width=2.5))
        body.append(_text(_RIGHT - 120, _TOP + 18 + 16 * i, label, size=11))

    if d is not None:
        guides = (-2.0 / (d - 1), -4.0 / (d + 3))
        _, pts0 = series[0]
        anchor_n, anchor_r = max((p for p in pts0 if p[1] > 0), key=lambda p: p[0])
        x1 = math.log10(anchor_n)
        for j, slope in enumerate(guides):
            y1 = math.log10(anchor_r) + (j + 1) * 0.18
            x0 = max(ax.x0 + 0.02, x1 - 2.0)
            y0 = y1 - slope * (x1 - x0)
            body.append(
                _line(ax.x(x0), ax.y(y0), ax.x(x1), ax.y(y1), stroke="#555", width=1.2, dash="6,4")
            )
            body.append(
                _text(ax.x(x0) + 4, ax.y(y0) - 5, f"slope {format(slope, '.3f')}", size=11, fill="#555")
            )
    return _document(body, title)


def profile_svg(profile, title: str = "") -> str:
    """Width and H curves over the t grid (x log-scaled), with the refined
    t_f marked by a vertical dashed line."""
    t = [float(v) for v in profile.t_grid]
    W = [float(v) for v in profile.width]
    Hv = [float(v) for v in profile.H]
    if not t:
        raise ValueError("empty profile")
    xs = [math.log10(v) for v in t]
    ys = W + Hv + [0.0]
    ax = _Axes(min(xs), max(xs), min(ys), max(ys))
    body = []
    for v, major in _decade_ticks(ax.x0, ax.x1):
        x = ax.x(v)
        body.append(_line(x, _BOTTOM, x, _BOTTOM + (5 if major else 3)))
        if major:
            body.append(_text(x, _BOTTOM + 18, _sci(10.0**v), anchor="middle"))
    y_zero = ax.y(0.0)
    body.append(_line(_LEFT, y_zero, _RIGHT, y_zero, stroke="#bbb", width=1.0))
    span = ax.y1 - ax.y0
    step = 10.0 ** math.floor(math.log10(span / 2.0))
    if span / step > 8:
        step *= 2.0
    k = math.ceil(ax.y0 / step)
    while k * step <= ax.y1:
        y = ax.y(k * step)
        body.append(_line(_LEFT - 5, y, _LEFT, y))
        body.append(_text(_LEFT - 8, y + 4, _sci(k * step), anchor="end", size=11))
        k += 1
    body.append(_text((_LEFT + _RIGHT) / 2, _H - 12, "t", anchor="middle"))

    for label, vals, color in (("width", W, _PALETTE[0]), ("H", Hv, _PALETTE[1])):
        lp = [(ax.x(x), ax.y(v)) for x, v in zip(xs, vals)]
        body.append(_polyline(lp, color))
        for x, y in lp:
            body.append(_circle(x, y, 2.5, color))
    body.append(_line(_RIGHT - 150, _TOP + 14, _RIGHT - 126, _TOP + 14, stroke=_PALETTE[0], width=2.5))
    body.append(_text(_RIGHT - 120, _TOP + 18, "width", size=11))
    body.append(_line(_RIGHT - 150, _TOP + 30, _RIGHT - 126, _TOP + 30, stroke=_PALETTE[1], width=2.5))
    body.append(_text(_RIGHT - 120, _TOP + 34, "H = sigma*W - t^2/2", size=11))

    tf = float(profile.t_f_hat)
    if tf > 0:
        xtf = ax.x(math.log10(tf))
        body.append(_line(xtf, _TOP, xtf, _BOTTOM, stroke="#777", width=1.0, dash="4,4"))
        body.append(_text(xtf + 4, _TOP + 12, f"t_f={format(tf, '.4g')}", size=11, fill="#555"))
    return _document(body, title)
