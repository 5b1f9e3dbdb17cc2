"""Minimal deterministic SVG line plots.

Figures are written directly as SVG markup with fixed geometry and explicit
number formatting: the same data always produces the same bytes, which keeps
plot artifacts under the reproducibility contract without pulling in a
plotting stack.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence, Tuple

__all__ = ["line_plot"]

_WIDTH = 640
_HEIGHT = 420
_MARGIN_L = 70
_MARGIN_R = 20
_MARGIN_T = 40
_MARGIN_B = 50
_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list:
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-12 * span:
        ticks.append(0.0 if abs(v) < 1e-12 * span else v)
        v += step
    return ticks


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def line_plot(
    path,
    series: Sequence[Tuple[Sequence[float], Sequence[float], str]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logy: bool = False,
    markers: bool = True,
) -> None:
    """Write a fixed-size line plot; each series is ``(xs, ys, label)``.

    With ``logy`` the y data must be positive and is drawn on a log10 scale.
    """
    pts = []
    for xs, ys, _ in series:
        for x, y in zip(xs, ys):
            if logy and y <= 0:
                continue
            pts.append((float(x), math.log10(float(y)) if logy else float(y)))
    if not pts:
        raise ValueError("nothing to plot")
    xs_all = [p[0] for p in pts]
    ys_all = [p[1] for p in pts]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad_y = 0.05 * (y_hi - y_lo)
    y_lo -= pad_y
    y_hi += pad_y

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def sx(x: float) -> float:
        return _MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return _MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">'
    )
    out.append(f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>')
    out.append(
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333333" stroke-width="1"/>'
    )
    if title:
        out.append(
            f'<text x="{_WIDTH / 2:.1f}" y="22" text-anchor="middle" '
            f'font-family="monospace" font-size="14">{title}</text>'
        )

    for tx in _nice_ticks(x_lo, x_hi):
        px = sx(tx)
        out.append(
            f'<line x1="{px:.2f}" y1="{_MARGIN_T + plot_h}" x2="{px:.2f}" '
            f'y2="{_MARGIN_T + plot_h + 5}" stroke="#333333"/>'
        )
        out.append(
            f'<text x="{px:.2f}" y="{_MARGIN_T + plot_h + 18}" text-anchor="middle" '
            f'font-family="monospace" font-size="10">{_fmt(tx)}</text>'
        )
    for ty in _nice_ticks(y_lo, y_hi):
        py = sy(ty)
        label = f"1e{_fmt(ty)}" if logy else _fmt(ty)
        out.append(
            f'<line x1="{_MARGIN_L - 5}" y1="{py:.2f}" x2="{_MARGIN_L}" y2="{py:.2f}" '
            'stroke="#333333"/>'
        )
        out.append(
            f'<text x="{_MARGIN_L - 8}" y="{py + 3:.2f}" text-anchor="end" '
            f'font-family="monospace" font-size="10">{label}</text>'
        )
    if xlabel:
        out.append(
            f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="{_HEIGHT - 12}" text-anchor="middle" '
            f'font-family="monospace" font-size="12">{xlabel}</text>'
        )
    if ylabel:
        cy = _MARGIN_T + plot_h / 2
        out.append(
            f'<text x="16" y="{cy:.1f}" text-anchor="middle" font-family="monospace" '
            f'font-size="12" transform="rotate(-90 16 {cy:.1f})">{ylabel}</text>'
        )

    for k, (xs, ys, label) in enumerate(series):
        color = _PALETTE[k % len(_PALETTE)]
        coords = []
        for x, y in zip(xs, ys):
            if logy and y <= 0:
                continue
            yy = math.log10(float(y)) if logy else float(y)
            coords.append(f"{sx(float(x)):.2f},{sy(yy):.2f}")
        if len(coords) >= 2:
            out.append(
                f'<polyline points="{" ".join(coords)}" fill="none" stroke="{color}" '
                'stroke-width="1.5"/>'
            )
        if markers:
            for c in coords:
                cx, cy = c.split(",")
                out.append(f'<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>')
        if label:
            ly = _MARGIN_T + 14 + 14 * k
            lx = _MARGIN_L + plot_w - 8
            out.append(
                f'<text x="{lx}" y="{ly}" text-anchor="end" font-family="monospace" '
                f'font-size="11" fill="{color}">{label}</text>'
            )

    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
