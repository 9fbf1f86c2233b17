"""Static SVG text generation: RP^1 arc diagrams and angle histograms.

Output is deterministic: fixed canvas geometry, fixed number formatting,
no timestamps. Byte-identical inputs give byte-identical SVG.
"""

from __future__ import annotations

import math

import numpy as np

_PI = math.pi

CANVAS = 600
RADIUS = 250
CENTER = CANVAS // 2

# named arc styles: (stroke colour, stroke width)
_ARC_STYLES = {
    "set": ("#1f77b4", 16.0),
    "oracle": ("#d62728", 5.0),
    "aux": ("#2ca02c", 9.0),
}
_DEFAULT_STYLE = ("#7f7f7f", 9.0)


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _point(phi: float, radius: float) -> tuple[float, float]:
    # y axis flipped so angles run counterclockwise on screen
    return CENTER + radius * math.cos(phi), CENTER - radius * math.sin(phi)


def _arc_path(theta_lo: float, theta_hi: float, color: str, width: float) -> str:
    # RP^1 is a circle of circumference pi: drawing angle is twice the chart angle
    phi0, phi1 = 2.0 * theta_lo, 2.0 * theta_hi
    if phi1 - phi0 >= 2.0 * _PI - 1e-9:
        return (f'<circle cx="{CENTER}" cy="{CENTER}" r="{RADIUS}" fill="none" '
                f'stroke="{color}" stroke-width="{_fmt(width)}" />')
    x0, y0 = _point(phi0, RADIUS)
    x1, y1 = _point(phi1, RADIUS)
    large = 1 if (phi1 - phi0) > _PI else 0
    return (f'<path d="M {_fmt(x0)} {_fmt(y0)} A {RADIUS} {RADIUS} 0 {large} 0 '
            f'{_fmt(x1)} {_fmt(y1)}" fill="none" stroke="{color}" '
            f'stroke-width="{_fmt(width)}" stroke-linecap="round" />')


def svg_circle_plot(arcs: list[tuple[float, float, str]],
                    marks: list[tuple[float, str]] | None = None) -> str:
    """RP^1 as a circle with shaded arcs and labelled angular marks.

    Arcs are (theta_lo, theta_hi, style_name) with theta_hi unwrapped past
    pi for arcs crossing the seam; marks are (theta, label) drawn at 1.1
    times the circle radius.
    """
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" '
        f'viewBox="0 0 {CANVAS} {CANVAS}">',
        f'<rect width="{CANVAS}" height="{CANVAS}" fill="white" />',
        f'<circle cx="{CENTER}" cy="{CENTER}" r="{RADIUS}" fill="none" '
        f'stroke="#cccccc" stroke-width="2.000" />',
    ]
    for theta_lo, theta_hi, style in arcs:
        color, width = _ARC_STYLES.get(style, _DEFAULT_STYLE)
        parts.append(_arc_path(theta_lo, theta_hi, color, width))
    for theta, label in marks or []:
        phi = 2.0 * (theta % _PI)
        xi, yi = _point(phi, RADIUS - 12)
        xo, yo = _point(phi, RADIUS + 12)
        xl, yl = _point(phi, RADIUS * 1.1 + 14)
        parts.append(f'<line x1="{_fmt(xi)}" y1="{_fmt(yi)}" x2="{_fmt(xo)}" '
                     f'y2="{_fmt(yo)}" stroke="#000000" stroke-width="2.000" />')
        parts.append(f'<text x="{_fmt(xl)}" y="{_fmt(yl)}" font-size="20" '
                     f'font-family="monospace" text-anchor="middle" '
                     f'dominant-baseline="middle">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


_BAR_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")

_HIST_W = 800
_HIST_H = 400
_HIST_PAD = 50


def svg_measure_plot(probabilities) -> str:
    """Per-mode angle histogram of an invariant-measure estimate.

    probabilities is an (n_bins, n_modes) array of bin masses summing to 1;
    bars of the modes are overlaid with transparency.
    """
    p = np.asarray(probabilities, dtype=float)
    n_bins, n_modes = p.shape
    top = float(p.max()) if p.size and p.max() > 0 else 1.0
    plot_w = _HIST_W - 2 * _HIST_PAD
    plot_h = _HIST_H - 2 * _HIST_PAD
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_HIST_W}" height="{_HIST_H}" '
        f'viewBox="0 0 {_HIST_W} {_HIST_H}">',
        f'<rect width="{_HIST_W}" height="{_HIST_H}" fill="white" />',
        f'<line x1="{_HIST_PAD}" y1="{_HIST_H - _HIST_PAD}" x2="{_HIST_W - _HIST_PAD}" '
        f'y2="{_HIST_H - _HIST_PAD}" stroke="#000000" stroke-width="1.000" />',
        f'<text x="{_HIST_PAD}" y="{_HIST_H - _HIST_PAD + 25}" font-size="14" '
        f'font-family="monospace">0</text>',
        f'<text x="{_HIST_W - _HIST_PAD}" y="{_HIST_H - _HIST_PAD + 25}" font-size="14" '
        f'font-family="monospace" text-anchor="end">pi</text>',
    ]
    bar_w = plot_w / n_bins
    for mode in range(n_modes):
        color = _BAR_COLORS[mode % len(_BAR_COLORS)]
        for b in range(n_bins):
            if p[b, mode] <= 0:
                continue
            h = plot_h * p[b, mode] / top
            x = _HIST_PAD + b * bar_w
            y = _HIST_H - _HIST_PAD - h
            parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(bar_w)}" '
                         f'height="{_fmt(h)}" fill="{color}" fill-opacity="0.55" />')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
