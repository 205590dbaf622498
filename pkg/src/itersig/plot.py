"""Minimal deterministic SVG line/marker plots."""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 50
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def emit_plot(series, path, *, title: str = "", x_label: str = "x", y_label: str = "y",
              log_x: bool = False, log_y: bool = False, bands=(), annotations=()) -> Path:
    """Write a static SVG.

    ``series``: list of dicts with ``x``, ``y``, optional ``label`` and ``fit``
    (slope, intercept), drawn as a line over the x-range when 2+ points exist.
    ``bands``: list of (y_lo, y_hi, label) horizontal shaded bands.
    Output bytes depend only on the inputs.
    """
    path = Path(path)
    tx = (lambda v: math.log10(v)) if log_x else (lambda v: v)
    ty = (lambda v: math.log10(v)) if log_y else (lambda v: v)
    xs, ys = [], []
    for s in series:
        for x, y in zip(s["x"], s["y"]):
            if y is None or (log_x and x <= 0) or (log_y and y <= 0):
                continue
            xs.append(tx(x))
            ys.append(ty(y))
    for lo, hi, _ in bands:
        for v in (lo, hi):
            if not log_y or v > 0:
                ys.append(ty(v))
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return LEFT + (v - x0) / (x1 - x0) * (W - LEFT - RIGHT)

    def py(v):
        return H - BOTTOM - (v - y0) / (y1 - y0) * (H - TOP - BOTTOM)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
    ]
    for i, (lo, hi, label) in enumerate(bands):
        if log_y and (lo <= 0 or hi <= 0):
            continue
        a, b = py(ty(hi)), py(ty(lo))
        out.append(
            f'<rect class="band" x="{LEFT}" y="{_fmt(a)}" width="{W - LEFT - RIGHT}" '
            f'height="{_fmt(max(b - a, 1.0))}" fill="#cccccc" fill-opacity="0.5"/>'
        )
        out.append(f'<text x="{W - RIGHT - 4}" y="{_fmt(a - 3)}" text-anchor="end" font-size="11">{escape(label)}</text>')
    # axes
    out.append(f'<line x1="{LEFT}" y1="{H - BOTTOM}" x2="{W - RIGHT}" y2="{H - BOTTOM}" stroke="black"/>')
    out.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{H - BOTTOM}" stroke="black"/>')
    for v in _ticks(x0, x1):
        lab = f"{10 ** v:.3g}" if log_x else f"{v:.3g}"
        out.append(f'<text x="{_fmt(px(v))}" y="{H - BOTTOM + 16}" text-anchor="middle" font-size="11">{lab}</text>')
    for v in _ticks(y0, y1):
        lab = f"{10 ** v:.3g}" if log_y else f"{v:.3g}"
        out.append(f'<text x="{LEFT - 6}" y="{_fmt(py(v) + 4)}" text-anchor="end" font-size="11">{lab}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-size="12">{escape(x_label)}</text>')
    out.append(
        f'<text x="16" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {H / 2})">{escape(y_label)}</text>'
    )
    for i, s in enumerate(series):
        color = COLORS[i % len(COLORS)]
        pts = [(tx(x), ty(y)) for x, y in zip(s["x"], s["y"])
               if y is not None and not (log_x and x <= 0) and not (log_y and y <= 0)]
        for x, y in pts:
            out.append(f'<circle class="marker" cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="3.5" fill="{color}"/>')
        fit = s.get("fit")
        if fit is not None and len(pts) >= 2:
            slope, intercept = fit
            xa, xb = min(p[0] for p in pts), max(p[0] for p in pts)
            out.append(
                f'<line class="fit" x1="{_fmt(px(xa))}" y1="{_fmt(py(slope * xa + intercept))}" '
                f'x2="{_fmt(px(xb))}" y2="{_fmt(py(slope * xb + intercept))}" stroke="{color}" stroke-dasharray="5,3"/>'
            )
        if s.get("label"):
            out.append(
                f'<text x="{LEFT + 8}" y="{TOP + 14 * (i + 1)}" font-size="11" fill="{color}">{escape(s["label"])}</text>'
            )
    for j, text in enumerate(annotations):
        out.append(
            f'<text class="annotation" x="{W - RIGHT - 4}" y="{TOP + 14 * (j + 1)}" '
            f'text-anchor="end" font-size="11">{escape(text)}</text>'
        )
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")
    return path
