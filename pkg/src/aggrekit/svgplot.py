"""Tiny dependency-free SVG line charts for diagnostics series."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np


def _fmt(x: float) -> str:
    return f"{x:.4g}"


def _panel(x, y, left, top, w, h, title) -> list[str]:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y)
    out = [f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="#888"/>',
           f'<text x="{left + 4}" y="{top - 6}" font-size="12">{escape(title)}</text>']
    if not np.any(ok):
        return out
    x, y = x[ok], y[ok]
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(y.min()), float(y.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        pad = abs(y0) * 0.05 or 1.0
        y0, y1 = y0 - pad, y1 + pad
    px = left + (x - x0) / (x1 - x0) * w
    py = top + h - (y - y0) / (y1 - y0) * h
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    out.append(f'<polyline fill="none" stroke="#1f5fa8" stroke-width="1.5" points="{pts}"/>')
    out += [
        f'<text x="{left - 4}" y="{top + 10}" font-size="10" text-anchor="end">{_fmt(y1)}</text>',
        f'<text x="{left - 4}" y="{top + h}" font-size="10" text-anchor="end">{_fmt(y0)}</text>',
        f'<text x="{left}" y="{top + h + 14}" font-size="10">{_fmt(x0)}</text>',
        f'<text x="{left + w}" y="{top + h + 14}" font-size="10" text-anchor="end">{_fmt(x1)}</text>',
    ]
    return out


def line_charts(t, columns: dict, width: int = 640, panel_height: int = 150) -> str:
    """Stacked charts, one per entry of ``columns`` (title -> values), sharing the t axis."""
    left, gap = 70, 40
    h_total = gap + len(columns) * (panel_height + gap)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{h_total}" '
             f'font-family="sans-serif">']
    for i, (title, vals) in enumerate(columns.items()):
        top = gap + i * (panel_height + gap)
        parts += _panel(t, vals, left, top, width - left - 20, panel_height, title)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def series_svg(series) -> str:
    return line_charts(series.t, {"mass M(t)": series.mass, "second moment I(t)": series.moment,
                                  "sup norm ||u(t)||_inf": series.linf})


def write_series_svg(series, path):
    with open(path, "w") as fh:
        fh.write(series_svg(series))

