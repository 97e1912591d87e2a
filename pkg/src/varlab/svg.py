"""Tiny SVG writers for heatmaps, line charts and bar charts."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


def _doc(width, height, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n' + "\n".join(body) + "\n</svg>\n")


def _color(t: float) -> str:
    # blue -> white -> red
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        u = t / 0.5
        r, g, b = int(255 * u), int(255 * u), 255
    else:
        u = (t - 0.5) / 0.5
        r, g, b = 255, int(255 * (1 - u)), int(255 * (1 - u))
    return f"#{r:02x}{g:02x}{b:02x}"


def _heatmap_cells(values: np.ndarray, x0: float, y0: float, size: float, vmin, vmax):
    n_rows, n_cols = values.shape
    cw, ch = size / n_cols, size / n_rows
    span = (vmax - vmin) or 1.0
    out = []
    # values[i, j]: i runs along x (left to right), j along y (bottom to top)
    for i in range(n_rows):
        for j in range(n_cols):
            c = _color((values[i, j] - vmin) / span)
            out.append(f'<rect x="{x0 + i * cw:.3f}" y="{y0 + (n_cols - 1 - j) * ch:.3f}" '
                       f'width="{cw:.3f}" height="{ch:.3f}" fill="{c}"/>')
    return out


def heatmap(values, title: str = "", size: int = 320, vmin=None, vmax=None) -> str:
    v = np.asarray(values, dtype=np.float64)
    vmin = float(v.min()) if vmin is None else vmin
    vmax = float(v.max()) if vmax is None else vmax
    body = [f'<text x="{size / 2}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>']
    body += _heatmap_cells(v, 0, 24, size, vmin, vmax)
    return _doc(size, size + 24, body)


def heatmap_grid(panels, titles, cols: int = 3, size: int = 200, vmin=0.0, vmax=1.0) -> str:
    rows = math.ceil(len(panels) / cols)
    pad = 22
    body = []
    for k, (v, t) in enumerate(zip(panels, titles)):
        r, c = divmod(k, cols)
        x0, y0 = c * (size + 8), r * (size + pad + 8)
        body.append(f'<text x="{x0 + size / 2}" y="{y0 + 15}" text-anchor="middle" '
                    f'font-size="11">{escape(t)}</text>')
        body += _heatmap_cells(np.asarray(v, dtype=np.float64), x0, y0 + pad, size, vmin, vmax)
    return _doc(cols * (size + 8), rows * (size + pad + 8), body)


def _axes(w, h, m, title, xlabel, ylabel):
    return [
        f'<text x="{w / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{m}" y1="{h - m}" x2="{w - m / 2}" y2="{h - m}" stroke="black"/>',
        f'<line x1="{m}" y1="{m / 2}" x2="{m}" y2="{h - m}" stroke="black"/>',
        f'<text x="{w / 2}" y="{h - 8}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{h / 2}" font-size="12" transform="rotate(-90 14 {h / 2})" '
        f'text-anchor="middle">{escape(ylabel)}</text>',
    ]


def line_chart(series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
               width: int = 560, height: int = 360) -> str:
    """``series`` maps a name to ``(xs, ys)``; non-finite points are skipped."""
    m = 50
    pts = [(float(x), float(y)) for xs, ys in series.values() for x, y in zip(xs, ys)
           if np.isfinite(x) and np.isfinite(y)]
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    xs_all, ys_all = zip(*pts)
    xmin, xmax = min(xs_all), max(xs_all)
    ymin, ymax = min(ys_all), max(ys_all)
    xspan, yspan = (xmax - xmin) or 1.0, (ymax - ymin) or 1.0

    def px(x):
        return m + (x - xmin) / xspan * (width - 1.5 * m)

    def py(y):
        return height - m - (y - ymin) / yspan * (height - 1.5 * m)

    body = _axes(width, height, m, title, xlabel, ylabel)
    body.append(f'<text x="{m - 4}" y="{py(ymax) + 4:.1f}" text-anchor="end" font-size="10">{ymax:.3g}</text>')
    body.append(f'<text x="{m - 4}" y="{py(ymin) + 4:.1f}" text-anchor="end" font-size="10">{ymin:.3g}</text>')
    body.append(f'<text x="{px(xmin):.1f}" y="{height - m + 14}" text-anchor="middle" font-size="10">{xmin:g}</text>')
    body.append(f'<text x="{px(xmax):.1f}" y="{height - m + 14}" text-anchor="middle" font-size="10">{xmax:g}</text>')
    for k, (name, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        coords = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}" for x, y in zip(xs, ys)
                          if np.isfinite(x) and np.isfinite(y))
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        body.append(f'<text x="{width - m}" y="{m + 14 * k}" text-anchor="end" font-size="11" '
                    f'fill="{color}">{escape(str(name))}</text>')
    return _doc(width, height, body)


def bar_chart(labels, values, title: str = "", xlabel: str = "", ylabel: str = "",
              width: int = 560, height: int = 360) -> str:
    m = 50
    vals = [float(v) if np.isfinite(v) else 0.0 for v in values]
    vmax = max(vals) if vals and max(vals) > 0 else 1.0
    n = max(len(vals), 1)
    bw = (width - 1.5 * m) / n
    body = _axes(width, height, m, title, xlabel, ylabel)
    body.append(f'<text x="{m - 4}" y="{m / 2 + 8}" text-anchor="end" font-size="10">{vmax:.3g}</text>')
    for k, (lab, v) in enumerate(zip(labels, vals)):
        h = v / vmax * (height - 1.5 * m)
        x = m + k * bw
        body.append(f'<rect x="{x + 0.1 * bw:.2f}" y="{height - m - h:.2f}" width="{0.8 * bw:.2f}" '
                    f'height="{h:.2f}" fill="{PALETTE[0]}"/>')
        body.append(f'<text x="{x + bw / 2:.2f}" y="{height - m + 14}" text-anchor="middle" '
                    f'font-size="10">{escape(str(lab))}</text>')
    return _doc(width, height, body)
