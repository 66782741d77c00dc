"""Deterministic result emission: CSV tables, JSON reports, and SVG plots.

CSV cells are written with ``repr(float)`` (shortest round-trip form), so a
run with identical inputs reproduces files byte for byte.  The SVG writers
are self-contained string builders: no plotting library, no timestamps.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

# viridis anchor colors, sampled evenly on [0, 1]
_VIRIDIS = (
    (0.267004, 0.004874, 0.329415),
    (0.282623, 0.140926, 0.457517),
    (0.253935, 0.265254, 0.529983),
    (0.206756, 0.371758, 0.553117),
    (0.163625, 0.471133, 0.558148),
    (0.127568, 0.566949, 0.550556),
    (0.134692, 0.658636, 0.517649),
    (0.266941, 0.748751, 0.440573),
    (0.477504, 0.821444, 0.318195),
    (0.741388, 0.873449, 0.149561),
    (0.993248, 0.906157, 0.143936),
)


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def colormap(x: float) -> str:
    """Hex color for x in [0, 1] on a viridis-like scale (0 is darkest)."""
    x = min(max(float(x), 0.0), 1.0)
    pos = x * (len(_VIRIDIS) - 1)
    i = min(int(pos), len(_VIRIDIS) - 2)
    t = pos - i
    rgb = tuple((1 - t) * a + t * b for a, b in zip(_VIRIDIS[i], _VIRIDIS[i + 1]))
    return "#%02x%02x%02x" % tuple(int(round(255 * c)) for c in rgb)


def _svg_open(width: int, height: int) -> list[str]:
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>']


def _text(x, y, s, size=12, anchor="middle") -> str:
    return (f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}">{s}</text>')


def svg_heatmap(path, grid: np.ndarray, vmax: float, title: str,
                row_labels, col_labels) -> None:
    """Cell grid with rows = channels, columns = steps; zero is darkest.

    The color scale is linear on [0, vmax]; cells are emitted row-major in
    the same order as the matching CSV.
    """
    grid = np.asarray(grid, dtype=float)
    rows, cols = grid.shape
    cell, left, top, bar_w = 34, 70, 46, 60
    width = left + cols * cell + bar_w + 60
    height = top + rows * cell + 50
    parts = _svg_open(width, height)
    parts.append(_text(width / 2, 24, title, size=14))
    # cells emitted column-major (all channels of step 1, then step 2, ...) to
    # mirror the row order of the matching CSV
    for c in range(cols):
        for r in range(rows):
            color = colormap(grid[r, c] / vmax if vmax > 0 else 0.0)
            parts.append(f'<rect x="{left + c * cell}" y="{top + r * cell}" '
                         f'width="{cell}" height="{cell}" fill="{color}" '
                         f'stroke="white" stroke-width="1"/>')
    for r, lab in enumerate(row_labels):
        parts.append(_text(left - 8, top + r * cell + cell / 2 + 4, lab, anchor="end"))
    for c, lab in enumerate(col_labels):
        parts.append(_text(left + c * cell + cell / 2, top + rows * cell + 18, lab))
    # colorbar
    bx = left + cols * cell + 24
    nseg = 32
    seg_h = rows * cell / nseg
    for i in range(nseg):
        frac = 1.0 - (i + 0.5) / nseg
        parts.append(f'<rect x="{bx}" y="{top + i * seg_h:.2f}" width="16" '
                     f'height="{seg_h + 0.5:.2f}" fill="{colormap(frac)}"/>')
    parts.append(_text(bx + 22, top + 10, _fmt(vmax), size=10, anchor="start"))
    parts.append(_text(bx + 22, top + rows * cell, "0", size=10, anchor="start"))
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def _scaled(vals, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return [(out_lo + (v - lo) / span * (out_hi - out_lo)) for v in vals]


_LINE_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_lines(path, x, series: "dict[str, np.ndarray]", title: str,
              xlabel: str = "", ylabel: str = "",
              bands: "dict[str, tuple[np.ndarray, np.ndarray]] | None" = None) -> None:
    """Line plot; optional shaded bands keyed like their center series."""
    x = np.asarray(x, dtype=float)
    width, height = 640, 420
    left, right, top, bottom = 70, 20, 46, 50
    ys = [np.asarray(v, float) for v in series.values()]
    all_y = np.concatenate(ys + [np.asarray(b, float)
                                 for pair in (bands or {}).values() for b in pair])
    ylo, yhi = float(all_y.min()), float(all_y.max())
    if yhi == ylo:
        yhi = ylo + 1.0
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    xlo, xhi = float(x.min()), float(x.max())

    def px(vals):
        return _scaled(vals, xlo, xhi, left, width - right)

    def py(vals):
        return _scaled(vals, ylo, yhi, height - bottom, top)

    parts = _svg_open(width, height)
    parts.append(_text(width / 2, 24, title, size=14))
    parts.append(f'<rect x="{left}" y="{top}" width="{width - left - right}" '
                 f'height="{height - top - bottom}" fill="none" stroke="#999"/>')
    for frac in (0.0, 0.5, 1.0):
        yv = ylo + frac * (yhi - ylo)
        parts.append(_text(left - 6, py([yv])[0] + 4, f"{yv:.3g}", size=10, anchor="end"))
        xv = xlo + frac * (xhi - xlo)
        parts.append(_text(px([xv])[0], height - bottom + 16, f"{xv:.3g}", size=10))
    if xlabel:
        parts.append(_text(width / 2, height - 12, xlabel, size=11))
    if ylabel:
        parts.append(_text(16, top - 14, ylabel, size=11, anchor="start"))
    for idx, (name, yv) in enumerate(series.items()):
        color = _LINE_COLORS[idx % len(_LINE_COLORS)]
        if bands and name in bands:
            low, high = bands[name]
            pts = list(zip(px(x), py(low))) + list(zip(px(x[::-1]), py(high[::-1])))
            path_d = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
            parts.append(f'<polygon points="{path_d}" fill="{color}" opacity="0.18"/>')
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px(x), py(np.asarray(yv))))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(_text(width - right - 6, top + 16 + 14 * idx,
                           name, size=11, anchor="end"))
        parts.append(f'<rect x="{width - right - 90}" y="{top + 8 + 14 * idx}" '
                     f'width="12" height="4" fill="{color}"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def svg_bars(path, labels, values, title: str, ylabel: str = "") -> None:
    values = [float(v) for v in values]
    width, height = 520, 360
    left, right, top, bottom = 70, 20, 46, 60
    vmax = max(values + [0.0]) or 1.0
    plot_h = height - top - bottom
    slot = (width - left - right) / max(len(values), 1)
    parts = _svg_open(width, height)
    parts.append(_text(width / 2, 24, title, size=14))
    for i, (lab, val) in enumerate(zip(labels, values)):
        h = plot_h * val / vmax
        x0 = left + i * slot + 0.15 * slot
        parts.append(f'<rect x="{x0:.1f}" y="{top + plot_h - h:.1f}" '
                     f'width="{0.7 * slot:.1f}" height="{h:.1f}" fill="#1f77b4"/>')
        parts.append(_text(left + (i + 0.5) * slot, height - bottom + 18, lab, size=11))
        parts.append(_text(left + (i + 0.5) * slot, top + plot_h - h - 6,
                           _fmt(val), size=10))
    parts.append(f'<line x1="{left}" y1="{top + plot_h}" x2="{width - right}" '
                 f'y2="{top + plot_h}" stroke="#333"/>')
    if ylabel:
        parts.append(_text(16, top - 14, ylabel, size=11, anchor="start"))
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def svg_trajectories(path, nominal_states: np.ndarray, stations, title: str) -> None:
    """Planar agent orbits plus station markers."""
    states = np.asarray(nominal_states, dtype=float)
    n_agents = states.shape[1] // 2
    pts_x = states[:, 0::2]
    pts_z = states[:, 1::2]
    sx = [s[0] for s in stations]
    sz = [s[1] for s in stations]
    xlo = min(pts_x.min(), min(sx, default=0)) - 0.5
    xhi = max(pts_x.max(), max(sx, default=0)) + 0.5
    ylo = min(pts_z.min(), min(sz, default=0)) - 0.5
    yhi = max(pts_z.max(), max(sz, default=0)) + 0.5
    width = height = 480
    left, right, top, bottom = 50, 20, 46, 40

    def px(v):
        return _scaled(v, xlo, xhi, left, width - right)

    def py(v):
        return _scaled(v, ylo, yhi, height - bottom, top)

    parts = _svg_open(width, height)
    parts.append(_text(width / 2, 24, title, size=14))
    for a in range(n_agents):
        color = _LINE_COLORS[a % len(_LINE_COLORS)]
        pts = " ".join(f"{xx:.2f},{yy:.2f}"
                       for xx, yy in zip(px(pts_x[:, a]), py(pts_z[:, a])))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(_text(width - right - 6, top + 16 + 14 * a, f"agent {a + 1}",
                           size=11, anchor="end"))
        parts.append(f'<rect x="{width - right - 90}" y="{top + 8 + 14 * a}" '
                     f'width="12" height="4" fill="{color}"/>')
    for i, (xx, yy) in enumerate(zip(px(sx), py(sz))):
        parts.append(f'<rect x="{xx - 4:.1f}" y="{yy - 4:.1f}" width="8" height="8" '
                     f'fill="#333"/>')
        parts.append(_text(xx + 8, yy - 6, f"S{i + 1}", size=10, anchor="start"))
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
