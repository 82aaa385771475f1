"""Deterministic SVG charts and their CSV ground truth.

Pure string formatting, no drawing library: identical inputs give
identical bytes, which the persistence contract requires.  Curves get a
log y-axis when every plotted value is positive, linear otherwise.
"""

from __future__ import annotations

import math

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 20, 36, 46
_PALETTE = ("#1f6fb4", "#d1495b", "#3a8f5d", "#8c6bb1", "#c98c23", "#5b5b5b")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _esc(s: str) -> str:
    return (s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))


def _ticks(lo: float, hi: float, count: int = 5):
    if not (hi > lo):
        hi = lo + 1.0
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def _axes(title: str, xlabel: str, ylabel: str):
    x0, y0 = _ML, _H - _MB
    x1, y1 = _W - _MR, _MT
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="12">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="20" text-anchor="middle" font-size="14">'
        f'{_esc(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) // 2}" y="{_H - 10}" text-anchor="middle">'
        f'{_esc(xlabel)}</text>',
        f'<text x="16" y="{(y0 + y1) // 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) // 2})">{_esc(ylabel)}</text>',
    ]
    return parts, (x0, y0, x1, y1)


def render_curves(series: dict, title: str, xlabel: str = "epoch",
                  ylabel: str = "value") -> str:
    """SVG line chart; series maps name -> list of (x, y) pairs.

    Non-finite points are dropped; with no finite points at all the chart
    is just the empty axes (still a valid, deterministic document).
    """
    clean = {}
    for name, pts in series.items():
        kept = [(float(x), float(y)) for x, y in pts
                if math.isfinite(x) and math.isfinite(y)]
        if kept:
            clean[name] = kept
    parts, (x0, y0, x1, y1) = _axes(title, xlabel, ylabel)
    if clean:
        xs = [x for pts in clean.values() for x, _ in pts]
        ys = [y for pts in clean.values() for _, y in pts]
        logy = min(ys) > 0.0
        if logy:
            ys = [math.log10(y) for y in ys]
        xlo, xhi = min(xs), max(xs)
        ylo, yhi = min(ys), max(ys)
        if xhi <= xlo:
            xhi = xlo + 1.0
        if yhi <= ylo:
            yhi = ylo + 1.0

        def px(x):
            return x0 + (x - xlo) / (xhi - xlo) * (x1 - x0)

        def py(y):
            return y0 - (y - ylo) / (yhi - ylo) * (y0 - y1)

        for tx in _ticks(xlo, xhi):
            parts.append(f'<line x1="{_fmt(px(tx))}" y1="{y0}" '
                         f'x2="{_fmt(px(tx))}" y2="{y0 + 4}" stroke="black"/>')
            parts.append(f'<text x="{_fmt(px(tx))}" y="{y0 + 18}" '
                         f'text-anchor="middle">{tx:.4g}</text>')
        for ty in _ticks(ylo, yhi):
            label = 10.0 ** ty if logy else ty
            parts.append(f'<line x1="{x0 - 4}" y1="{_fmt(py(ty))}" '
                         f'x2="{x0}" y2="{_fmt(py(ty))}" stroke="black"/>')
            parts.append(f'<text x="{x0 - 6}" y="{_fmt(py(ty) + 4)}" '
                         f'text-anchor="end">{label:.3g}</text>')
        for i, (name, pts) in enumerate(clean.items()):
            color = _PALETTE[i % len(_PALETTE)]
            coords = " ".join(
                f"{_fmt(px(x))},{_fmt(py(math.log10(y) if logy else y))}"
                for x, y in pts)
            parts.append(f'<polyline points="{coords}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
            ly = _MT + 14 + 16 * i
            parts.append(f'<line x1="{x1 - 130}" y1="{ly - 4}" x2="{x1 - 110}" '
                         f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{x1 - 104}" y="{ly}">{_esc(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _heat_color(t: float) -> str:
    # blue (low) through white to red (high)
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        s = t / 0.5
        r, g, b = 43 + s * (255 - 43), 103 + s * (255 - 103), 177 + s * (255 - 177)
    else:
        s = (t - 0.5) / 0.5
        r, g, b = 255 - s * (255 - 196), 255 - s * (255 - 48), 255 - s * (255 - 60)
    return f"#{int(round(r)):02x}{int(round(g)):02x}{int(round(b)):02x}"


def render_heatmap(values, title: str) -> str:
    """SVG cell map of a 2-D array, row index downward."""
    rows = [list(map(float, r)) for r in values]
    nr = len(rows)
    nc = len(rows[0]) if nr else 0
    parts, (x0, y0, x1, y1) = _axes(title, "axis 1", "axis 0")
    if nr and nc:
        flat = [v for r in rows for v in r]
        lo, hi = min(flat), max(flat)
        span = hi - lo if hi > lo else 1.0
        cw = (x1 - x0) / nc
        ch = (y0 - y1) / nr
        for i in range(nr):
            for j in range(nc):
                t = (rows[i][j] - lo) / span
                parts.append(
                    f'<rect x="{_fmt(x0 + j * cw)}" y="{_fmt(y1 + i * ch)}" '
                    f'width="{_fmt(cw + 0.5)}" height="{_fmt(ch + 0.5)}" '
                    f'fill="{_heat_color(t)}"/>')
        parts.append(f'<text x="{x1 - 4}" y="{y0 + 18}" text-anchor="end">'
                     f'range [{lo:.4g}, {hi:.4g}]</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def series_csv(series: dict) -> str:
    """Ground-truth CSV for a curve chart: series,x,y rows at full precision."""
    lines = ["series,x,y"]
    for name, pts in series.items():
        for x, y in pts:
            lines.append(f"{name},{float(x):.17g},{float(y):.17g}")
    return "\n".join(lines) + "\n"


def read_csv(text: str):
    """(header list, rows of strings) from simple comma CSV; no quoting."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return [], []
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def history_series(text: str) -> dict:
    """Loss curves keyed by column name from a history CSV."""
    header, rows = read_csv(text)
    if not rows or "epoch" not in header:
        return {}
    ei = header.index("epoch")
    out = {}
    for ci, name in enumerate(header):
        if ci == ei:
            continue
        pts = []
        for r in rows:
            try:
                x, y = float(r[ei]), float(r[ci])
            except (ValueError, IndexError):
                continue
            pts.append((x, y))
        if pts:
            out[name] = pts
    return out
