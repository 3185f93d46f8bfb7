"""
Minimal deterministic SVG line plots.

Every number is printed with a fixed precision and nothing depends on the
clock or the platform, so one CSV always renders to the same bytes.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from pathlib import Path
from xml.sax.saxutils import escape

from .tables import SchemaMismatch, read_table

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=150, top=40, bottom=55)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

KINDS = {
    # kind: (required columns, x column, y column, series key, log x, x label, y label)
    "fidelity_curve": (("variant", "N_r", "N", "F"), "N", "F", "variant", True, "readouts N", "fidelity F"),
    "signal": (("variant", "N_r", "N", "signal"), "N", "signal", "variant", False, "readouts N", "C0 - C1 (photons)"),
    "nr_sweep": (("axis", "value", "variant", "F_max"), "value", "F_max", "variant", False, "correction period N_r", "peak fidelity"),
    "field_sweep": (("axis", "value", "variant", "N_r", "improvement"), "value", "improvement", "N_r", False, "B0 (mT)", "improvement F_ec / F_plain"),
}


def _num(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


def _label(v: float) -> str:
    if v != 0 and (abs(v) >= 1e5 or abs(v) < 1e-3):
        return f"{v:.0e}"
    return f"{v:.6g}"


def _series(rows, kind: str):
    required, xcol, ycol, key, logx, _, _ = KINDS[kind]
    series: OrderedDict = OrderedDict()
    for row in rows:
        if kind == "fidelity_curve" or kind == "signal":
            name = row["variant"] if row["variant"] == "plain" else f"{row['variant']} N_r={row['N_r']}"
        elif kind == "nr_sweep":
            if row["axis"] != "N_r":
                raise SchemaMismatch("nr_sweep needs a sweep over axis N_r")
            name = row["variant"]
        else:
            if row["axis"] != "B0":
                raise SchemaMismatch("field_sweep needs a sweep over axis B0")
            if row["variant"] == "plain":
                continue
            name = f"N_r={row['N_r']}"
        try:
            x, y = float(row[xcol]), float(row[ycol])
        except ValueError:
            raise SchemaMismatch(f"non-numeric {xcol}/{ycol} value in row {row}") from None
        if kind == "field_sweep":
            x *= 1000.0
        series.setdefault(name, []).append((x, y))
    if not series:
        raise SchemaMismatch(f"no plottable rows for {kind}")
    return series


def render(rows, kind: str, title: str = "") -> str:
    if kind not in KINDS:
        raise SchemaMismatch(f"unknown plot kind {kind!r}")
    _, _, _, _, logx, xlabel, ylabel = KINDS[kind]
    series = _series(rows, kind)
    pts = [p for s in series.values() for p in s]
    xs = [p[0] for p in pts if not logx or p[0] > 0]
    ys = [p[1] for p in pts if math.isfinite(p[1])]
    if not xs or not ys:
        raise SchemaMismatch("nothing finite to plot")
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(min(ys), 0.0), max(ys)
    if kind == "field_sweep":
        y0 = min(ys)
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - (pad if y0 != 0 else 0), y1 + pad
    if logx:
        lx0 = math.floor(math.log10(x0))
        lx1 = max(math.ceil(math.log10(x1)), lx0 + 1)
        fx = lambda x: (math.log10(x) - lx0) / (lx1 - lx0)
        xticks = [10.0**k for k in range(lx0, lx1 + 1)]
    else:
        if x1 == x0:
            x1 = x0 + 1.0
        fx = lambda x: (x - x0) / (x1 - x0)
        xticks = _ticks(x0, x1)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    sx = lambda x: MARGIN["left"] + fx(x) * pw
    sy = lambda y: MARGIN["top"] + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    left, bottom = MARGIN["left"], HEIGHT - MARGIN["bottom"]
    out.append(f'<rect x="{left}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for t in xticks:
        X = sx(t)
        out.append(f'<line x1="{_num(X)}" y1="{bottom}" x2="{_num(X)}" y2="{bottom + 5}" stroke="black"/>')
        out.append(f'<text x="{_num(X)}" y="{bottom + 18}" text-anchor="middle">{_label(t)}</text>')
    for t in _ticks(y0, y1):
        Y = sy(t)
        out.append(f'<line x1="{left - 5}" y1="{_num(Y)}" x2="{left}" y2="{_num(Y)}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{_num(Y + 4)}" text-anchor="end">{_label(t)}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    cy = MARGIN["top"] + ph / 2
    out.append(f'<text x="18" y="{cy:.2f}" text-anchor="middle" transform="rotate(-90 18 {cy:.2f})">{escape(ylabel)}</text>')

    for i, (name, points) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in sorted(points)
                          if math.isfinite(y) and (not logx or x > 0))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = MARGIN["top"] + 12 + 18 * i
        lx = WIDTH - MARGIN["right"] + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_csv(csv_path, kind: str, svg_path=None, title: str = "") -> Path:
    if kind not in KINDS:
        raise SchemaMismatch(f"unknown plot kind {kind!r}; choose from {', '.join(KINDS)}")
    rows = read_table(csv_path, KINDS[kind][0])
    svg = render(rows, kind, title)
    svg_path = Path(svg_path) if svg_path else Path(csv_path).with_suffix(f".{kind}.svg")
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    svg_path.write_text(svg)
    return svg_path
