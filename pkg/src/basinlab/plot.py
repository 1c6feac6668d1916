"""Static SVG charts for histogram and sweep CSV files.

Output is a pure function of the CSV text: no timestamps, fixed number
formatting, stable element order.
"""

from __future__ import annotations

import csv
import io
from html import escape

from .ensemble import HISTOGRAM_HEADER
from .sweep import SWEEP_HEADER

PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")

W, H = 640, 360
MARGIN = dict(left=56, right=16, top=32, bottom=48)


class PlotInputError(ValueError):
    pass


def _num(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def read_table(text: str) -> tuple[str | None, list[dict[str, str]]]:
    """(kind, rows) from CSV text; kind is None for an empty file."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return None, []
    reader = csv.reader(io.StringIO("\n".join(lines)))
    header = tuple(next(reader))
    if header == HISTOGRAM_HEADER:
        kind = "histogram"
    elif header == SWEEP_HEADER:
        kind = "sweep"
    else:
        raise PlotInputError(f"row 1: unrecognized header {','.join(header)!r}")
    rows = []
    for lineno, fields in enumerate(reader, start=2):
        if len(fields) != len(header):
            raise PlotInputError(f"row {lineno}: expected {len(header)} fields, got {len(fields)}")
        rows.append(dict(zip(header, fields)))
    return kind, rows


def _float(row: dict, key: str, lineno: int, optional: bool = False) -> float | None:
    v = row[key].strip()
    if optional and v == "":
        return None
    try:
        return float(v)
    except ValueError:
        raise PlotInputError(f"row {lineno}: {key} is not a number: {v!r}") from None


class _Svg:
    def __init__(self, width: int, height: int):
        self.width, self.height = width, height
        self.parts: list[str] = []

    def add(self, s: str):
        self.parts.append(s)

    def text(self, x, y, s, anchor="middle", size=11, extra=""):
        self.add(
            f'<text x="{_num(x)}" y="{_num(y)}" font-size="{size}" text-anchor="{anchor}"{extra}>'
            f"{escape(s)}</text>"
        )

    def line(self, x1, y1, x2, y2, stroke="#333"):
        self.add(
            f'<line x1="{_num(x1)}" y1="{_num(y1)}" x2="{_num(x2)}" y2="{_num(y2)}" stroke="{stroke}"/>'
        )

    def rect(self, x, y, w, h, fill, cls=None):
        c = f' class="{cls}"' if cls else ""
        self.add(
            f'<rect{c} x="{_num(x)}" y="{_num(y)}" width="{_num(w)}" height="{_num(h)}" fill="{fill}"/>'
        )

    def render(self) -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif">'
        )
        body = "\n".join(self.parts)
        return f'<?xml version="1.0" encoding="UTF-8"?>\n{head}\n<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    for step in (1, 2, 2.5, 5):
        for mag in range(-6, 12):
            top = step * 10.0**mag
            if top >= v:
                return top
    return v


def _axes(svg: _Svg, x0, y0, x1, y1, ymax, ylabel, xlabel, ticks=4):
    svg.line(x0, y1, x1, y1)
    svg.line(x0, y0, x0, y1)
    for k in range(ticks + 1):
        v = ymax * k / ticks
        y = y1 - (y1 - y0) * k / ticks
        svg.line(x0 - 4, y, x0, y)
        svg.text(x0 - 6, y + 4, _num(v), anchor="end", size=10)
    svg.text(x0 - 40, (y0 + y1) / 2, ylabel, extra=f' transform="rotate(-90 {_num(x0 - 40)} {_num((y0 + y1) / 2)})"')
    svg.text((x0 + x1) / 2, y1 + 36, xlabel)


def histogram_svg(rows: list[dict[str, str]], title: str = "Terminal wells") -> str:
    svg = _Svg(W, H)
    x0, y0 = MARGIN["left"], MARGIN["top"]
    x1, y1 = W - MARGIN["right"], H - MARGIN["bottom"]
    svg.text(W / 2, 20, title, size=13)
    parsed = []
    for lineno, r in enumerate(rows, start=2):
        try:
            parsed.append((float(r["center"]), int(r["type"]), int(r["count"])))
        except ValueError:
            raise PlotInputError(f"row {lineno}: malformed histogram row") from None
    ymax = _nice_max(max((c for _, _, c in parsed), default=0))
    _axes(svg, x0, y0, x1, y1, ymax, "count", "well center")
    if not parsed:
        svg.text((x0 + x1) / 2, (y0 + y1) / 2, "no data", size=14)
        return svg.render()
    slot = (x1 - x0) / len(parsed)
    for k, (center, typ, count) in enumerate(parsed):
        h = (y1 - y0) * count / ymax
        svg.rect(x0 + k * slot + 0.1 * slot, y1 - h, 0.8 * slot, h, PALETTE[typ % len(PALETTE)], "bar")
        svg.text(x0 + (k + 0.5) * slot, y1 + 14, _num(center), size=9)
    for typ in sorted({t for _, t, _ in parsed}):
        lx = x1 - 90
        ly = y0 + 4 + 16 * typ
        svg.rect(lx, ly, 10, 10, PALETTE[typ % len(PALETTE)])
        svg.text(lx + 14, ly + 9, f"type {typ}", anchor="start", size=10)
    return svg.render()


def sweep_svg(rows: list[dict[str, str]], title: str = "Ratio against noise level") -> str:
    parsed: dict[float, list[tuple[float, float | None]]] = {}
    for lineno, r in enumerate(rows, start=2):
        tau = _float(r, "tau", lineno)
        eps = _float(r, "epsilon", lineno)
        ratio = _float(r, "ratio_per_well", lineno, optional=True)
        parsed.setdefault(tau, []).append((eps, ratio))
    taus = sorted(parsed)
    panel_w, panel_h = 200, 240
    width = max(W, 40 + panel_w * max(1, len(taus)))
    svg = _Svg(width, panel_h + 90)
    svg.text(width / 2, 20, title, size=13)
    if not taus:
        x0, y0, x1, y1 = MARGIN["left"], MARGIN["top"], width - MARGIN["right"], panel_h + 40
        _axes(svg, x0, y0, x1, y1, 1.0, "r", "epsilon")
        svg.text((x0 + x1) / 2, (y0 + y1) / 2, "no data", size=14)
        return svg.render()
    all_r = [r for t in taus for _, r in parsed[t] if r is not None]
    ymax = _nice_max(max(all_r, default=1.0))
    for k, tau in enumerate(taus):
        cells = sorted(parsed[tau], key=lambda c: c[0])
        x0 = 50 + k * panel_w
        x1 = x0 + panel_w - 24
        y0, y1 = 40, 40 + panel_h
        svg.add(f'<g class="panel" data-tau="{tau!r}">')
        _axes(svg, x0, y0, x1, y1, ymax, "r" if k == 0 else "", "epsilon")
        svg.text((x0 + x1) / 2, y0 - 6, f"tau = {tau:g}", size=11)
        emax = max(e for e, _ in cells) or 1.0
        slot = (x1 - x0) / len(cells)
        for j, (eps, r) in enumerate(cells):
            if r is None:
                continue
            h = (y1 - y0) * min(r, ymax) / ymax
            svg.rect(x0 + j * slot + 0.1 * slot, y1 - h, 0.8 * slot, h, PALETTE[0], "bar")
        for frac in (0.0, 0.5, 1.0):
            svg.text(x0 + frac * (x1 - x0), y1 + 14, _num(frac * emax), size=9)
        svg.add("</g>")
    return svg.render()


def render(text: str, kind: str | None = None) -> str:
    """SVG for CSV ``text``; ``kind`` overrides header detection."""
    detected, rows = read_table(text)
    kind = kind or detected or "histogram"
    if detected is not None and kind != detected:
        raise PlotInputError(f"row 1: header is a {detected} table, not {kind}")
    return histogram_svg(rows) if kind == "histogram" else sweep_svg(rows)
