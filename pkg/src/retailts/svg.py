"""Dependency-free SVG charts: line, scatter, histogram, density, heatmap and box plots.

Output is deterministic: identical specs give byte-identical documents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import EmptySeries, InputError

KINDS = ("line", "scatter", "histogram", "density", "heatmap", "box")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")

WIDTH, HEIGHT = 720, 440
MARGIN = dict(left=70, right=150, top=40, bottom=55)


@dataclass
class Series:
    label: str
    y: Sequence[float]
    x: Sequence[float] | None = None


@dataclass
class PlotSpec:
    kind: str
    title: str
    series: list[Series] = field(default_factory=list)
    xlabel: str = ""
    ylabel: str = ""
    bins: int = 30
    matrix: np.ndarray | None = None
    extent: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)  # heatmap x0, x1, y0, y1
    path: str | None = None

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InputError(f"unknown plot kind {self.kind!r}")
        if self.kind == "heatmap":
            if self.matrix is None or np.size(self.matrix) == 0:
                raise EmptySeries("heatmap needs a non-empty matrix")
            if not np.all(np.isfinite(self.matrix)):
                raise InputError("heatmap matrix must be finite")
            return
        if not self.series:
            raise EmptySeries("plot has no series")
        for s in self.series:
            if len(s.y) == 0:
                raise EmptySeries(f"series {s.label!r} is empty")
            if not np.all(np.isfinite(np.asarray(s.y, dtype=float))):
                raise InputError(f"series {s.label!r} has non-finite values")
            if s.x is not None:
                if len(s.x) != len(s.y):
                    raise InputError(f"series {s.label!r}: x and y lengths differ")
                if not np.all(np.isfinite(np.asarray(s.x, dtype=float))):
                    raise InputError(f"series {s.label!r} has non-finite x values")
        if self.bins < 1:
            raise InputError("bins must be positive")


def _f(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    if v == 0:
        return "0"
    return f"{v:.4g}"


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


class _Frame:
    def __init__(self, xlo, xhi, ylo, yhi):
        if xhi <= xlo:
            xlo, xhi = xlo - 0.5, xhi + 0.5
        if yhi <= ylo:
            ylo, yhi = ylo - 0.5, yhi + 0.5
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi
        self.x0 = MARGIN["left"]
        self.x1 = WIDTH - MARGIN["right"]
        self.y0 = HEIGHT - MARGIN["bottom"]
        self.y1 = MARGIN["top"]

    def px(self, x):
        return self.x0 + (np.asarray(x, dtype=float) - self.xlo) / (self.xhi - self.xlo) * (self.x1 - self.x0)

    def py(self, y):
        return self.y0 - (np.asarray(y, dtype=float) - self.ylo) / (self.yhi - self.ylo) * (self.y0 - self.y1)


def _axes(fr: _Frame, spec: PlotSpec, xticks=True) -> list[str]:
    out = [
        f'<rect x="{fr.x0}" y="{fr.y1}" width="{fr.x1 - fr.x0}" height="{fr.y0 - fr.y1}" '
        'fill="none" stroke="#333" stroke-width="1"/>'
    ]
    if xticks:
        for t in nice_ticks(fr.xlo, fr.xhi):
            if fr.xlo - 1e-12 <= t <= fr.xhi + 1e-12:
                x = _f(float(fr.px(t)))
                out.append(f'<line x1="{x}" y1="{fr.y0}" x2="{x}" y2="{fr.y0 + 5}" stroke="#333"/>')
                out.append(
                    f'<text class="tick" x="{x}" y="{fr.y0 + 18}" text-anchor="middle">{_label(t)}</text>'
                )
    for t in nice_ticks(fr.ylo, fr.yhi):
        if fr.ylo - 1e-12 <= t <= fr.yhi + 1e-12:
            y = _f(float(fr.py(t)))
            out.append(f'<line x1="{fr.x0 - 5}" y1="{y}" x2="{fr.x0}" y2="{y}" stroke="#333"/>')
            out.append(
                f'<text class="tick" x="{fr.x0 - 8}" y="{y}" text-anchor="end" dominant-baseline="middle">'
                f"{_label(t)}</text>"
            )
    cx = (fr.x0 + fr.x1) / 2
    cy = (fr.y0 + fr.y1) / 2
    out.append(f'<text class="axis" x="{_f(cx)}" y="{HEIGHT - 12}" text-anchor="middle">{escape(spec.xlabel)}</text>')
    out.append(
        f'<text class="axis" x="18" y="{_f(cy)}" text-anchor="middle" '
        f'transform="rotate(-90 18 {_f(cy)})">{escape(spec.ylabel)}</text>'
    )
    return out


def _legend(labels: Sequence[str]) -> list[str]:
    out = []
    x = WIDTH - MARGIN["right"] + 12
    for i, lab in enumerate(labels):
        y = MARGIN["top"] + 10 + 18 * i
        c = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{x}" y="{y - 6}" width="12" height="12" fill="{c}"/>')
        out.append(f'<text class="legend" x="{x + 18}" y="{y + 4}">{escape(lab)}</text>')
    return out


def _xs(s: Series) -> np.ndarray:
    return np.arange(len(s.y), dtype=float) if s.x is None else np.asarray(s.x, dtype=float)


def _range(arrays) -> tuple[float, float]:
    lo = min(float(np.min(a)) for a in arrays)
    hi = max(float(np.max(a)) for a in arrays)
    return lo, hi


def _pad(lo, hi, frac=0.05):
    span = hi - lo if hi > lo else 1.0
    return lo - frac * span, hi + frac * span


def gaussian_kde(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Gaussian kernel density with Silverman's bandwidth."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    sd = float(np.std(v, ddof=1)) if n > 1 else 0.0
    iqr = float(np.subtract(*np.percentile(v, [75, 25]))) if n > 1 else 0.0
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    bw = 0.9 * spread * n ** (-0.2) if spread > 0 else 1e-3
    z = (grid[:, None] - v[None, :]) / bw
    return np.exp(-0.5 * z * z).sum(axis=1) / (n * bw * math.sqrt(2 * math.pi))


def _body(spec: PlotSpec) -> list[str]:
    k = spec.kind
    out: list[str] = []
    if k in ("line", "scatter"):
        xlo, xhi = _range([_xs(s) for s in spec.series])
        ylo, yhi = _pad(*_range([np.asarray(s.y, dtype=float) for s in spec.series]))
        fr = _Frame(xlo, xhi, ylo, yhi)
        out += _axes(fr, spec)
        for i, s in enumerate(spec.series):
            c = PALETTE[i % len(PALETTE)]
            px, py = fr.px(_xs(s)), fr.py(s.y)
            if k == "line":
                pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(px, py))
                out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
            else:
                out.append(f'<g fill="{c}" fill-opacity="0.45">')
                out += [f'<circle cx="{_f(a)}" cy="{_f(b)}" r="2"/>' for a, b in zip(px, py)]
                out.append("</g>")
        out += _legend([s.label for s in spec.series])
    elif k == "histogram":
        vals = np.asarray(spec.series[0].y, dtype=float)
        counts, edges = np.histogram(vals, bins=spec.bins)
        fr = _Frame(float(edges[0]), float(edges[-1]), 0.0, float(counts.max()) * 1.05)
        out += _axes(fr, spec)
        c = PALETTE[0]
        for cnt, a, b in zip(counts, edges[:-1], edges[1:]):
            x0, x1 = float(fr.px(a)), float(fr.px(b))
            y = float(fr.py(cnt))
            out.append(
                f'<rect class="bar" x="{_f(x0)}" y="{_f(y)}" width="{_f(max(x1 - x0 - 1, 0.5))}" '
                f'height="{_f(fr.y0 - y)}" fill="{c}"/>'
            )
        out += _legend([spec.series[0].label])
    elif k == "density":
        lo, hi = _pad(*_range([np.asarray(s.y, dtype=float) for s in spec.series]), frac=0.1)
        grid = np.linspace(lo, hi, 200)
        dens = [gaussian_kde(np.asarray(s.y, dtype=float), grid) for s in spec.series]
        fr = _Frame(lo, hi, 0.0, max(float(d.max()) for d in dens) * 1.05)
        out += _axes(fr, spec)
        for i, d in enumerate(dens):
            c = PALETTE[i % len(PALETTE)]
            pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(fr.px(grid), fr.py(d)))
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out += _legend([s.label for s in spec.series])
    elif k == "box":
        stats = [np.percentile(np.asarray(s.y, dtype=float), [5, 25, 50, 75, 95]) for s in spec.series]
        lo, hi = _pad(min(s[0] for s in stats), max(s[-1] for s in stats))
        m = len(stats)
        fr = _Frame(0.0, float(m), lo, hi)
        out += _axes(fr, spec, xticks=False)
        for i, (s, q) in enumerate(zip(spec.series, stats)):
            c = PALETTE[i % len(PALETTE)]
            cx = float(fr.px(i + 0.5))
            w = 0.3 * (fr.x1 - fr.x0) / m
            y5, y25, y50, y75, y95 = (float(fr.py(v)) for v in q)
            out.append(f'<line x1="{_f(cx)}" y1="{_f(y5)}" x2="{_f(cx)}" y2="{_f(y95)}" stroke="#333"/>')
            out.append(
                f'<rect class="box" x="{_f(cx - w / 2)}" y="{_f(y75)}" width="{_f(w)}" '
                f'height="{_f(y25 - y75)}" fill="{c}" fill-opacity="0.6" stroke="#333"/>'
            )
            out.append(f'<line x1="{_f(cx - w / 2)}" y1="{_f(y50)}" x2="{_f(cx + w / 2)}" y2="{_f(y50)}" stroke="#000" stroke-width="2"/>')
            out.append(
                f'<text class="tick" x="{_f(cx)}" y="{fr.y0 + 18}" text-anchor="middle">{escape(s.label)}</text>'
            )
    elif k == "heatmap":
        M = np.asarray(spec.matrix, dtype=float)
        x0, x1, y0, y1 = spec.extent
        fr = _Frame(x0, x1, y0, y1)
        nx, ny = M.shape
        mlo, mhi = float(M.min()), float(M.max())
        span = mhi - mlo if mhi > mlo else 1.0
        cw = (fr.x1 - fr.x0) / nx
        ch = (fr.y0 - fr.y1) / ny
        for i in range(nx):
            for j in range(ny):
                t = (M[i, j] - mlo) / span
                out.append(
                    f'<rect class="cell" x="{_f(fr.x0 + i * cw)}" y="{_f(fr.y0 - (j + 1) * ch)}" width="{_f(cw + 0.3)}" '
                    f'height="{_f(ch + 0.3)}" fill="{_heat(t)}"/>'
                )
        out += _axes(fr, spec)
        out.append(
            f'<text class="legend" x="{WIDTH - MARGIN["right"] + 12}" y="{MARGIN["top"] + 10}">'
            f"max {_label(mhi)}</text>"
        )
        out.append(
            f'<text class="legend" x="{WIDTH - MARGIN["right"] + 12}" y="{MARGIN["top"] + 28}">'
            f"min {_label(mlo)}</text>"
        )
    return out


def _heat(t: float) -> str:
    """Dark-blue to yellow ramp."""
    t = min(max(float(t), 0.0), 1.0)
    stops = ((0.0, (13, 8, 135)), (0.5, (204, 71, 120)), (1.0, (240, 249, 33)))
    for (a, ca), (b, cb) in zip(stops, stops[1:]):
        if t <= b:
            w = (t - a) / (b - a)
            rgb = tuple(int(round(ca[i] + w * (cb[i] - ca[i]))) for i in range(3))
            return "#%02x%02x%02x" % rgb
    return "#f0f921"


def emit_svg(spec: PlotSpec) -> bytes:
    spec.validate()
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        "<style>.tick{font-size:10px}.axis{font-size:12px}.title{font-size:14px;font-weight:bold}</style>",
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text class="title" x="{WIDTH // 2}" y="22" text-anchor="middle">{escape(spec.title)}</text>',
    ]
    parts += _body(spec)
    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode("utf-8")


def write_svg(spec: PlotSpec, path=None) -> bytes:
    data = emit_svg(spec)
    target = path or spec.path
    if target is not None:
        with open(target, "wb") as fh:
            fh.write(data)
    return data
