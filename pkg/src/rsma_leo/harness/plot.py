"""Self-contained SVG line charts for sweep results and dual traces."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

from .sweep import SweepResult, format_value

WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 72, "right": 150, "top": 40, "bottom": 56}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")

AXIS_LABELS = {
    "P_tot": "Total transmit power (W)",
    "I_th": "Interference threshold (W)",
    "dims": "Subcarriers x beams (K x M)",
}
SCHEME_LABELS = {"opt": "Opt", "fix_p": "Fix-p", "rand_x": "Rand-x"}
DUAL_FAMILIES = ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5")


class PlotError(ValueError):
    pass


@dataclass
class Series:
    label: str
    x: list
    y: list
    markers: bool = True


def nice_ticks(lo, hi, target=6):
    """Round-number ticks covering ``[lo, hi]``."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise PlotError("non-finite axis range")
    if hi <= lo:
        pad = abs(lo) * 0.1 or 1.0
        lo, hi = lo - pad, hi + pad
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.floor(lo / step) * step
    ticks = []
    v = start
    while v <= hi + step * 1e-9:
        ticks.append(round(v, 12))
        v += step
    if ticks[-1] < hi:
        ticks.append(round(ticks[-1] + step, 12))
    return ticks


def _fmt_tick(v):
    return f"{v:.6g}"


def line_chart_svg(series, xlabel, ylabel, title="", xtick_labels=None):
    """SVG text of a linear-axis line chart with a legend in series order.

    ``xtick_labels`` maps x positions to category labels (for non-numeric
    sweeps); otherwise numeric ticks are generated.
    """
    if not series:
        raise PlotError("nothing to plot: no series")
    points = [(x, y) for s in series for x, y in zip(s.x, s.y)
              if y is not None and math.isfinite(y)]
    if not points:
        raise PlotError("nothing to plot: every series is empty")
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    if xtick_labels:
        xticks = sorted(xtick_labels)
        x0, x1 = xticks[0] - 0.5, xticks[-1] + 0.5
    else:
        xticks = nice_ticks(min(xs), max(xs))
        x0, x1 = xticks[0], xticks[-1]
    yticks = nice_ticks(min(ys), max(ys))
    y0, y1 = yticks[0], yticks[-1]
    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - left - MARGIN["right"]
    ph = HEIGHT - top - MARGIN["bottom"]

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="24" text-anchor="middle" '
                   f'font-size="14">{escape(title)}</text>')
    # grid and ticks
    for t in yticks:
        y = sy(t)
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{_fmt_tick(t)}</text>')
    for t in xticks:
        x = sx(t)
        label = xtick_labels[t] if xtick_labels else _fmt_tick(t)
        out.append(f'<line x1="{x:.2f}" y1="{top}" x2="{x:.2f}" y2="{top + ph}" stroke="#f0f0f0"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle">{escape(label)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 14}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    # series
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = [(sx(x), sy(y)) for x, y in zip(s.x, s.y) if y is not None and math.isfinite(y)]
        if len(pts) > 1:
            path = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        if s.markers or len(pts) == 1:
            for x, y in pts:
                out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3.5" fill="{color}"/>')
        ly = top + 12 + 20 * i
        lx = left + pw + 14
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 22}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 28}" y="{ly + 4}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def sweep_series(result):
    """Mean sum rate per scheme; category positions for dimension sweeps."""
    var = result.spec.variable
    values = result.spec.values
    xs = list(range(len(values))) if var == "dims" else list(values)
    series = [Series(SCHEME_LABELS.get(s, s), xs, [row.mean_mbps for row in result.rows(s)])
              for s in result.spec.schemes]
    labels = {i: format_value(var, v) for i, v in enumerate(values)} if var == "dims" else None
    return series, labels


def trace_series(trace):
    """Norm of every multiplier family against the inner iteration count."""
    n = len(trace.get("lambda1", []))
    if n == 0:
        raise PlotError("trace is empty")
    xs = list(range(1, n + 1))
    return [Series(name, xs, list(trace[name]), markers=n == 1) for name in DUAL_FAMILIES]


def render_plot(data, path=None, title=""):
    """SVG for a :class:`SweepResult`, its JSON form, or a solve trace dict.

    Writes to ``path`` when given and returns the SVG text.
    """
    if isinstance(data, dict) and data.get("kind") == "sweep":
        data = SweepResult.from_dict(data)
    if isinstance(data, SweepResult):
        series, labels = sweep_series(data)
        svg = line_chart_svg(series, AXIS_LABELS[data.spec.variable], "Mean sum rate (Mbit/s)",
                             title, labels)
    elif isinstance(data, dict) and "lambda1" in data:
        svg = line_chart_svg(trace_series(data), "Inner iteration (cumulative)",
                             "Multiplier norm (scaled units)", title)
    else:
        raise PlotError("expected a sweep result or a dual trace")
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg)
    return svg
