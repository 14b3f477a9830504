"""Dependency-free SVG output for learning curves and loss histograms.

Coordinates are printed with fixed precision so identical input gives
byte-identical files.
"""

import math
from xml.sax.saxutils import escape

from trimsgd.errors import InputError

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 160, 30, 50
PALETTE = ["#000000", "#d62728", "#e6b800", "#1f77b4", "#2ca02c", "#c71585", "#ff7f0e", "#7f7f7f"]


def _fmt(v):
    return f"{v:.2f}"


def _ticks(lo, hi, count=5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _frame(title, x_label, y_label):
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444444"/>',
    ]
    if title:
        out.append(f'<text x="{LEFT}" y="{TOP - 10}" font-size="14">{escape(title)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 10}" font-size="12" '
               f'text-anchor="middle">{escape(x_label)}</text>')
    out.append(f'<text x="15" y="{TOP + ph / 2:.1f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 15 {TOP + ph / 2:.1f})">{escape(y_label)}</text>')
    return out, pw, ph


def _legend(names, colors):
    out = []
    x = WIDTH - RIGHT + 15
    for i, (name, color) in enumerate(zip(names, colors)):
        y = TOP + 15 + 18 * i
        out.append(f'<line x1="{x}" y1="{y}" x2="{x + 20}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{x + 26}" y="{y + 4}" font-size="12">{escape(name)}</text>')
    return out


def emit_plot(curves, path, title="", x_label="epoch", y_label="loss", log_y=False, x_values=None):
    """Write a line plot of named series (dict name -> sequence) to ``path``.

    Points are evenly spaced; ``x_values`` only relabels the ticks (default 1..n).
    """
    if not curves or any(len(v) == 0 for v in curves.values()):
        raise InputError("emit_plot needs at least one non-empty series")
    lengths = {len(v) for v in curves.values()}
    if len(lengths) != 1:
        raise InputError(f"series lengths differ: {sorted(lengths)}")
    n = lengths.pop()
    values = [float(v) for series in curves.values() for v in series]
    if any(not math.isfinite(v) for v in values):
        raise InputError("series contain non-finite values")
    if log_y:
        if min(values) <= 0:
            raise InputError("log y-axis needs strictly positive values")
        tf = math.log10
    else:
        tf = float
    lo, hi = tf(min(values)), tf(max(values))
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    out, pw, ph = _frame(title, x_label, y_label + (" (log)" if log_y else ""))

    def px(i):
        return LEFT + (pw * i / (n - 1) if n > 1 else pw / 2)

    def py(v):
        return TOP + ph * (1.0 - (tf(v) - lo) / (hi - lo))

    for t in _ticks(lo, hi):
        label = 10**t if log_y else t
        y = TOP + ph * (1.0 - (t - lo) / (hi - lo))
        out.append(f'<text x="{LEFT - 6}" y="{_fmt(y + 4)}" font-size="10" text-anchor="end">{label:.4g}</text>')
    xs = list(x_values) if x_values is not None else list(range(1, n + 1))
    if len(xs) != n:
        raise InputError(f"{len(xs)} x values for {n} points")
    shown = range(n) if x_values is not None else sorted({0, n - 1, (n - 1) // 2})
    for i in shown:
        out.append(f'<text x="{_fmt(px(i))}" y="{TOP + ph + 16}" font-size="10" '
                   f'text-anchor="middle">{xs[i]:.4g}</text>')
    colors = [PALETTE[i % len(PALETTE)] for i in range(len(curves))]
    for (name, series), color in zip(curves.items(), colors):
        pts = " ".join(f"{_fmt(px(i))},{_fmt(py(v))}" for i, v in enumerate(series))
        out.append(f'<polyline class="series" data-name="{escape(name)}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5" points="{pts}"/>')
    out += _legend(list(curves), colors)
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return path


def emit_histogram(hist, path, title="", labels=("original label", "noised label")):
    """Bar histogram on a log-x axis for a :class:`~trimsgd.regularize.LossHistogram`."""
    edges = [float(e) for e in hist.bin_edges]
    series = [list(map(int, hist.counts_original)), list(map(int, hist.counts_noised))]
    if not edges or len(series[0]) == 0:
        raise InputError("empty histogram")
    lx = [math.log10(e) for e in edges]
    xlo, xhi = lx[0], lx[-1]
    if xhi == xlo:
        xhi = xlo + 1.0
    top = max(max(s) for s in series) or 1
    out, pw, ph = _frame(title, "example loss (log scale)", "count")

    def px(v):
        return LEFT + pw * (v - xlo) / (xhi - xlo)

    for e in sorted({xlo, (xlo + xhi) / 2, xhi}):
        out.append(f'<text x="{_fmt(px(e))}" y="{TOP + ph + 16}" font-size="10" '
                   f'text-anchor="middle">{10**e:.3g}</text>')
    out.append(f'<text x="{LEFT - 6}" y="{TOP + 4}" font-size="10" text-anchor="end">{top}</text>')
    colors = ["#ff7f0e", "#7f7f7f"]
    for counts, color, name in zip(series, colors, labels):
        for i, c in enumerate(counts):
            if c == 0:
                continue
            x0, x1 = px(lx[i]), px(lx[i + 1])
            h = ph * c / top
            out.append(f'<rect data-name="{escape(name)}" x="{_fmt(x0)}" y="{_fmt(TOP + ph - h)}" '
                       f'width="{_fmt(max(x1 - x0, 0.5))}" height="{_fmt(h)}" fill="{color}" fill-opacity="0.55"/>')
    out += _legend(list(labels), colors)
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return path
