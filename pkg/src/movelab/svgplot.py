"""Deterministic SVG line/scatter plots.

Hand-rolled rather than delegated to a plotting library so identical inputs
produce byte-identical files; long series are min-max decimated before
rendering so file size stays bounded while extrema survive.
"""

from __future__ import annotations

import numpy as np

from .errors import PlotError

WIDTH = 960
HEIGHT = 480
MARGIN_L = 70
MARGIN_R = 20
MARGIN_T = 40
MARGIN_B = 50
MAX_POINTS_PER_SERIES = 4000

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def minmax_decimate(x: np.ndarray, y: np.ndarray, max_buckets: int):
    """Per-bucket (min, max) decimation preserving extrema and time order.

    Returns sorted unique indices into the original series; the global
    argmin/argmax always survive.
    """
    n = len(x)
    if n <= max_buckets:
        return np.arange(n)
    edges = np.linspace(0, n, max_buckets + 1).astype(int)
    widths = np.diff(edges)
    w = int(widths.max())
    # Rectangularize buckets so the arg-reductions vectorize; the padding
    # cells are masked out with +/- inf.
    grid = edges[:-1, None] + np.arange(w)[None, :]
    valid = np.arange(w)[None, :] < widths[:, None]
    vals = y[np.minimum(grid, n - 1)]
    for_max = np.where(valid & np.isfinite(vals), vals, -np.inf)
    for_min = np.where(valid & np.isfinite(vals), vals, np.inf)
    i_max = edges[:-1] + np.argmax(for_max, axis=1)
    i_min = edges[:-1] + np.argmin(for_min, axis=1)
    return np.unique(np.concatenate([i_min, i_max]))


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def emit_plot(
    series: list[tuple[np.ndarray, np.ndarray]],
    labels: list[str],
    title: str = "",
    x_label: str = "time (s)",
    y_label: str = "",
    markers: list[tuple[float, float, str]] | None = None,
    kind: str = "line",
) -> bytes:
    """Render (x, y) series as an SVG document.

    ``markers`` are (x, y, label) callouts, e.g. detected force landmarks.
    ``kind`` is "line" or "scatter".
    """
    series = [
        (np.asarray(x, dtype=float), np.asarray(y, dtype=float)) for x, y in series
    ]
    series = [(x, y) for x, y in series if len(x) and len(y)]
    if not series:
        raise PlotError("no non-empty series to plot")
    if len(labels) != len(series):
        raise PlotError(f"{len(series)} series but {len(labels)} labels")

    finite_x = np.concatenate([x[np.isfinite(x)] for x, _ in series])
    finite_y = np.concatenate([y[np.isfinite(y)] for _, y in series])
    if finite_x.size == 0 or finite_y.size == 0:
        raise PlotError("series contain no finite points")
    x_lo, x_hi = float(finite_x.min()), float(finite_x.max())
    y_lo, y_hi = float(finite_y.min()), float(finite_y.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(v):
        return MARGIN_L + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v):
        return MARGIN_T + (1.0 - (v - y_lo) / (y_hi - y_lo)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH/2:.0f}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{_escape(title)}</text>'
        )
    # axes frame and ticks
    parts.append(
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333" stroke-width="1"/>'
    )
    for tx in _ticks(x_lo, x_hi):
        px = sx(tx)
        parts.append(
            f'<line x1="{_fmt(px)}" y1="{MARGIN_T + plot_h}" x2="{_fmt(px)}" '
            f'y2="{MARGIN_T + plot_h + 5}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{_fmt(px)}" y="{MARGIN_T + plot_h + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{tx:.4g}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        py = sy(ty)
        parts.append(
            f'<line x1="{MARGIN_L - 5}" y1="{_fmt(py)}" x2="{MARGIN_L}" '
            f'y2="{_fmt(py)}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{MARGIN_L - 8}" y="{_fmt(py + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{ty:.4g}</text>'
        )
    parts.append(
        f'<text x="{MARGIN_L + plot_w / 2:.0f}" y="{HEIGHT - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{_escape(x_label)}</text>'
    )
    parts.append(
        f'<text x="16" y="{MARGIN_T + plot_h / 2:.0f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 16 {MARGIN_T + plot_h / 2:.0f})">{_escape(y_label)}</text>'
    )

    for i, (x, y) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        keep = minmax_decimate(x, y, MAX_POINTS_PER_SERIES)
        xs, ys = x[keep], y[keep]
        ok = np.isfinite(xs) & np.isfinite(ys)
        if kind == "scatter":
            for px, py in zip(xs[ok], ys[ok]):
                parts.append(
                    f'<circle cx="{_fmt(sx(px))}" cy="{_fmt(sy(py))}" r="1.5" '
                    f'fill="{color}"/>'
                )
        else:
            # split the polyline at gaps so NaNs do not bridge
            runs = np.split(np.arange(len(xs)), np.flatnonzero(~ok) + 1)
            for run in runs:
                run = run[ok[run]] if len(run) else run
                if len(run) < 2:
                    continue
                pts = " ".join(
                    f"{_fmt(sx(px))},{_fmt(sy(py))}" for px, py in zip(xs[run], ys[run])
                )
                parts.append(
                    f'<polyline fill="none" stroke="{color}" stroke-width="1.2" '
                    f'points="{pts}"/>'
                )
        # legend entry
        ly = MARGIN_T + 14 + 16 * i
        parts.append(
            f'<line x1="{MARGIN_L + plot_w - 130}" y1="{ly - 4}" '
            f'x2="{MARGIN_L + plot_w - 110}" y2="{ly - 4}" stroke="{color}" '
            f'stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{MARGIN_L + plot_w - 104}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{_escape(labels[i])}</text>'
        )

    for mx, my, label in markers or []:
        parts.append(
            f'<circle cx="{_fmt(sx(mx))}" cy="{_fmt(sy(my))}" r="4" fill="none" '
            f'stroke="#000" stroke-width="1.2"/>'
        )
        parts.append(
            f'<text x="{_fmt(sx(mx) + 6)}" y="{_fmt(sy(my) - 6)}" '
            f'font-family="sans-serif" font-size="10">{_escape(label)}</text>'
        )

    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode("utf-8")


def _escape(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )
