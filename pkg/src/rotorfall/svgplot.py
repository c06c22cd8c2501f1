"""Standalone SVG renderers for run logs: coordinate traces vs. goals,
per-rotor PWM traces, and an orthographic 3D view of the flown path.

Everything is string-built with fixed number formatting, so the same CSV
always produces byte-identical SVG.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

WIDTH = 860
HEIGHT = 520
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 180, 44, 48

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

TRAJECTORY_FIELDS = (
    "t,x,y,z,qw,qx,qy,qz,vx,vy,vz,p,q,r,w1,w2,w3,w4,pwm1,pwm2,pwm3,pwm4".split(",")
)
GOAL_FIELDS = ("goal_x", "goal_y", "goal_z")


class CsvFormatError(ValueError):
    """Malformed log file; message carries the offending line number."""


def parse_log(path: Path | str) -> dict[str, np.ndarray]:
    """Strict CSV reader for trajectory logs.

    The header must contain the trajectory columns (goal/reward columns are
    optional); every data row must have the header's width and parse as
    floats. Raises CsvFormatError with a 1-based line number otherwise.
    """
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines()]
    if not lines:
        raise CsvFormatError("line 1: empty file")
    header = lines[0].split(",")
    missing = [c for c in TRAJECTORY_FIELDS if c not in header]
    if missing:
        raise CsvFormatError(f"line 1: missing columns {', '.join(missing)}")
    columns: list[list[float]] = [[] for _ in header]
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise CsvFormatError(
                f"line {i}: expected {len(header)} fields, found {len(parts)}"
            )
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise CsvFormatError(f"line {i}: {exc}") from None
        for col, v in zip(columns, values):
            col.append(v)
    if not columns[0]:
        raise CsvFormatError("line 2: no data rows")
    return {name: np.asarray(col) for name, col in zip(header, columns)}


def _num(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if not math.isfinite(lo) or not math.isfinite(hi):
        return [0.0]
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for m in (1.0, 2.0, 5.0, 10.0):
        if raw <= m * mag:
            step = m * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * step:
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return ticks


def _tick_label(v: float) -> str:
    return f"{v:g}"


class _Canvas:
    def __init__(self, title: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH // 2}" y="26" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{title}</text>',
        ]

    def line(self, x1, y1, x2, y2, stroke="#333", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_num(x1)}" y1="{_num(y1)}" x2="{_num(x2)}" y2="{_num(y2)}" '
            f'stroke="{stroke}" stroke-width="{width}"{d}/>'
        )

    def polyline(self, pts, stroke, width=1.5, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        coords = " ".join(f"{_num(x)},{_num(y)}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width}"{d}/>'
        )

    def text(self, x, y, s, size=12, anchor="start", fill="#222"):
        self.parts.append(
            f'<text x="{_num(x)}" y="{_num(y)}" text-anchor="{anchor}" '
            f'font-family="sans-serif" font-size="{size}" fill="{fill}">{s}</text>'
        )

    def finish(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _series_plot(title, xlabel, ylabel, series) -> str:
    """series: list of (label, xs, ys, color, dash)."""
    canvas = _Canvas(title)
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T

    all_x = np.concatenate([s[1] for s in series])
    all_y = np.concatenate([s[2] for s in series])
    xlo, xhi = float(all_x.min()), float(all_x.max())
    ylo, yhi = float(all_y.min()), float(all_y.max())
    if xhi <= xlo:
        xhi = xlo + 1.0
    if yhi <= ylo:
        yhi = ylo + 1.0
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad

    def sx(v):
        return x0 + (v - xlo) / (xhi - xlo) * (x1 - x0)

    def sy(v):
        return y0 - (v - ylo) / (yhi - ylo) * (y0 - y1)

    canvas.line(x0, y0, x1, y0)
    canvas.line(x0, y0, x0, y1)
    for t in _ticks(xlo, xhi):
        canvas.line(sx(t), y0, sx(t), y0 + 5)
        canvas.text(sx(t), y0 + 18, _tick_label(t), anchor="middle")
    for t in _ticks(ylo, yhi):
        canvas.line(x0 - 5, sy(t), x0, sy(t))
        canvas.text(x0 - 8, sy(t) + 4, _tick_label(t), anchor="end")
        canvas.line(x0, sy(t), x1, sy(t), stroke="#eee")
    canvas.text((x0 + x1) / 2, HEIGHT - 12, xlabel, anchor="middle")
    canvas.text(16, (y0 + y1) / 2, ylabel, anchor="middle")

    legend_y = MARGIN_T + 6
    for label, xs, ys, color, dash in series:
        pts = [(sx(a), sy(b)) for a, b in zip(xs, ys)]
        canvas.polyline(pts, color, dash=dash)
        canvas.line(x1 + 12, legend_y, x1 + 40, legend_y, stroke=color, width=2.0, dash=dash)
        canvas.text(x1 + 46, legend_y + 4, label)
        legend_y += 18
    return canvas.finish()


def render_coords(table: dict[str, np.ndarray]) -> str:
    """Actual x/y/z over time, with dashed goal traces when present."""
    t = table["t"]
    series = []
    for i, axis in enumerate(("x", "y", "z")):
        series.append((axis, t, table[axis], PALETTE[i], None))
    if all(g in table for g in GOAL_FIELDS):
        for i, axis in enumerate(("x", "y", "z")):
            series.append((f"goal {axis}", t, table[f"goal_{axis}"], PALETTE[i], "6,4"))
    return _series_plot("Coordinates", "time [s]", "position [m]", series)


def render_pwm(table: dict[str, np.ndarray]) -> str:
    t = table["t"]
    series = [
        (f"pwm{i}", t, table[f"pwm{i}"], PALETTE[i - 1], None) for i in (1, 2, 3, 4)
    ]
    return _series_plot("Motor PWMs", "time [s]", "PWM [0..1]", series)


def render_traj3d(table: dict[str, np.ndarray]) -> str:
    """Orthographic projection of the flown path (and goal path if logged),
    z drawn upward."""
    az = math.radians(-60.0)
    el = math.radians(28.0)

    def project(x, y, z_down):
        z = -z_down  # display up
        u = -math.sin(az) * x + math.cos(az) * y
        v = -math.cos(az) * math.sin(el) * x - math.sin(az) * math.sin(el) * y + math.cos(el) * z
        return u, -v  # svg y grows downward

    paths = [("path", table["x"], table["y"], table["z"], PALETTE[0], None)]
    if all(g in table for g in GOAL_FIELDS):
        paths.append(
            ("goal", table["goal_x"], table["goal_y"], table["goal_z"], PALETTE[1], "6,4")
        )

    projected = []
    for label, xs, ys, zs, color, dash in paths:
        pts = [project(a, b, c) for a, b, c in zip(xs, ys, zs)]
        projected.append((label, pts, color, dash))

    span = max(
        max(abs(float(v)) for v in np.concatenate([p[1], p[2], p[3]]))
        for p in paths
    )
    span = max(span, 0.5)
    axes = []
    for label, vec in (("x", (span, 0, 0)), ("y", (0, span, 0)), ("z (up)", (0, 0, -span))):
        axes.append((label, project(0, 0, 0), project(*vec)))

    all_u = [u for _, pts, _, _ in projected for u, _ in pts] + [
        p[1][0] for p in axes
    ] + [p[2][0] for p in axes]
    all_v = [v for _, pts, _, _ in projected for _, v in pts] + [
        p[1][1] for p in axes
    ] + [p[2][1] for p in axes]
    ulo, uhi = min(all_u), max(all_u)
    vlo, vhi = min(all_v), max(all_v)
    if uhi <= ulo:
        uhi = ulo + 1.0
    if vhi <= vlo:
        vhi = vlo + 1.0

    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
    scale = min((x1 - x0) / (uhi - ulo), (y0 - y1) / (vhi - vlo))

    def sx(u):
        return x0 + (u - ulo) * scale

    def sy(v):
        return y1 + (v - vlo) * scale

    canvas = _Canvas("3D trajectory (orthographic)")
    for label, p0, p1 in axes:
        canvas.line(sx(p0[0]), sy(p0[1]), sx(p1[0]), sy(p1[1]), stroke="#999")
        canvas.text(sx(p1[0]) + 4, sy(p1[1]), label, fill="#666")
    legend_y = MARGIN_T + 6
    for label, pts, color, dash in projected:
        canvas.polyline([(sx(u), sy(v)) for u, v in pts], color, dash=dash)
        canvas.line(x1 + 12, legend_y, x1 + 40, legend_y, stroke=color, width=2.0, dash=dash)
        canvas.text(x1 + 46, legend_y + 4, label)
        legend_y += 18
    ou, ov = project(0.0, 0.0, 0.0)
    canvas.text(sx(ou), sy(ov) + 14, "origin", fill="#666")
    return canvas.finish()


KINDS = {"coords": render_coords, "pwm": render_pwm, "traj3d": render_traj3d}


def render(kind: str, table: dict[str, np.ndarray]) -> str:
    if kind not in KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; one of {', '.join(KINDS)}")
    return KINDS[kind](table)
