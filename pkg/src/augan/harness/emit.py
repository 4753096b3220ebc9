"""Deterministic file emitters: PPM sample grids, SVG line plots, run CSVs.

SVG layout
----------
The canvas is ``SVG_WIDTH x SVG_HEIGHT`` (640 x 400).  Data are mapped
linearly onto the plot rectangle ``x in [PLOT_LEFT, PLOT_RIGHT]`` =
[70, 490] and ``y in [PLOT_TOP, PLOT_BOTTOM]`` = [30, 350], with the data
minimum at the left/bottom edge and the maximum at the right/top edge.  So
the data corner (xmin, ymin) lands at (70, 350) and (xmax, ymax) at
(490, 30).  The legend sits right of the plot rectangle, in series order.
Coordinates are written with three decimals, so output is byte-stable.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from ..errors import ContractError, FormatError

SVG_WIDTH, SVG_HEIGHT = 640, 400
PLOT_LEFT, PLOT_RIGHT = 70, 490
PLOT_TOP, PLOT_BOTTOM = 30, 350
N_TICKS = 5
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")

RUN_COLUMNS = ("kind", "strength", "mode", "seed", "step", "L_D", "L_G", "L_bcr", "L_cntr", "proxy_fid")
SUMMARY_COLUMNS = ("kind", "strength", "mode", "n_runs", "mean_fid", "std_fid", "top15_fid")


def _write_bytes(path, payload: bytes) -> None:
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None


# --- PPM -------------------------------------------------------------------

def ppm_grid_bytes(images: np.ndarray, cols: int) -> bytes:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or len(images) == 0:
        raise ContractError(f"need a non-empty (N, C, H, W) batch, got shape {images.shape}")
    if cols < 1:
        raise ContractError(f"cols must be >= 1, got {cols}")
    n, c, h, w = images.shape
    if c == 1:
        images = np.repeat(images, 3, axis=1)
    elif c != 3:
        raise ContractError(f"PPM needs 1 or 3 channels, got {c}")
    cols = min(cols, n)
    rows = -(-n // cols)
    canvas = np.zeros((rows * h, cols * w, 3), dtype=np.uint8)
    pixels = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8).transpose(0, 2, 3, 1)
    for i in range(n):
        r, k = divmod(i, cols)
        canvas[r * h:(r + 1) * h, k * w:(k + 1) * w] = pixels[i]
    return f"P6\n{cols * w} {rows * h}\n255\n".encode("ascii") + canvas.tobytes()


def emit_ppm_grid(images: np.ndarray, cols: int, path) -> None:
    """Tile ``images`` row-major into a binary PPM; unused tiles stay black."""
    _write_bytes(path, ppm_grid_bytes(images, cols))


def read_ppm(path) -> np.ndarray:
    """Read a P6 file written by ``emit_ppm_grid`` into a (H, W, 3) uint8 array."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P6" or parts[2] != b"255":
        raise FormatError("not a P6 file with maxval 255", 0)
    w, h = (int(v) for v in parts[1].split())
    body = parts[3]
    if len(body) != w * h * 3:
        raise FormatError(f"expected {w * h * 3} pixel bytes, found {len(body)}", len(raw) - len(body))
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)


# --- SVG -------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


def _extent(values):
    lo, hi = float(min(values)), float(max(values))
    if lo == hi:
        pad = 0.5 if lo == 0 else abs(lo) * 0.05
        lo, hi = lo - pad, hi + pad
    return lo, hi


def svg_lines(series: dict, xlabel: str, ylabel: str, title: str | None = None) -> str:
    if not series:
        raise ContractError("svg plot needs at least one series")
    pts = {}
    for name, points in series.items():
        arr = np.asarray(points, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 2:
            raise ContractError(f"series {name!r} needs at least 2 (x, y) points")
        if not np.isfinite(arr).all():
            raise ContractError(f"series {name!r} has non-finite values")
        pts[name] = arr
    all_pts = np.concatenate(list(pts.values()))
    x0, x1 = _extent(all_pts[:, 0])
    y0, y1 = _extent(all_pts[:, 1])

    def px(x):
        return PLOT_LEFT + (x - x0) / (x1 - x0) * (PLOT_RIGHT - PLOT_LEFT)

    def py(y):
        return PLOT_BOTTOM - (y - y0) / (y1 - y0) * (PLOT_BOTTOM - PLOT_TOP)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
        f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
        f'<rect x="{PLOT_LEFT}" y="{PLOT_TOP}" width="{PLOT_RIGHT - PLOT_LEFT}" '
        f'height="{PLOT_BOTTOM - PLOT_TOP}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{(PLOT_LEFT + PLOT_RIGHT) / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    for i in range(N_TICKS):
        xv = x0 + (x1 - x0) * i / (N_TICKS - 1)
        yv = y0 + (y1 - y0) * i / (N_TICKS - 1)
        X, Y = _fmt(px(xv)), _fmt(py(yv))
        out.append(f'<line x1="{X}" y1="{PLOT_BOTTOM}" x2="{X}" y2="{PLOT_BOTTOM + 5}" stroke="black"/>')
        out.append(f'<text x="{X}" y="{PLOT_BOTTOM + 18}" text-anchor="middle">{_tick_label(xv)}</text>')
        out.append(f'<line x1="{PLOT_LEFT - 5}" y1="{Y}" x2="{PLOT_LEFT}" y2="{Y}" stroke="black"/>')
        out.append(f'<text x="{PLOT_LEFT - 8}" y="{Y}" text-anchor="end" dominant-baseline="middle">'
                   f'{_tick_label(yv)}</text>')
    out.append(f'<text x="{(PLOT_LEFT + PLOT_RIGHT) / 2}" y="{SVG_HEIGHT - 12}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    mid = (PLOT_TOP + PLOT_BOTTOM) / 2
    out.append(f'<text x="16" y="{mid}" text-anchor="middle" transform="rotate(-90 16 {mid})">'
               f'{escape(ylabel)}</text>')
    for i, (name, arr) in enumerate(pts.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in arr)
        out.append(f'<polyline class="series" data-name="{escape(name, {chr(34): "&quot;"})}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = PLOT_TOP + 10 + 18 * i
        out.append(f'<line x1="{PLOT_RIGHT + 15}" y1="{ly}" x2="{PLOT_RIGHT + 35}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{PLOT_RIGHT + 40}" y="{ly}" dominant-baseline="middle">'
                   f'{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg_lines(series: dict, xlabel: str, ylabel: str, path, title: str | None = None) -> None:
    """Write a line plot; ``series`` maps legend names to (x, y) point lists."""
    _write_bytes(path, svg_lines(series, xlabel, ylabel, title).encode("utf-8"))


# --- CSV -------------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, columns, rows) -> None:
    """Rows are dicts; floats are written with ``repr`` so they parse back exactly."""
    lines = [",".join(columns)]
    for row in rows:
        cells = [_cell(row.get(c)) for c in columns]
        if any("," in c or "\n" in c or '"' in c for c in cells):
            raise ContractError(f"CSV cell with a separator: {cells}")
        lines.append(",".join(cells))
    _write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


_INT_COLUMNS = {"seed", "step", "n_runs"}
_STR_COLUMNS = {"kind", "mode", "real", "fake"}


def read_csv(path) -> list[dict]:
    """Parse a CSV written by ``write_csv``: ints, floats and strings restored, blanks as None."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            row = {}
            for key, text in rec.items():
                if text == "":
                    row[key] = None
                elif key in _STR_COLUMNS:
                    row[key] = text
                elif key in _INT_COLUMNS:
                    row[key] = int(text)
                else:
                    row[key] = float(text)
            rows.append(row)
    return rows


def top_fraction_mean(values, fraction_pct: int = 15) -> float:
    """Mean of the best (lowest) ceil(fraction * n) values."""
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ContractError("top-fraction statistic of an empty set")
    k = -(-fraction_pct * len(vals) // 100)  # integer ceiling, no float rounding
    return math.fsum(vals[:k]) / k
