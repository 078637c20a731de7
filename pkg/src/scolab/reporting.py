"""CSV and SVG emission with byte-reproducible formatting.

Floats are serialized with 17 significant digits so that emitted files
round-trip 64-bit values exactly; two runs of the same study with the
same seed therefore produce byte-identical output.
"""

from __future__ import annotations

import os
from typing import Iterable, Sequence

import numpy as np

from .problems import Dataset, empirical_risk

__all__ = [
    "format_value",
    "emit_csv",
    "read_csv",
    "emit_svg",
    "trajectory_rows",
    "TRAJECTORY_HEADER",
    "STABILITY_HEADER",
]

TRAJECTORY_HEADER = ["t", "f_empirical", "tracking_sq_error", "x_norm"]
STABILITY_HEADER = [
    "variant",
    "convexity",
    "n",
    "m",
    "T",
    "eta",
    "beta",
    "replicates",
    "eps_nu_hat",
    "eps_nu_se",
    "eps_omega_hat",
    "eps_omega_se",
]


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def emit_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("\n".join(lines) + "\n")


def _coerce(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_csv(path) -> tuple[list[str], list[list]]:
    """Parse a file written by :func:`emit_csv`; values are coerced back
    to int/float/str with empty cells becoming None."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle if line.strip() != ""]
    if not lines:
        raise ValueError(f"empty csv file {path}")
    header = lines[0].split(",")
    rows = [[_coerce(cell) for cell in line.split(",")] for line in lines[1:]]
    return header, rows


def trajectory_rows(traj, dataset: Dataset) -> list[tuple]:
    """Rows (t, empirical value, tracking gap, iterate norm) at the stored steps."""
    rows = []
    track = traj.tracking_sq_errors
    for step, point in zip(traj.stored_steps, traj.iterates):
        gap = None
        if track is not None:
            gap = float(track[step - 1])
        rows.append(
            (
                int(step),
                empirical_risk(dataset, point),
                gap,
                float(np.linalg.norm(point)),
            )
        )
    return rows


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
_WIDTH, _HEIGHT = 640, 480
_MARGIN = 56


def _axis_transform(values: np.ndarray, log: bool) -> np.ndarray:
    if log:
        if np.any(values <= 0):
            raise ValueError("log axis requires positive values")
        return np.log10(values)
    return values


def emit_svg(
    path,
    title: str,
    x_values: Sequence[float],
    series: dict[str, Sequence[float]],
    log_x: bool = False,
    log_y: bool = False,
) -> None:
    """Write a self-contained SVG line chart of the given series."""
    xs = _axis_transform(np.asarray(x_values, dtype=float), log_x)
    all_y = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    ys_all = _axis_transform(all_y, log_y)
    x_lo, x_hi = float(np.min(xs)), float(np.max(xs))
    y_lo, y_hi = float(np.min(ys_all)), float(np.max(ys_all))
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    span_x = _WIDTH - 2 * _MARGIN
    span_y = _HEIGHT - 2 * _MARGIN

    def px(x: float) -> float:
        return _MARGIN + (x - x_lo) / (x_hi - x_lo) * span_x

    def py(y: float) -> float:
        return _HEIGHT - _MARGIN - (y - y_lo) / (y_hi - y_lo) * span_y

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="monospace" font-size="14">{title}</text>',
        f'<line x1="{_MARGIN}" y1="{_HEIGHT - _MARGIN}" x2="{_WIDTH - _MARGIN}" '
        f'y2="{_HEIGHT - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" '
        f'y2="{_HEIGHT - _MARGIN}" stroke="black"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        x_label = 10**xv if log_x else xv
        y_label = 10**yv if log_y else yv
        parts.append(
            f'<text x="{px(xv):.1f}" y="{_HEIGHT - _MARGIN + 18}" text-anchor="middle" '
            f'font-family="monospace" font-size="11">{x_label:.4g}</text>'
        )
        parts.append(
            f'<text x="{_MARGIN - 6}" y="{py(yv):.1f}" text-anchor="end" '
            f'font-family="monospace" font-size="11">{y_label:.4g}</text>'
        )
    for idx, (name, values) in enumerate(series.items()):
        ys = _axis_transform(np.asarray(values, dtype=float), log_y)
        points = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        color = _PALETTE[idx % len(_PALETTE)]
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>'
        )
        parts.append(
            f'<text x="{_WIDTH - _MARGIN + 4}" y="{_MARGIN + 14 * idx}" '
            f'font-family="monospace" font-size="11" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("\n".join(parts) + "\n")
