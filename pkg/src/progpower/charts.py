"""Minimal deterministic SVG charts for simulation summaries.

Everything is plain string assembly with fixed precision, so identical
inputs produce byte-identical files.  Only two chart kinds are needed:
multi-series lines over sample sizes and side-by-side boxes.
"""

from __future__ import annotations

import os
from typing import Sequence

from .simlab import SummaryRow

__all__ = ["line_chart_svg", "box_chart_svg", "write_summary_charts"]

_PALETTE = (
    "#1b6ca8",
    "#c2452d",
    "#3a7d44",
    "#8856a7",
    "#b8860b",
    "#2b2b2b",
)

_WIDTH = 640
_HEIGHT = 420
_MARGIN_L = 70
_MARGIN_R = 160
_MARGIN_T = 50
_MARGIN_B = 55


def _fmt(value: float) -> str:
    return f"{value:.2f}".rstrip("0").rstrip(".")


def _coord(value: float) -> str:
    return f"{value:.2f}"


def _scale(value, lo, hi, out_lo, out_hi):
    if hi == lo:
        return 0.5 * (out_lo + out_hi)
    return out_lo + (value - lo) * (out_hi - out_lo) / (hi - lo)


def _axes(title: str, x_label: str, y_label: str, x_ticks, y_ticks, x_rng, y_rng):
    x0, x1 = _MARGIN_L, _WIDTH - _MARGIN_R
    y0, y1 = _HEIGHT - _MARGIN_B, _MARGIN_T
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH // 2}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) // 2}" y="{_HEIGHT - 14}" text-anchor="middle">{x_label}</text>',
        f'<text x="18" y="{(y0 + y1) // 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {(y0 + y1) // 2})">{y_label}</text>',
    ]
    for tick in x_ticks:
        px = _scale(tick, x_rng[0], x_rng[1], x0, x1)
        parts.append(
            f'<line x1="{_coord(px)}" y1="{y0}" x2="{_coord(px)}" y2="{y0 + 5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{_coord(px)}" y="{y0 + 18}" text-anchor="middle">{_fmt(tick)}</text>'
        )
    for tick in y_ticks:
        py = _scale(tick, y_rng[0], y_rng[1], y0, y1)
        parts.append(
            f'<line x1="{x0 - 5}" y1="{_coord(py)}" x2="{x0}" y2="{_coord(py)}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x0 - 8}" y="{_coord(py + 4)}" text-anchor="end">{_fmt(tick)}</text>'
        )
        parts.append(
            f'<line x1="{x0}" y1="{_coord(py)}" x2="{x1}" y2="{_coord(py)}" '
            f'stroke="#dddddd" stroke-width="0.5"/>'
        )
    return parts, (x0, x1, y0, y1)


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    span = hi - lo
    step = span / max(count - 1, 1)
    return [lo + i * step for i in range(count)]


def line_chart_svg(
    x_values: Sequence[float],
    series: dict[str, Sequence[float | None]],
    title: str,
    x_label: str,
    y_label: str,
    y_range: tuple[float, float] | None = None,
    reference: float | None = None,
) -> str:
    """Multi-series line chart; None values leave gaps in a series."""
    xs = list(x_values)
    all_y = [
        v for values in series.values() for v in values if v is not None
    ]
    if not all_y:
        all_y = [0.0, 1.0]
    if y_range is None:
        lo, hi = min(all_y), max(all_y)
        if reference is not None:
            lo, hi = min(lo, reference), max(hi, reference)
        pad = 0.05 * (hi - lo) if hi > lo else max(abs(hi), 1.0) * 0.05
        y_range = (lo - pad, hi + pad)
    x_rng = (min(xs), max(xs))
    parts, (x0, x1, y0, y1) = _axes(
        title, x_label, y_label, xs, _nice_ticks(*y_range), x_rng, y_range
    )
    if reference is not None:
        py = _scale(reference, y_range[0], y_range[1], y0, y1)
        parts.append(
            f'<line x1="{x0}" y1="{_coord(py)}" x2="{x1}" y2="{_coord(py)}" '
            f'stroke="#888888" stroke-dasharray="5,4"/>'
        )
    for idx, (name, values) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        points = [
            (
                _scale(x, x_rng[0], x_rng[1], x0, x1),
                _scale(v, y_range[0], y_range[1], y0, y1),
            )
            for x, v in zip(xs, values)
            if v is not None
        ]
        if len(points) >= 2:
            path = " ".join(f"{_coord(px)},{_coord(py)}" for px, py in points)
            parts.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.8"/>'
            )
        for px, py in points:
            parts.append(
                f'<circle cx="{_coord(px)}" cy="{_coord(py)}" r="3" fill="{color}"/>'
            )
        ly = _MARGIN_T + 16 * idx
        parts.append(
            f'<line x1="{x1 + 10}" y1="{ly}" x2="{x1 + 30}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{x1 + 35}" y="{ly + 4}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def box_chart_svg(
    labels: Sequence[str],
    boxes: Sequence[tuple[float, float, float, float, float]],
    title: str,
    y_label: str,
    reference: float | None = None,
) -> str:
    """Box chart from precomputed (low, q25, median, q75, high) summaries."""
    if len(labels) != len(boxes):
        raise ValueError("labels and boxes must have the same length")
    all_y = [v for box in boxes for v in box]
    if reference is not None:
        all_y.append(reference)
    lo, hi = (min(all_y), max(all_y)) if all_y else (0.0, 1.0)
    pad = 0.08 * (hi - lo) if hi > lo else max(abs(hi), 1.0) * 0.08
    y_range = (lo - pad, hi + pad)
    x_rng = (0.0, float(len(labels)))
    parts, (x0, x1, y0, y1) = _axes(
        title, "", y_label, [], _nice_ticks(*y_range), x_rng, y_range
    )
    if reference is not None:
        py = _scale(reference, y_range[0], y_range[1], y0, y1)
        parts.append(
            f'<line x1="{x0}" y1="{_coord(py)}" x2="{x1}" y2="{_coord(py)}" '
            f'stroke="#888888" stroke-dasharray="5,4"/>'
        )
    slot = (x1 - x0) / max(len(labels), 1)
    half = 0.28 * slot
    for idx, (label, (b_lo, q25, med, q75, b_hi)) in enumerate(zip(labels, boxes)):
        color = _PALETTE[idx % len(_PALETTE)]
        cx = x0 + (idx + 0.5) * slot
        y_lo = _scale(b_lo, y_range[0], y_range[1], y0, y1)
        y_q25 = _scale(q25, y_range[0], y_range[1], y0, y1)
        y_med = _scale(med, y_range[0], y_range[1], y0, y1)
        y_q75 = _scale(q75, y_range[0], y_range[1], y0, y1)
        y_hi = _scale(b_hi, y_range[0], y_range[1], y0, y1)
        parts.append(
            f'<line x1="{_coord(cx)}" y1="{_coord(y_lo)}" x2="{_coord(cx)}" '
            f'y2="{_coord(y_q25)}" stroke="{color}"/>'
        )
        parts.append(
            f'<line x1="{_coord(cx)}" y1="{_coord(y_q75)}" x2="{_coord(cx)}" '
            f'y2="{_coord(y_hi)}" stroke="{color}"/>'
        )
        parts.append(
            f'<rect x="{_coord(cx - half)}" y="{_coord(y_q75)}" width="{_coord(2 * half)}" '
            f'height="{_coord(max(y_q25 - y_q75, 0.5))}" fill="{color}" fill-opacity="0.25" '
            f'stroke="{color}"/>'
        )
        parts.append(
            f'<line x1="{_coord(cx - half)}" y1="{_coord(y_med)}" x2="{_coord(cx + half)}" '
            f'y2="{_coord(y_med)}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_coord(cx)}" y="{y0 + 18}" text-anchor="middle">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def _slug(text: str) -> str:
    return text.replace("/", "_").replace("+", "-plus-").replace(" ", "_")


def write_summary_charts(summary: Sequence[SummaryRow], out_dir: str) -> list[str]:
    """Coverage and rejection line charts per scenario, and a relative-SE box
    chart per (scenario, n); returns the written paths in a fixed order."""
    os.makedirs(out_dir, exist_ok=True)
    groups: dict[str, list[SummaryRow]] = {}
    for row in summary:
        groups.setdefault(row.scenario, []).append(row)
    written = []
    for scenario in sorted(groups):
        rows = groups[scenario]
        ns = sorted({row.n_trial for row in rows})
        estimators = list(dict.fromkeys(row.estimator for row in rows))
        by_key = {(row.estimator, row.n_trial): row for row in rows}

        for metric, label, ref in (
            ("coverage", "CI coverage", 0.95),
            ("rejection_rate", "rejection rate", None),
        ):
            series = {
                est: [getattr(by_key.get((est, n)), metric, None) for n in ns]
                for est in estimators
            }
            svg = line_chart_svg(
                [float(n) for n in ns],
                series,
                f"{scenario}: {label}",
                "trial size",
                label,
                reference=ref,
            )
            path = os.path.join(out_dir, f"{metric}_{_slug(scenario)}.svg")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(svg)
            written.append(path)

        for n in ns:
            labels, boxes = [], []
            for est in estimators:
                row = by_key.get((est, n))
                if row is None or row.rel_se_median is None:
                    continue
                labels.append(est)
                boxes.append(
                    (
                        row.rel_se_p05,
                        row.rel_se_q25,
                        row.rel_se_median,
                        row.rel_se_q75,
                        row.rel_se_p95,
                    )
                )
            if not labels:
                continue
            svg = box_chart_svg(
                labels,
                boxes,
                f"{scenario}, n={n}: SE relative to covariate adjustment",
                "relative SE",
                reference=1.0,
            )
            path = os.path.join(out_dir, f"relse_{_slug(scenario)}_n{n}.svg")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(svg)
            written.append(path)
    return written
