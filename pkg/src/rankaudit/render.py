"""Kernel density estimation and deterministic SVG figures.

Rendering is a pure function of its inputs: identical analysis results give
byte-identical SVG. Figures are plain SVG strings with no external assets,
so golden-file diffing works across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from html import escape

import numpy as np

from .errors import InsufficientDataError
from .fairness import DpdResult
from .rank_stats import SignificanceMap, Tier

__all__ = [
    "KdeCurve",
    "silverman_bandwidth",
    "kde",
    "render_significance_svg",
    "render_violin_svg",
]

KDE_GRID_SIZE = 256
BANDWIDTH_FLOOR = 1e-3

TIER_FILL = {
    Tier.P_LT_0_001: "#1b7837",
    Tier.P_LT_0_01: "#5aae61",
    Tier.P_LT_0_05: "#a6dba0",
    Tier.NOT_SIGNIFICANT: "#c8c8c8",
}
TIER_LABEL = {
    Tier.P_LT_0_001: "p < 0.001",
    Tier.P_LT_0_01: "p < 0.01",
    Tier.P_LT_0_05: "p < 0.05",
    Tier.NOT_SIGNIFICANT: "not significant",
}
FAMILY_PALETTE = (
    "#8c2d04",
    "#2166ac",
    "#d4a017",
    "#6a3d9a",
    "#1a9850",
    "#c51b7d",
    "#636363",
    "#e08214",
)
MEAN_LINE_COLOR = "#d7191c"


@dataclass(frozen=True, eq=False)
class KdeCurve:
    """Gaussian-kernel density over a uniform grid on [0, 1].

    The density is evaluated on the grid and clipped (not reflected) at the
    boundaries; ``clipped_mass`` reports how much probability fell outside.
    """

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    n: int
    mean: float
    clipped_mass: float


def silverman_bandwidth(samples: np.ndarray) -> float:
    """0.9 * min(sd, IQR/1.34) * n^(-1/5), floored to keep degenerate data finite."""
    x = np.asarray(samples, dtype=np.float64)
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75.0, 25.0])
    iqr = float(q75 - q25)
    h = 0.9 * min(sd, iqr / 1.34) * len(x) ** (-0.2)
    return max(h, BANDWIDTH_FLOOR)


def kde(samples, bandwidth: float | None = None) -> KdeCurve:
    """Gaussian KDE of scores on a 256-point uniform grid over [0, 1]."""
    x = np.asarray(list(samples), dtype=np.float64)
    if x.size < 2:
        raise InsufficientDataError(f"KDE needs at least 2 samples, got {x.size}")
    if bandwidth is None:
        h = silverman_bandwidth(x)
    else:
        if not (bandwidth > 0):
            raise InsufficientDataError(f"bandwidth must be positive, got {bandwidth!r}")
        h = float(bandwidth)
    grid = np.linspace(0.0, 1.0, KDE_GRID_SIZE)
    z = (grid[:, None] - x[None, :]) / h
    density = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * math.sqrt(2.0 * math.pi))
    mass = float(np.trapezoid(density, grid))
    return KdeCurve(
        grid=grid,
        density=density,
        bandwidth=h,
        n=int(x.size),
        mean=float(np.mean(x)),
        clipped_mass=max(0.0, 1.0 - mass),
    )


def _f(value: float) -> str:
    """Fixed float formatting so output bytes are stable."""
    return format(float(value), ".2f")


def _family_colors(smap: SignificanceMap) -> dict[str, str]:
    labels: list[str] = []
    for m in smap.methods:
        fam = smap.family.get(m, "")
        if fam and fam not in labels:
            labels.append(fam)
    return {fam: FAMILY_PALETTE[i % len(FAMILY_PALETTE)] for i, fam in enumerate(labels)}


def render_significance_svg(smap: SignificanceMap) -> str:
    """M x M heatmap: row method asserted better than column method.

    Cell fill encodes the confidence tier of the Bonferroni-adjusted
    one-sided p-value; colored strips along the axes mark model families.
    """
    methods = smap.methods
    m = len(methods)
    cell = 26
    label_w = max(len(name) for name in methods) * 7 + 14
    strip = 8
    gap = 3
    grid_x = label_w + strip + gap
    grid_y = label_w + strip + gap
    legend_h = 64
    width = grid_x + m * cell + 20
    height = grid_y + m * cell + legend_h + 20
    fam_color = _family_colors(smap)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for r, row_name in enumerate(methods):
        y = grid_y + r * cell
        parts.append(
            f'<text x="{label_w - 4}" y="{y + cell - 8}" text-anchor="end">{escape(row_name)}</text>'
        )
        fam = smap.family.get(row_name, "")
        if fam:
            parts.append(
                f'<rect x="{label_w}" y="{y + 1}" width="{strip - 2}" height="{cell - 2}" '
                f'fill="{fam_color[fam]}"><title>{escape(fam)}</title></rect>'
            )
    for c, col_name in enumerate(methods):
        x = grid_x + c * cell
        parts.append(
            f'<text x="{x + cell - 8}" y="{label_w - 4}" text-anchor="end" '
            f'transform="rotate(-90 {x + cell - 8} {label_w - 4})">{escape(col_name)}</text>'
        )
        fam = smap.family.get(col_name, "")
        if fam:
            parts.append(
                f'<rect x="{x + 1}" y="{label_w}" width="{cell - 2}" height="{strip - 2}" '
                f'fill="{fam_color[fam]}"><title>{escape(fam)}</title></rect>'
            )
    for r in range(m):
        for c in range(m):
            x = grid_x + c * cell
            y = grid_y + r * cell
            if r == c:
                parts.append(
                    f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                    f'fill="#f5f5f5" stroke="#ffffff"/>'
                )
                continue
            tier = smap.tiers[r][c]
            fill = TIER_FILL[tier] if tier is not None else "#ffffff"
            title = (
                f"{methods[r]} better than {methods[c]}: "
                f"p_adj={smap.p_adj[r, c]!r} ({TIER_LABEL[tier] if tier else 'n/a'})"
            )
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" '
                f'stroke="#ffffff"><title>{escape(title)}</title></rect>'
            )
    ly = grid_y + m * cell + 18
    lx = grid_x
    for tier in (Tier.P_LT_0_001, Tier.P_LT_0_01, Tier.P_LT_0_05, Tier.NOT_SIGNIFICANT):
        parts.append(
            f'<rect x="{lx}" y="{ly}" width="14" height="14" fill="{TIER_FILL[tier]}"/>'
        )
        parts.append(f'<text x="{lx + 18}" y="{ly + 11}">{escape(TIER_LABEL[tier])}</text>')
        lx += 18 + len(TIER_LABEL[tier]) * 7 + 14
    parts.append(
        f'<text x="{grid_x}" y="{ly + 32}">row outperforms column, one-sided; '
        f"Bonferroni k={smap.k_comparisons}, alpha={_f(smap.alpha)}</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _half_violin_path(
    curve: KdeCurve, center_x: float, half_width: float, max_density: float, side: int, y_of
) -> str:
    points = []
    for g, d in zip(curve.grid, curve.density):
        x = center_x + side * (d / max_density) * half_width
        points.append(f"{_f(x)},{_f(y_of(g))}")
    first_y = _f(y_of(curve.grid[0]))
    last_y = _f(y_of(curve.grid[-1]))
    return (
        f"M {_f(center_x)},{first_y} L " + " L ".join(points) + f" L {_f(center_x)},{last_y} Z"
    )


def render_violin_svg(
    left: KdeCurve,
    left_label: str,
    right: KdeCurve,
    right_label: str,
    dpd: DpdResult,
) -> str:
    """Split violin: two half-densities mirrored about a vertical axis.

    Score runs on the vertical axis; each half is scaled to the joint maximum
    density. Solid red segments mark each side's mean; the parity gap between
    the two groups is annotated at the top.
    """
    width, height = 420, 440
    top, bottom = 52, 46
    plot_h = height - top - bottom
    center_x = width / 2
    half_width = 150.0
    max_density = max(float(left.density.max()), float(right.density.max()), 1e-12)

    def y_of(score: float) -> float:
        return top + (1.0 - score) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = y_of(tick)
        parts.append(
            f'<line x1="40" y1="{_f(y)}" x2="{width - 20}" y2="{_f(y)}" '
            f'stroke="#e0e0e0" stroke-width="1"/>'
        )
        parts.append(f'<text x="36" y="{_f(y + 4)}" text-anchor="end">{_f(tick)}</text>')
    parts.append(
        f'<line x1="{_f(center_x)}" y1="{top}" x2="{_f(center_x)}" y2="{top + plot_h}" '
        f'stroke="#9e9e9e" stroke-width="1"/>'
    )
    parts.append(
        f'<path d="{_half_violin_path(left, center_x, half_width, max_density, -1, y_of)}" '
        f'fill="#74a9cf" fill-opacity="0.8" stroke="#2b5c8a" stroke-width="1"/>'
    )
    parts.append(
        f'<path d="{_half_violin_path(right, center_x, half_width, max_density, +1, y_of)}" '
        f'fill="#fdae6b" fill-opacity="0.8" stroke="#a85c1c" stroke-width="1"/>'
    )
    for curve, side in ((left, -1), (right, +1)):
        y = _f(y_of(curve.mean))
        x2 = center_x + side * half_width
        parts.append(
            f'<line x1="{_f(center_x)}" y1="{y}" x2="{_f(x2)}" y2="{y}" '
            f'stroke="{MEAN_LINE_COLOR}" stroke-width="2"/>'
        )
    parts.append(
        f'<text x="{_f(center_x - half_width / 2)}" y="{height - 18}" text-anchor="middle">'
        f"{escape(left_label)} (n={left.n})</text>"
    )
    parts.append(
        f'<text x="{_f(center_x + half_width / 2)}" y="{height - 18}" text-anchor="middle">'
        f"{escape(right_label)} (n={right.n})</text>"
    )
    parts.append(
        f'<text x="{_f(center_x)}" y="20" text-anchor="middle">{escape(dpd.method)}</text>'
    )
    parts.append(
        f'<text x="{_f(center_x)}" y="36" text-anchor="middle">'
        f"DPD ({dpd.mode.value}) = {format(dpd.value, '.4f')}"
        f"{' [flagged]' if dpd.flagged else ''}</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
