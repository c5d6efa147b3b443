"""Dependency-free SVG rendering: morphology grids, simulation frames, and
fitness curves with std bands. Output is deterministic and diffable."""
from __future__ import annotations

import numpy as np

from .morpho import MorphGenome, VoxelType
from .sim import SimState

VOXEL_COLORS = {
    VoxelType.RIGID: "#000000",
    VoxelType.SOFT: "#808080",
    VoxelType.H_ACTUATOR: "#add8e6",
    VoxelType.V_ACTUATOR: "#ffa500",
}

METHOD_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]


def _f(v: float) -> str:
    return f"{v:.4f}".rstrip("0").rstrip(".")


def morphology_svg(genome: MorphGenome, cell: int = 24) -> str:
    """Colored voxel grid; empty cells are left blank."""
    w, h = genome.width * cell, genome.height * cell
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w + 2}" height="{h + 2}" '
        f'viewBox="-1 -1 {w + 2} {h + 2}">'
    ]
    for r in range(genome.height):
        for c in range(genome.width):
            vtype = genome.cell(c, r)
            if vtype == VoxelType.EMPTY:
                continue
            parts.append(
                f'<rect x="{c * cell}" y="{r * cell}" width="{cell}" height="{cell}" '
                f'fill="{VOXEL_COLORS[vtype]}" stroke="#ffffff" stroke-width="1"/>'
            )
    parts.append(f'<rect x="0" y="0" width="{w}" height="{h}" fill="none" stroke="#cccccc"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def frame_svg(state: SimState, width: int = 480, height: int = 240, scale: float = 400.0) -> str:
    """One simulation frame: ground line, springs, point masses."""
    xs = state.pos[:, 0]
    x_off = 40.0 - float(xs.min()) * 0.0  # fixed origin keeps motion visible
    ground_y = height - 30.0

    def sx(x):
        return x_off + x * scale

    def sy(y):
        return ground_y - y * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#f8f8f8"/>',
        f'<line x1="0" y1="{_f(ground_y)}" x2="{width}" y2="{_f(ground_y)}" '
        f'stroke="#444444" stroke-width="2"/>',
    ]
    for i, j in zip(state.spring_i, state.spring_j):
        a, b = state.pos[int(i)], state.pos[int(j)]
        parts.append(
            f'<line x1="{_f(sx(a[0]))}" y1="{_f(sy(a[1]))}" '
            f'x2="{_f(sx(b[0]))}" y2="{_f(sy(b[1]))}" stroke="#7799bb" stroke-width="1"/>'
        )
    for k, p in enumerate(state.pos):
        color = "#223344" if k < state.robot_points else "#aa6633"
        parts.append(
            f'<circle cx="{_f(sx(p[0]))}" cy="{_f(sy(p[1]))}" r="2.5" fill="{color}"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def fitness_plot_svg(
    curves: dict[str, tuple[np.ndarray, np.ndarray]],
    width: int = 640,
    height: int = 400,
    title: str = "best fitness per generation",
) -> str:
    """Mean lines with shaded +/- std bands, one color per method."""
    margin = 50.0
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    all_lo, all_hi, max_len = [], [], 1
    for mean, std in curves.values():
        all_lo.append((np.asarray(mean) - np.asarray(std)).min())
        all_hi.append((np.asarray(mean) + np.asarray(std)).max())
        max_len = max(max_len, len(mean))
    y_lo = min(all_lo) if all_lo else 0.0
    y_hi = max(all_hi) if all_hi else 1.0
    if y_hi - y_lo < 1e-12:
        y_hi = y_lo + 1.0

    def px(gen):
        return margin + plot_w * (gen / max(max_len - 1, 1))

    def py(v):
        return margin + plot_h * (1.0 - (v - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width / 2}" y="24" text-anchor="middle" font-size="14" '
        f'font-family="sans-serif">{title}</text>',
        f'<line x1="{_f(margin)}" y1="{_f(margin + plot_h)}" x2="{_f(margin + plot_w)}" '
        f'y2="{_f(margin + plot_h)}" stroke="#000000"/>',
        f'<line x1="{_f(margin)}" y1="{_f(margin)}" x2="{_f(margin)}" '
        f'y2="{_f(margin + plot_h)}" stroke="#000000"/>',
        f'<text x="{_f(margin - 8)}" y="{_f(py(y_hi))}" text-anchor="end" font-size="10" '
        f'font-family="sans-serif">{_f(y_hi)}</text>',
        f'<text x="{_f(margin - 8)}" y="{_f(py(y_lo))}" text-anchor="end" font-size="10" '
        f'font-family="sans-serif">{_f(y_lo)}</text>',
    ]
    for idx, (name, (mean, std)) in enumerate(sorted(curves.items())):
        mean = np.asarray(mean, dtype=np.float64)
        std = np.asarray(std, dtype=np.float64)
        color = METHOD_COLORS[idx % len(METHOD_COLORS)]
        upper = [(px(g), py(v)) for g, v in enumerate(mean + std)]
        lower = [(px(g), py(v)) for g, v in enumerate(mean - std)]
        band = " ".join(f"{_f(x)},{_f(y)}" for x, y in upper + lower[::-1])
        line = " ".join(f"{_f(px(g))},{_f(py(v))}" for g, v in enumerate(mean))
        parts.append(f'<polygon points="{band}" fill="{color}" opacity="0.15"/>')
        parts.append(
            f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_f(margin + 10)}" y="{_f(margin + 16 + 16 * idx)}" font-size="11" '
            f'font-family="sans-serif" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
