"""Rendering: deterministic SVG field plots and matplotlib report figures.

Field plots are written as hand-assembled SVG so identical inputs give
byte-identical files: grey streamlines of the velocity field, obstacle
outlines, the demo curve, rollout trajectories, and a translucent overlay of
the region where any constraint's influence weight exceeds 0.05.
"""

from __future__ import annotations

import numpy as np

from .errors import RenderError
from .metric import influence_weight

_CANVAS = 500.0


def _fmt(x):
    return f"{x:.4f}"


class _Canvas:
    def __init__(self, bounds):
        self.lo = np.asarray(bounds[0], dtype=float)
        self.hi = np.asarray(bounds[1], dtype=float)
        span = self.hi - self.lo
        self.scale = _CANVAS / float(np.max(span))

    def pt(self, p):
        x = (p[0] - self.lo[0]) * self.scale
        y = _CANVAS - (p[1] - self.lo[1]) * self.scale
        return _fmt(x), _fmt(y)

    def length(self, r):
        return _fmt(r * self.scale)


def _polyline(canvas, pts, stroke, width, opacity="1.0", dash=None):
    coords = " ".join(",".join(canvas.pt(p)) for p in pts)
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline fill="none" stroke="{stroke}" stroke-width="{width}" '
            f'stroke-opacity="{opacity}"{dash_attr} points="{coords}"/>')


def _shape_svg(canvas, shape, parts):
    kind = shape.to_dict()["type"]
    if kind == "circle":
        cx, cy = canvas.pt(shape.center)
        parts.append(f'<circle cx="{cx}" cy="{cy}" r="{canvas.length(shape.radius)}" '
                     f'fill="#bbbbbb" stroke="#333333" stroke-width="1.5"/>')
    elif kind == "axis_box":
        x, y = canvas.pt((shape.min_corner[0], shape.max_corner[1]))
        w = canvas.length(shape.max_corner[0] - shape.min_corner[0])
        h = canvas.length(shape.max_corner[1] - shape.min_corner[1])
        parts.append(f'<rect x="{x}" y="{y}" width="{w}" height="{h}" '
                     f'fill="#bbbbbb" stroke="#333333" stroke-width="1.5"/>')
    elif kind == "segment_capsule":
        x1, y1 = canvas.pt(shape.p0)
        x2, y2 = canvas.pt(shape.p1)
        w = canvas.length(2.0 * shape.radius)
        parts.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
                     f'stroke="#bbbbbb" stroke-width="{w}" stroke-linecap="round"/>')
    elif kind == "union":
        for member in shape.members:
            _shape_svg(canvas, member, parts)
    # halfspaces have no finite outline; skipped


def render_field_svg(fld, obstacles, rollouts, bounds, out_path, demo=None,
                     specs=(), grid=20, steps=50, overlay_grid=60):
    """Writes the field/trajectory SVG; deterministic for identical inputs."""
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    if lo.shape != (2,):
        raise RenderError("field rendering supports 2D only")
    canvas = _Canvas(bounds)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(_CANVAS)}" '
        f'height="{int(_CANVAS)}" viewBox="0 0 {int(_CANVAS)} {int(_CANVAS)}">',
        f'<rect x="0" y="0" width="{int(_CANVAS)}" height="{int(_CANVAS)}" fill="#ffffff"/>',
    ]

    # influence-region overlay (where any constraint weight exceeds 0.05)
    if specs:
        cell_x = (hi[0] - lo[0]) / overlay_grid
        cell_y = (hi[1] - lo[1]) / overlay_grid
        for i in range(overlay_grid):
            for j in range(overlay_grid):
                center = lo + [(i + 0.5) * cell_x, (j + 0.5) * cell_y]
                w = max(influence_weight(s.field.evaluate(center).value,
                                         s.kappa, s.margin) for s in specs)
                if w > 0.05:
                    x, y = canvas.pt((lo[0] + i * cell_x, lo[1] + (j + 1) * cell_y))
                    parts.append(f'<rect x="{x}" y="{y}" '
                                 f'width="{canvas.length(cell_x)}" '
                                 f'height="{canvas.length(cell_y)}" '
                                 f'fill="#dd4444" fill-opacity="0.12"/>')

    # streamlines: each seed is integrated through flow time like a rollout
    dt = 1.0 / steps
    for i in range(grid):
        for j in range(grid):
            p = lo + (hi - lo) * [(i + 0.5) / grid, (j + 0.5) / grid]
            line = [p.copy()]
            for step in range(steps):
                v = np.asarray(fld(p, step * dt), dtype=float)
                if not np.all(np.isfinite(v)):
                    break
                p = p + dt * v
                line.append(p.copy())
            if len(line) > 1:
                parts.append(_polyline(canvas, line, "#999999", "0.7", opacity="0.6"))

    for shape in obstacles:
        _shape_svg(canvas, shape, parts)

    if demo is not None:
        parts.append(_polyline(canvas, demo.waypoints, "#2255cc", "1.5", dash="6,4"))

    for rollout in rollouts:
        parts.append(_polyline(canvas, rollout.states, "#ee7722", "1.8"))

    parts.append("</svg>")
    with open(out_path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def render_report_figure(grid, out_path):
    """Grouped bar charts of the benchmark grid, one panel per metric.

    `grid` maps task -> method -> metric dict (see bench.emit_report).
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    tasks = sorted(grid)
    methods = sorted({m for cells in grid.values() for m in cells})
    metrics = ["masked_fd", "mpd", "int_violation", "path_length"]

    fig, axes = plt.subplots(len(metrics), 1, figsize=(10, 11), sharex=True)
    x = np.arange(len(tasks))
    width = 0.8 / max(len(methods), 1)
    for ax, metric in zip(axes, metrics):
        for mi, method in enumerate(methods):
            vals = []
            for task in tasks:
                cell = grid.get(task, {}).get(method, {})
                v = cell.get(metric)
                vals.append(np.nan if v is None else v)
            ax.bar(x + (mi - (len(methods) - 1) / 2) * width, vals, width,
                   label=method)
        ax.set_ylabel(metric)
        ax.grid(axis="y", alpha=0.3)
    axes[0].legend(ncol=len(methods), fontsize=9)
    axes[-1].set_xticks(x)
    axes[-1].set_xticklabels(tasks, rotation=30)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
