"""Synthetic 2D benchmark tasks and demonstration CSV I/O.

Nine handwriting-style task families are generated from documented parametric
curves (corner polylines are Chaikin-smoothed), normalized to the unit box,
resampled to 200 waypoints, and given one circular obstacle astride the
curve's arc-length midpoint so that shaping is always exercised. Real
recorded demonstrations can be substituted through the CSV path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DemoParseError, InvalidInputError
from .geometry import Circle
from .policy import Demonstration, conditional_target, integrate_stream

TASK_FAMILIES = ("line", "khamesh", "n_shape", "sine", "r_shape",
                 "s_shape", "w_shape", "worm", "z_shape")

N_WAYPOINTS = 200
OBSTACLE_RADIUS_FRAC = 0.08  # of workspace box diagonal


@dataclass(frozen=True)
class TaskSpec:
    name: str
    demos: tuple
    obstacles: tuple
    bounds: tuple = ((0.0, 0.0), (1.0, 1.0))
    seed: int = 0


def _chaikin(points, iterations=3):
    """Corner-cutting smoothing; endpoints are preserved."""
    pts = np.asarray(points, dtype=float)
    for _ in range(iterations):
        out = [pts[0]]
        for a, b in zip(pts[:-1], pts[1:]):
            out.append(0.75 * a + 0.25 * b)
            out.append(0.25 * a + 0.75 * b)
        out.append(pts[-1])
        pts = np.asarray(out)
    return pts


def _resample_arclength(points, n):
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0:
        raise InvalidInputError("degenerate curve")
    targets = np.linspace(0.0, s[-1], n)
    out = np.empty((n, pts.shape[1]))
    for axis in range(pts.shape[1]):
        out[:, axis] = np.interp(targets, s, pts[:, axis])
    return out


def _normalize_unit_box(points, pad=0.08):
    """Uniform-scale fit into [pad, 1-pad]^2, centered on the short axis."""
    pts = np.asarray(points, dtype=float)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    extent = float(np.max(hi - lo))
    if extent <= 0:
        raise InvalidInputError("curve has zero extent")
    scale = (1.0 - 2.0 * pad) / extent
    centered = (pts - (lo + hi) / 2.0) * scale
    return centered + 0.5


def _family_curve(family):
    if family == "line":
        return np.array([[0.0, 0.0], [1.0, 0.0]]), 0
    if family == "sine":
        t = np.linspace(0.0, 1.0, 120)
        return np.column_stack([t, 0.25 * np.sin(2.0 * np.pi * t)]), 0
    if family == "worm":
        t = np.linspace(0.0, 1.0, 120)
        return np.column_stack([t, 0.18 * np.sin(1.5 * np.pi * t)]), 0
    if family == "khamesh":
        pts = [[0.0, 1.0], [0.1, 0.55], [0.35, 0.25], [0.7, 0.12], [1.0, 0.15]]
        return np.asarray(pts), 3
    if family == "n_shape":
        pts = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
        return np.asarray(pts), 3
    if family == "r_shape":
        pts = [[0.0, 0.0], [0.0, 1.0], [0.62, 0.92], [0.62, 0.58],
               [0.05, 0.5], [0.75, 0.0]]
        return np.asarray(pts), 3
    if family == "s_shape":
        pts = [[1.0, 1.0], [0.25, 0.95], [0.0, 0.7], [0.5, 0.5],
               [1.0, 0.3], [0.75, 0.05], [0.0, 0.0]]
        return np.asarray(pts), 3
    if family == "w_shape":
        pts = [[0.0, 1.0], [0.25, 0.0], [0.5, 0.75], [0.75, 0.0], [1.0, 1.0]]
        return np.asarray(pts), 3
    if family == "z_shape":
        pts = [[0.0, 1.0], [1.0, 1.0], [0.0, 0.0], [1.0, 0.0]]
        return np.asarray(pts), 3
    raise InvalidInputError(f"unknown task family {family!r}")


def family_waypoints(family):
    """The normalized 200-point demonstration curve for a task family."""
    raw, smooth_iters = _family_curve(family)
    if smooth_iters > 0:
        raw = _chaikin(raw, smooth_iters)
    pts = _resample_arclength(raw, N_WAYPOINTS)
    return _normalize_unit_box(pts)


def _arc_midpoint(points):
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    idx = int(np.searchsorted(s, s[-1] / 2.0))
    return points[min(idx, len(points) - 1)]


def scripted_demo_field(demo, k_gain=5.0):
    """The analytic tracking field of a demo; used as a policy stand-in for
    generation-time validity checks."""
    return lambda a, t: conditional_target(demo, t, a, k_gain)


def generate_task(family, seed=0):
    """Deterministic TaskSpec for one of the nine families.

    The obstacle is validated at generation time: rolling out the scripted
    demo-tracking field must penetrate it, so every task exercises shaping.
    """
    family = family.lower().replace("-", "_")
    pts = family_waypoints(family)
    demo = Demonstration.from_waypoints(pts)
    bounds = ((0.0, 0.0), (1.0, 1.0))
    diag = float(np.linalg.norm(np.asarray(bounds[1]) - np.asarray(bounds[0])))
    obstacle = Circle(tuple(_arc_midpoint(pts)), OBSTACLE_RADIUS_FRAC * diag)

    nominal = integrate_stream(scripted_demo_field(demo), demo.waypoints[0],
                               sigma0=0.0, steps=200)
    depth = max(max(0.0, -obstacle.evaluate(p).value) for p in nominal.states)
    if depth <= 0.0:
        raise InvalidInputError(
            f"generated obstacle for {family!r} is not on the demo path")

    return TaskSpec(family, (demo,), (obstacle,), bounds, seed)


def ingest_demo_csv(path):
    """Reads a `t,x0,x1,...` CSV into a unit-box-normalized Demonstration.

    Returns (demo, offset, scale) with original = waypoints * scale + offset.
    """
    times, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0].strip() != "t":
            raise DemoParseError(f"{path}: expected header 't,x0,x1,...'")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise DemoParseError(f"{path}: row {lineno} has {len(row)} fields, "
                                     f"expected {width}")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise DemoParseError(f"{path}: row {lineno}: {exc}") from exc
            if times and values[0] <= times[-1]:
                raise DemoParseError(f"{path}: row {lineno}: time not ascending")
            times.append(values[0])
            rows.append(values[1:])
    if len(rows) < 2:
        raise DemoParseError(f"{path}: need at least two rows")

    pts = np.asarray(rows)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    extent = float(np.max(hi - lo))
    if extent <= 0:
        raise DemoParseError(f"{path}: demonstration has zero spatial extent")
    scale = extent
    offset = (lo + hi) / 2.0 - 0.5 * scale
    normalized = (pts - offset) / scale
    demo = Demonstration.from_waypoints(normalized, times=np.asarray(times))
    return demo, offset, scale


def write_trajectory_csv(times, states, path):
    """Writes the shared `t,x0,x1,...` schema for demos and rollouts."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i}" for i in range(states.shape[1])])
        for t, row in zip(times, states):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
