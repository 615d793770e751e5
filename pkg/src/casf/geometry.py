"""Analytic signed distance fields with exact gradients.

Built-in shapes are 2D (circle, axis-aligned box, segment capsule) plus the
n-dimensional halfspace used for joint limits in configuration space. All
fields are signed: negative inside the restricted region, gradient pointing
outward with unit norm wherever it is well defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

# Below this gradient norm the direction is considered undefined and zeroed,
# so downstream metric code never normalizes a near-zero vector.
DEGENERATE_GRAD_NORM = 1e-6


@dataclass(frozen=True)
class DistanceSample:
    value: float
    gradient: np.ndarray
    gradient_norm_ok: bool


def _degenerate(value, dim):
    return DistanceSample(float(value), np.zeros(dim), False)


def _check_dim(p, dim):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.shape[0] != dim:
        raise InvalidInputError(f"expected a {dim}-dimensional point, got shape {p.shape}")
    return p


class Shape:
    """Base class; subclasses implement evaluate(p) -> DistanceSample."""

    #: analytic fields report true signed distances (negative inside)
    signed = True

    @property
    def dim(self):
        return 2

    def evaluate(self, p):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Circle(Shape):
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidInputError("circle radius must be positive")

    def evaluate(self, p):
        p = _check_dim(p, 2)
        delta = p - np.asarray(self.center, dtype=float)
        r = np.linalg.norm(delta)
        value = r - self.radius
        if r < DEGENERATE_GRAD_NORM:
            return _degenerate(value, 2)
        return DistanceSample(float(value), delta / r, True)

    def to_dict(self):
        return {"type": "circle", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class AxisBox(Shape):
    min_corner: tuple
    max_corner: tuple

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=float)
        hi = np.asarray(self.max_corner, dtype=float)
        if not np.all(lo < hi):
            raise InvalidInputError("box requires min_corner < max_corner componentwise")

    def evaluate(self, p):
        p = _check_dim(p, 2)
        lo = np.asarray(self.min_corner, dtype=float)
        hi = np.asarray(self.max_corner, dtype=float)
        if np.any(p < lo) or np.any(p > hi):
            nearest = np.clip(p, lo, hi)
            delta = p - nearest
            d = np.linalg.norm(delta)
            return DistanceSample(float(d), delta / d, True)
        # inside: distance to the nearest face; gradient through that face,
        # ties broken by lowest axis index then by the low face
        slack_lo = p - lo
        slack_hi = hi - p
        per_axis = np.minimum(slack_lo, slack_hi)
        axis = int(np.argmin(per_axis))
        grad = np.zeros(2)
        grad[axis] = -1.0 if slack_lo[axis] <= slack_hi[axis] else 1.0
        return DistanceSample(float(-per_axis[axis]), grad, True)

    def to_dict(self):
        return {"type": "axis_box", "min_corner": list(self.min_corner),
                "max_corner": list(self.max_corner)}


@dataclass(frozen=True)
class Halfspace(Shape):
    """Restricted region {x : n.x <= offset}; safe side along the normal."""

    normal: tuple
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise InvalidInputError("halfspace normal must have unit norm")

    @property
    def dim(self):
        return len(self.normal)

    def evaluate(self, p):
        n = np.asarray(self.normal, dtype=float)
        p = _check_dim(p, n.shape[0])
        value = float(n @ p - self.offset)
        return DistanceSample(value, n.copy(), True)

    def to_dict(self):
        return {"type": "halfspace", "normal": list(self.normal), "offset": self.offset}


@dataclass(frozen=True)
class SegmentCapsule(Shape):
    p0: tuple
    p1: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidInputError("capsule radius must be positive")

    def evaluate(self, p):
        p = _check_dim(p, 2)
        a = np.asarray(self.p0, dtype=float)
        b = np.asarray(self.p1, dtype=float)
        ab = b - a
        denom = float(ab @ ab)
        s = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
        nearest = a + s * ab
        delta = p - nearest
        r = np.linalg.norm(delta)
        value = r - self.radius
        if r < DEGENERATE_GRAD_NORM:
            # on the segment axis (the skeleton): outward direction undefined
            return _degenerate(value, 2)
        return DistanceSample(float(value), delta / r, True)

    def to_dict(self):
        return {"type": "segment_capsule", "p0": list(self.p0), "p1": list(self.p1),
                "radius": self.radius}


@dataclass(frozen=True)
class Union(Shape):
    members: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.members) == 0:
            raise InvalidInputError("union requires at least one member")

    @property
    def dim(self):
        return self.members[0].dim

    def evaluate(self, p):
        samples = [m.evaluate(p) for m in self.members]
        values = [s.value for s in samples]
        best = int(np.argmin(values))
        # an exact tie between distinct members leaves the gradient ill-defined
        ties = [i for i, v in enumerate(values) if v == values[best]]
        if len(ties) > 1:
            return _degenerate(values[best], self.dim)
        return samples[best]

    def to_dict(self):
        return {"type": "union", "members": [m.to_dict() for m in self.members]}


def eval_sdf(shape, p):
    """Exact signed distance and outward gradient of `shape` at point `p`."""
    return shape.evaluate(p)


def min_distance_over(fields, p):
    """Index and sample of the closest field at `p`; ties go to the lowest index."""
    if len(fields) == 0:
        raise InvalidInputError("min_distance_over requires a non-empty field list")
    best_i, best = 0, fields[0].evaluate(p)
    for i, f in enumerate(fields[1:], start=1):
        s = f.evaluate(p)
        if s.value < best.value:
            best_i, best = i, s
    return best_i, best


def shape_from_dict(spec):
    """Build a Shape from its tagged-record config form."""
    try:
        kind = spec["type"]
    except (TypeError, KeyError) as exc:
        raise InvalidInputError(f"shape record missing 'type': {spec!r}") from exc
    if kind == "circle":
        return Circle(tuple(spec["center"]), float(spec["radius"]))
    if kind == "axis_box":
        return AxisBox(tuple(spec["min_corner"]), tuple(spec["max_corner"]))
    if kind == "halfspace":
        return Halfspace(tuple(spec["normal"]), float(spec["offset"]))
    if kind == "segment_capsule":
        return SegmentCapsule(tuple(spec["p0"]), tuple(spec["p1"]), float(spec["radius"]))
    if kind == "union":
        return Union(tuple(shape_from_dict(m) for m in spec["members"]))
    raise InvalidInputError(f"unknown shape type {kind!r}")
