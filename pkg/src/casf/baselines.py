"""Comparison safety filters: hard projection and a closed-form CBF sweep."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FilterFailureError, InvalidInputError, ProjectionFailureError


@dataclass(frozen=True)
class ProjectionConfig:
    margin: float = 0.0
    push_out: bool = True

    def __post_init__(self):
        if self.margin < 0:
            raise InvalidInputError("projection margin must be >= 0")


@dataclass(frozen=True)
class CbfConfig:
    gamma: float = 5.0      # class-K gain, 1/flow-time
    max_passes: int = 5     # sequential constraint sweeps

    def __post_init__(self):
        if self.gamma <= 0 or self.max_passes < 1:
            raise InvalidInputError("gamma must be > 0 and max_passes >= 1")


def hard_project(fields, cfg, a, v):
    """Removes inward velocity components at contact; optionally pushes a
    penetrating state back to the surface of the deepest constraint."""
    a = np.asarray(a, dtype=float).copy()
    v = np.asarray(v, dtype=float).copy()
    deepest = None
    for f in fields:
        s = f.evaluate(a)
        if s.value <= cfg.margin:
            if not s.gradient_norm_ok:
                if s.value < 0:
                    raise ProjectionFailureError(
                        "degenerate gradient while penetrating a constraint")
                continue
            inward = float(s.gradient @ v)
            if inward < 0.0:
                v -= inward * s.gradient
            if s.value < 0 and (deepest is None or s.value < deepest[0]):
                deepest = (s.value, s.gradient)
    if cfg.push_out and deepest is not None:
        a -= deepest[0] * deepest[1]
    return a, v


def cbf_filter(fields, cfg, a, v):
    """Sequential closed-form corrections enforcing grad(d).v + gamma d >= 0.

    Constraints are swept in order of ascending distance; each active one gets
    the single-constraint QP solution v += lambda grad/||grad||^2 with
    lambda = -(gamma d + grad . v). Exact for a single constraint.
    """
    a = np.asarray(a, dtype=float)
    v = np.asarray(v, dtype=float).copy()
    samples = sorted((f.evaluate(a) for f in fields), key=lambda s: s.value)
    for _ in range(cfg.max_passes):
        any_active = False
        for s in samples:
            grad = s.gradient if s.gradient_norm_ok else None
            slack = (0.0 if grad is None else float(grad @ v)) + cfg.gamma * s.value
            if slack < 0.0:
                if grad is None:
                    raise FilterFailureError(
                        "degenerate gradient on an active CBF constraint")
                # unit-norm gradient, so ||grad||^2 = 1
                v += -slack * grad
                any_active = True
        if not any_active:
            break
    return v


def filtered_field(filter_kind, fields, cfg, base_field):
    """Adapts a filter to the streaming-integrator contract.

    Returns (field, post_step); post_step is None except for hard projection
    with push_out, where it corrects the state between integration steps.
    """
    fields = tuple(fields)
    if filter_kind == "projection":
        def fld(a, t):
            _, v = hard_project(fields, cfg, a, base_field(a, t))
            return v

        post = None
        if cfg.push_out:
            def post(a):
                a2, _ = hard_project(fields, cfg, a, np.zeros_like(a))
                return a2
        return fld, post
    if filter_kind == "cbf":
        def fld(a, t):
            return cbf_filter(fields, cfg, a, base_field(a, t))

        return fld, None
    raise InvalidInputError(f"unknown filter kind {filter_kind!r}")
