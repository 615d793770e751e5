"""Planar n-link revolute arm: FK, Jacobians, metric pullback and fusion.

Workspace constraint metrics evaluated at sampled body points are pulled back
through the body-point Jacobians (J^T M_x J) and fused into one identity-
anchored configuration-space metric. Joint limits are native configuration-
space halfspaces and join the fusion sum without pullback.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import Halfspace
from .metric import (ConstraintSpec, anisotropic_part, influence_weight,
                     shape_velocity)


@dataclass(frozen=True)
class ArmModel:
    link_lengths: tuple
    base: tuple = (0.0, 0.0)
    joint_limits: tuple | None = None  # per-joint (lo, hi) radians

    def __post_init__(self):
        if len(self.link_lengths) < 1 or any(l <= 0 for l in self.link_lengths):
            raise InvalidInputError("need >= 1 link, all lengths positive")
        if self.joint_limits is not None:
            if len(self.joint_limits) != len(self.link_lengths):
                raise InvalidInputError("joint_limits must match the link count")
            if any(lo >= hi for lo, hi in self.joint_limits):
                raise InvalidInputError("joint limits require lo < hi")

    @property
    def n_joints(self):
        return len(self.link_lengths)


@dataclass(frozen=True)
class BodyPoint:
    link_index: int
    fraction: float

    def __post_init__(self):
        if self.link_index < 0 or not (0.0 <= self.fraction <= 1.0):
            raise InvalidInputError("body point fraction must lie in [0, 1]")


def _check_config(arm, q):
    q = np.asarray(q, dtype=float)
    if q.shape != (arm.n_joints,):
        raise InvalidInputError(f"expected {arm.n_joints} joint angles")
    return q


def _joint_positions(arm, q):
    """Positions of each joint (base of each link) plus cumulative angles."""
    angles = np.cumsum(q)
    joints = np.empty((arm.n_joints, 2))
    p = np.asarray(arm.base, dtype=float)
    for i, (length, theta) in enumerate(zip(arm.link_lengths, angles)):
        joints[i] = p
        p = p + length * np.array([np.cos(theta), np.sin(theta)])
    return joints, angles


def fk_point(arm, bp, q):
    """Workspace position of a body point at the given configuration."""
    q = _check_config(arm, q)
    if bp.link_index >= arm.n_joints:
        raise InvalidInputError("body point link index out of range")
    joints, angles = _joint_positions(arm, q)
    i = bp.link_index
    theta = angles[i]
    return joints[i] + bp.fraction * arm.link_lengths[i] * np.array(
        [np.cos(theta), np.sin(theta)])


def jacobian(arm, bp, q):
    """Analytic (2 x n) Jacobian of fk_point w.r.t. the joint angles.

    Column m is the perpendicular of the lever arm from joint m to the body
    point; joints downstream of the body point get zero columns.
    """
    q = _check_config(arm, q)
    joints, _ = _joint_positions(arm, q)
    p = fk_point(arm, bp, q)
    jac = np.zeros((2, arm.n_joints))
    for m in range(bp.link_index + 1):
        lever = p - joints[m]
        jac[0, m] = -lever[1]
        jac[1, m] = lever[0]
    return jac


def sample_body_points(arm, points_per_link):
    """Uniform fractions (i+1)/points_per_link on every link, skipping 0."""
    if points_per_link < 1:
        raise InvalidInputError("points_per_link must be >= 1")
    return [BodyPoint(link, (i + 1) / points_per_link)
            for link in range(arm.n_joints)
            for i in range(points_per_link)]


def pullback_metric(jac, m_x):
    """Workspace metric pulled into configuration space: J^T M_x J (PSD)."""
    jac = np.asarray(jac, dtype=float)
    m_x = np.asarray(m_x, dtype=float)
    if jac.shape[0] != m_x.shape[0] or m_x.shape[0] != m_x.shape[1]:
        raise InvalidInputError("Jacobian and workspace metric shapes disagree")
    return jac.T @ m_x @ jac


def joint_limit_specs(arm, alpha=50.0, beta=0.0, kappa=200.0, margin=0.05):
    """Configuration-space halfspace constraints for declared joint limits."""
    if arm.joint_limits is None:
        return []
    n = arm.n_joints
    specs = []
    for j, (lo, hi) in enumerate(arm.joint_limits):
        e = np.zeros(n)
        e[j] = 1.0
        specs.append(ConstraintSpec(Halfspace(tuple(e), lo), alpha, beta, kappa, margin))
        specs.append(ConstraintSpec(Halfspace(tuple(-e), -hi), alpha, beta, kappa, margin))
    return specs


def fuse_metrics(arm, pairs, q, cspace_specs=()):
    """Identity-anchored fusion of pulled-back body-point metrics.

    `pairs` holds (BodyPoint, ConstraintSpec) combinations; each contributes
    w(d_i) * J_i^T [alpha n n^T + beta (I - n n^T)] J_i with the distance
    decay applied once, at fusion. Configuration-space constraints add their
    anisotropic term directly.
    """
    q = _check_config(arm, q)
    n = arm.n_joints
    fused = np.eye(n)
    for bp, spec in pairs:
        x = fk_point(arm, bp, q)
        sample = spec.field.evaluate(x)
        w = influence_weight(sample.value, spec.kappa, spec.margin)
        if w > 0.0:
            jac = jacobian(arm, bp, q)
            fused += w * pullback_metric(jac, anisotropic_part(spec, sample))
    for spec in cspace_specs:
        sample = spec.field.evaluate(q)
        w = influence_weight(sample.value, spec.kappa, spec.margin)
        if w > 0.0:
            fused += w * anisotropic_part(spec, sample)
    return 0.5 * (fused + fused.T)


def min_body_distance(arm, body_points, fields, q):
    """Smallest signed distance over all (body point, field) combinations."""
    best = np.inf
    for bp in body_points:
        x = fk_point(arm, bp, q)
        for f in fields:
            best = min(best, f.evaluate(x).value)
    return best


def shaped_joint_field(arm, pairs, base_field, cspace_specs=()):
    """Joint-space velocity field shaped by the fused metric."""
    pairs = tuple(pairs)
    cspace_specs = tuple(cspace_specs)

    def fld(q, t):
        return shape_velocity(fuse_metrics(arm, pairs, q, cspace_specs),
                              base_field(q, t))

    return fld
