"""Distance-induced anisotropic metrics and metric-weighted velocity shaping.

Each constraint contributes w(d) * [alpha n n^T + beta (I - n n^T)] on top of
the identity, where n is the outward unit normal of its distance field and
w decays as a margin-clamped Gaussian of distance. Shaping a velocity means
solving M v_shaped = v with the SPD factorization, so motion along constraint
normals is attenuated by 1/(1 + w alpha) and tangential motion by
1/(1 + w beta), reverting to the raw field far from every constraint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateMetricError, InvalidInputError


@dataclass(frozen=True)
class ConstraintSpec:
    field: object          # DistanceField: has .evaluate(p) and .dim
    alpha: float = 50.0    # normal stiffness
    beta: float = 2.0      # tangential stiffness
    kappa: float = 22.2    # influence decay, 1/length^2
    margin: float = 0.02   # distances below this count as contact

    def __post_init__(self):
        if not (self.alpha >= self.beta >= 0.0):
            raise InvalidInputError("require alpha >= beta >= 0")
        if self.kappa <= 0 or self.margin < 0:
            raise InvalidInputError("require kappa > 0 and margin >= 0")


def kappa_for_radius(radius):
    """Decay rate whose influence weight drops to e^-1 at the given distance
    beyond the margin."""
    if radius <= 0:
        raise InvalidInputError("influence radius must be positive")
    return 1.0 / radius ** 2


def influence_weight(d, kappa, margin=0.0):
    """Margin-clamped Gaussian influence: exp(-kappa max(d - margin, 0)^2).

    Equals 1 at or below the margin (penetration never weakens the metric)
    and decays smoothly to 0 far away.
    """
    if kappa <= 0:
        raise InvalidInputError("kappa must be positive")
    slack = max(float(d) - margin, 0.0)
    return float(np.exp(-kappa * slack * slack))


def anisotropic_part(spec, sample):
    """Unweighted stiffness term alpha n n^T + beta (I - n n^T) at a sample.

    Falls back to isotropic beta * I when the field's gradient is degenerate,
    so an undefined normal never injects a spurious direction.
    """
    dim = sample.gradient.shape[0]
    eye = np.eye(dim)
    if not sample.gradient_norm_ok:
        return spec.beta * eye
    n = sample.gradient
    outer = np.outer(n, n)
    return spec.alpha * outer + spec.beta * (eye - outer)


def build_metric(specs, a):
    """Identity-anchored metric at point `a` summed over all constraints."""
    a = np.asarray(a, dtype=float)
    dim = a.shape[0]
    m = np.eye(dim)
    for spec in specs:
        if spec.field.dim != dim:
            raise InvalidInputError(
                f"constraint field dimension {spec.field.dim} != point dimension {dim}")
        sample = spec.field.evaluate(a)
        w = influence_weight(sample.value, spec.kappa, spec.margin)
        if w > 0.0:
            m += w * anisotropic_part(spec, sample)
    return 0.5 * (m + m.T)


def shape_velocity(m, v):
    """Solves M v_shaped = v via Cholesky; raises on a non-PD metric."""
    v = np.asarray(v, dtype=float)
    if m.shape != (v.shape[0], v.shape[0]):
        raise InvalidInputError("metric and velocity dimensions disagree")
    try:
        chol = scipy.linalg.cho_factor(m, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise DegenerateMetricError("metric failed SPD factorization") from exc
    return scipy.linalg.cho_solve(chol, v)


def shaped_field(specs, base_field):
    """Wraps a velocity field with metric shaping; composes with the
    streaming integrator unchanged."""
    specs = tuple(specs)

    def fld(a, t):
        return shape_velocity(build_metric(specs, a), base_field(a, t))

    return fld
