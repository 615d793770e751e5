"""Safety and fidelity metrics for rollouts.

Masked Frechet distance compares a shaped rollout with the unshaped rollout
after dropping unshaped reference samples that sit within the margin of any
constraint (those demand deviation by construction, so they would penalize
any shaping method for doing its job). Penetration metrics require signed
(analytic) fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidInputError, UnsupportedMetricError


def discrete_frechet(p, q):
    """Discrete Frechet distance between point sequences (Euclidean ground
    metric), via the standard dynamic program."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if p.shape[0] == 0 or q.shape[0] == 0:
        raise InvalidInputError("discrete_frechet requires non-empty sequences")
    dist = cdist(p, q)
    n, m = dist.shape
    row = np.empty(m)
    row[0] = dist[0, 0]
    for j in range(1, m):
        row[j] = max(row[j - 1], dist[0, j])
    for i in range(1, n):
        prev = row.copy()
        row[0] = max(prev[0], dist[i, 0])
        for j in range(1, m):
            row[j] = max(dist[i, j], min(row[j - 1], prev[j - 1], prev[j]))
    return float(row[m - 1])


def _min_distances(states, fields):
    out = np.empty(states.shape[0])
    for i, p in enumerate(states):
        out[i] = min(f.evaluate(p).value for f in fields)
    return out


def masked_frechet(shaped, unshaped, fields, margin):
    """Frechet distance to the masked unshaped reference; None when not
    meaningful (no shaping applied, or the mask removes every sample)."""
    if shaped is unshaped:
        return None
    ref = unshaped.states
    if len(fields) > 0:
        keep = _min_distances(ref, fields) >= margin
        ref = ref[keep]
    if ref.shape[0] == 0:
        return None
    return discrete_frechet(shaped.states, ref)


def _require_signed(fields):
    for f in fields:
        if not getattr(f, "signed", False):
            raise UnsupportedMetricError(
                "penetration metrics require signed (analytic) distance fields")


def max_penetration(rollout, fields):
    """Worst-case penetration depth max(0, -d) over samples and constraints."""
    _require_signed(fields)
    if len(fields) == 0:
        return 0.0
    return float(np.maximum(0.0, -_min_distances(rollout.states, fields)).max())


def integral_violation(rollout, fields):
    """Rectangle-rule integral of penetration depth over flow time."""
    _require_signed(fields)
    if len(fields) == 0:
        return 0.0
    depth = np.maximum(0.0, -_min_distances(rollout.states, fields))
    return float(np.sum(depth) * rollout.dt)


def path_length(rollout):
    """Sum of consecutive Euclidean segment lengths."""
    states = rollout.states
    if states.shape[0] < 1:
        raise InvalidInputError("path_length requires at least one state")
    return float(np.sum(np.linalg.norm(np.diff(states, axis=0), axis=1)))


@dataclass(frozen=True)
class MetricReport:
    masked_fd: float | None
    mpd: float
    int_violation: float
    path_length: float

    def to_dict(self):
        return {"masked_fd": self.masked_fd, "mpd": self.mpd,
                "int_violation": self.int_violation, "path_length": self.path_length}


def score_rollout(shaped, unshaped, fields, margin):
    """Assembles the full per-rollout report."""
    return MetricReport(
        masked_fd=masked_frechet(shaped, unshaped, fields, margin),
        mpd=max_penetration(shaped, fields),
        int_violation=integral_violation(shaped, fields),
        path_length=path_length(shaped),
    )
