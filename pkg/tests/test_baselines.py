"""Hard projection and CBF filters, including a brute-force QP oracle."""

import numpy as np
import pytest
from scipy.optimize import minimize

from casf import (CbfConfig, Circle, InvalidInputError, ProjectionConfig,
                  cbf_filter, filtered_field, hard_project)
from casf.errors import FilterFailureError, ProjectionFailureError
from casf.geometry import Halfspace, SegmentCapsule


def qp_oracle(grad, d, gamma, v):
    """Minimal-correction QP: min ||u - v||^2 s.t. grad.u + gamma*d >= 0."""
    res = minimize(
        lambda u: float(np.sum((u - v) ** 2)),
        v.copy(),
        jac=lambda u: 2.0 * (u - v),
        constraints=[{"type": "ineq",
                      "fun": lambda u: float(grad @ u + gamma * d),
                      "jac": lambda u: grad}],
        method="SLSQP",
        options={"ftol": 1e-12, "maxiter": 200},
    )
    assert res.success
    return res.x


def test_cbf_matches_qp_oracle():
    gamma = 5.0
    cfg = CbfConfig(gamma=gamma)
    rng = np.random.default_rng(0)
    circle = Circle((0.0, 0.0), 0.5)
    for _ in range(500):
        a = rng.uniform(-1.5, 1.5, 2)
        s = circle.evaluate(a)
        if not s.gradient_norm_ok:
            continue
        v = rng.normal(size=2) * 2.0
        out = cbf_filter([circle], cfg, a, v)
        ref = qp_oracle(s.gradient, s.value, gamma, v)
        assert np.allclose(out, ref, atol=1e-6)


def test_cbf_inactive_leaves_velocity():
    circle = Circle((0.0, 0.0), 0.2)
    v = np.array([0.0, 1.0])
    out = cbf_filter([circle], CbfConfig(), np.array([2.0, 0.0]), v)
    assert np.allclose(out, v)


def test_cbf_barrier_condition_holds():
    # the sequential sweep guarantees the barrier condition whenever it
    # converges (one extra application leaves the velocity unchanged); with
    # near-opposed normals it may exhaust its passes first, so only the
    # converged cases carry the guarantee
    cfg = CbfConfig(gamma=5.0, max_passes=30)
    rng = np.random.default_rng(1)
    fields = [Circle((0.0, 0.0), 0.4), Circle((0.7, 0.0), 0.3)]
    corrected = converged = 0
    for _ in range(300):
        a = rng.uniform(-1.2, 1.2, 2)
        samples = [f.evaluate(a) for f in fields]
        if any(not s.gradient_norm_ok for s in samples):
            continue
        v = rng.normal(size=2) * 2.0
        out = cbf_filter(fields, cfg, a, v)
        if np.allclose(out, v):
            continue
        corrected += 1
        if np.allclose(cbf_filter(fields, cfg, a, out), out, atol=1e-12):
            converged += 1
            for s in samples:
                assert s.gradient @ out + cfg.gamma * s.value >= -1e-9
    assert corrected > 50
    assert converged > corrected / 2


def test_cbf_degenerate_active_gradient_raises():
    capsule = SegmentCapsule((-1.0, 0.0), (1.0, 0.0), 0.5)
    with pytest.raises(FilterFailureError):
        cbf_filter([capsule], CbfConfig(), np.array([0.0, 0.0]), np.zeros(2))


def test_projection_removes_inward_component():
    h = Halfspace((0.0, 1.0), 0.0)
    cfg = ProjectionConfig(margin=0.02)
    a = np.array([0.3, 0.01])
    v = np.array([1.0, -2.0])
    a2, v2 = hard_project([h], cfg, a, v)
    assert np.allclose(v2, [1.0, 0.0])
    assert np.allclose(a2, a)  # not penetrating, no push-out
    # outward motion at contact is untouched
    _, v3 = hard_project([h], cfg, a, np.array([1.0, 2.0]))
    assert np.allclose(v3, [1.0, 2.0])


def test_projection_push_out():
    h = Halfspace((0.0, 1.0), 0.0)
    a = np.array([0.3, -0.05])
    a2, _ = hard_project([h], ProjectionConfig(push_out=True), a, np.zeros(2))
    assert np.allclose(a2, [0.3, 0.0], atol=1e-12)
    a3, _ = hard_project([h], ProjectionConfig(push_out=False), a, np.zeros(2))
    assert np.allclose(a3, a)


def test_projection_push_out_deepest_of_two():
    h1 = Halfspace((0.0, 1.0), 0.0)
    h2 = Halfspace((1.0, 0.0), 0.0)
    a = np.array([-0.02, -0.3])
    a2, _ = hard_project([h1, h2], ProjectionConfig(), a, np.zeros(2))
    assert a2[1] == pytest.approx(0.0)  # deepest constraint corrected


def test_projection_degenerate_while_penetrating():
    capsule = SegmentCapsule((-1.0, 0.0), (1.0, 0.0), 0.5)
    with pytest.raises(ProjectionFailureError):
        hard_project([capsule], ProjectionConfig(), np.array([0.0, 0.0]),
                     np.array([1.0, 0.0]))


def test_filtered_field_wiring():
    circle = Circle((0.0, 0.0), 0.5)
    base = lambda a, t: np.array([1.0, 0.0])
    fld, post = filtered_field("projection", [circle],
                               ProjectionConfig(margin=0.02), base)
    assert post is not None
    fld2, post2 = filtered_field("projection", [circle],
                                 ProjectionConfig(push_out=False), base)
    assert post2 is None
    fld3, post3 = filtered_field("cbf", [circle], CbfConfig(), base)
    assert post3 is None
    a = np.array([2.0, 0.0])
    assert np.allclose(fld(a, 0.0), base(a, 0.0))
    assert np.allclose(fld3(a, 0.0), base(a, 0.0))
    with pytest.raises(InvalidInputError):
        filtered_field("teleport", [circle], CbfConfig(), base)


def test_config_validation():
    with pytest.raises(InvalidInputError):
        ProjectionConfig(margin=-0.1)
    with pytest.raises(InvalidInputError):
        CbfConfig(gamma=0.0)
    with pytest.raises(InvalidInputError):
        CbfConfig(max_passes=0)
