"""End-to-end acceptance checks.

Covers the full nine-task benchmark (safety and fidelity trends), metric
algebra, kinematic pullback, the whole-body arm scenario, oracle equivalence
for the CBF filter and the discrete Frechet distance, learning checks for the
MLP / SDF / policy stack, the tube law, and bitwise determinism of reports
and field plots.
"""

import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from casf import (ArmModel, BodyPoint, CbfConfig, Circle, ConstraintSpec,
                  Demonstration, PolicyConfig, SdfTrainConfig, build_metric,
                  cbf_filter, discrete_frechet, fk_point, influence_weight,
                  integrate_stream, interpolate_demo, jacobian,
                  kappa_for_radius, pullback_metric, sample_body_points,
                  sample_tube, shape_velocity, shaped_joint_field, train_policy,
                  train_sdf, tube_std)
from casf import autodiff
from casf.bench import (METHODS, RunConfig, ShapingParams, constraint_specs,
                        render_task_fields, report_fingerprint, run_bench,
                        trained_policy)
from casf.kinematics import min_body_distance
from casf.tasks import TASK_FAMILIES, generate_task


# ---------------------------------------------------------------------------
# Criteria 1 + 2: full benchmark grid (safety and fidelity trends)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def bench_report(tmp_path_factory):
    cache = tmp_path_factory.mktemp("policy-cache")
    t0 = time.perf_counter()
    report = run_bench(seed=0, cache_dir=cache)
    return report, time.perf_counter() - t0


def test_safety_reproduction(bench_report):
    report, elapsed = bench_report
    assert list(report["tasks"]) == list(TASK_FAMILIES)
    for task in report["tasks"]:
        casf_cell = report["cells"][task]["casf"]
        assert casf_cell["error"] is None, casf_cell["error"]
        worst_mpd = max(r["mpd"] for r in casf_cell["per_rollout"])
        worst_iv = max(r["int_violation"] for r in casf_cell["per_rollout"])
        assert worst_mpd <= 1e-3, (task, worst_mpd)
        assert worst_iv <= 1e-3, (task, worst_iv)
        none_cell = report["cells"][task]["none"]
        assert none_cell["error"] is None
        assert none_cell["metrics"]["mpd"] > 0.01, task
    assert elapsed <= 600.0


def test_fidelity_trend(bench_report):
    report, _ = bench_report
    beats_projection = beats_cbf = 0
    for task in report["tasks"]:
        cells = report["cells"][task]
        fd = {m: cells[m]["metrics"]["masked_fd"]
              for m in ("casf", "projection", "cbf")}
        assert all(v is not None for v in fd.values()), (task, fd)
        beats_projection += fd["casf"] <= fd["projection"]
        beats_cbf += fd["casf"] <= fd["cbf"]
    assert beats_projection >= 7
    assert beats_cbf >= 6


# ---------------------------------------------------------------------------
# Criterion 3: metric algebra
# ---------------------------------------------------------------------------

def test_metric_eigenvalues_single_constraint():
    circle = Circle((0.3, -0.2), 0.25)
    spec = ConstraintSpec(circle, 50.0, 2.0, kappa_for_radius(0.15), 0.02)
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 200:
        a = rng.uniform(-1.5, 1.5, 2)
        s = circle.evaluate(a)
        if not s.gradient_norm_ok:
            continue
        m = build_metric([spec], a)
        w = influence_weight(s.value, spec.kappa, spec.margin)
        expected = np.sort([1.0 + w * spec.alpha, 1.0 + w * spec.beta])
        assert np.allclose(np.sort(np.linalg.eigvalsh(m)), expected, atol=1e-9)
        checked += 1


def test_metric_far_field_identity():
    circle = Circle((0.0, 0.0), 0.3)
    kappa = kappa_for_radius(0.1)
    spec = ConstraintSpec(circle, 50.0, 2.0, kappa, 0.02)
    far = 6.0 / math.sqrt(kappa) + spec.margin
    rng = np.random.default_rng(1)
    for _ in range(100):
        direction = rng.normal(size=2)
        direction /= np.linalg.norm(direction)
        a = np.asarray(circle.center) + (circle.radius + far * 1.01) * direction
        m = build_metric([spec], a)
        assert np.linalg.norm(m - np.eye(2), "fro") < 1e-6


def test_metric_spd_across_all_tasks():
    for family in TASK_FAMILIES:
        task = generate_task(family, 0)
        specs = constraint_specs(task, ShapingParams())
        lo = np.asarray(task.bounds[0], dtype=float)
        hi = np.asarray(task.bounds[1], dtype=float)
        rng = np.random.default_rng(2)
        for _ in range(1000):
            a = rng.uniform(lo, hi)
            m = build_metric(specs, a)
            assert np.allclose(m, m.T)
            assert np.linalg.eigvalsh(m).min() > 0.0


def test_metric_stationarity_residual():
    circle = Circle((0.1, 0.1), 0.3)
    spec = ConstraintSpec(circle, 100.0, 0.0, kappa_for_radius(0.05), 0.01)
    rng = np.random.default_rng(3)
    for _ in range(200):
        a = rng.uniform(-1.0, 1.0, 2)
        if not circle.evaluate(a).gradient_norm_ok:
            continue
        m = build_metric([spec], a)
        v = rng.normal(size=2)
        assert np.linalg.norm(m @ shape_velocity(m, v) - v) < 1e-9


# ---------------------------------------------------------------------------
# Criterion 4: kinematic pullback
# ---------------------------------------------------------------------------

def test_pullback_energy_identity():
    arm = ArmModel((0.5, 0.4, 0.3, 0.2))
    rng = np.random.default_rng(4)
    for _ in range(1000):
        q = rng.uniform(-np.pi, np.pi, arm.n_joints)
        bp = BodyPoint(int(rng.integers(arm.n_joints)), float(rng.uniform(0.1, 1.0)))
        jac = jacobian(arm, bp, q)
        root = rng.normal(size=(2, 2))
        m_x = root @ root.T + 0.1 * np.eye(2)
        qd = rng.normal(size=arm.n_joints)
        lhs = qd @ pullback_metric(jac, m_x) @ qd
        rhs = (jac @ qd) @ m_x @ (jac @ qd)
        assert abs(lhs - rhs) <= 1e-10


def test_jacobian_matches_finite_differences():
    arm = ArmModel((0.6, 0.5, 0.4))
    rng = np.random.default_rng(5)
    h = 1e-6
    for _ in range(100):
        q = rng.uniform(-np.pi, np.pi, arm.n_joints)
        bp = BodyPoint(int(rng.integers(arm.n_joints)), float(rng.uniform(0.1, 1.0)))
        jac = jacobian(arm, bp, q)
        for m in range(arm.n_joints):
            dq = np.zeros(arm.n_joints)
            dq[m] = h
            fd = (fk_point(arm, bp, q + dq) - fk_point(arm, bp, q - dq)) / (2 * h)
            assert np.allclose(jac[:, m], fd, atol=1e-6)


# ---------------------------------------------------------------------------
# Criterion 5: whole-body arm scenario
# ---------------------------------------------------------------------------

def test_whole_body_arm_scenario():
    t0 = time.perf_counter()
    arm = ArmModel((0.5, 0.4, 0.3))

    # Joint-space demo that grazes past the obstacle: the first joint dips
    # toward it mid-motion and retreats, so the unshaped sweep makes contact
    # while a collision-free nearby path exists.
    ts = np.linspace(0.0, 1.0, 80)
    bump = np.sin(np.pi * np.minimum(ts / 0.7, 1.0))
    bump[ts > 0.7] = 0.0
    demo = Demonstration.from_waypoints(np.column_stack([
        1.2 - 0.45 * bump + 0.3 * ts ** 2,
        -2.4 + 0.2 * ts,
        -0.4 + 0.1 * ts,
    ]))
    q0 = demo.waypoints[0]
    body_points = sample_body_points(arm, 15)
    ee = BodyPoint(2, 1.0)
    goal = fk_point(arm, ee, demo.waypoints[-1])
    obstacle = Circle((0.56 * math.cos(0.8), 0.56 * math.sin(0.8)), 0.08)

    policy = train_policy([demo], PolicyConfig(seed=0))
    base = policy.field(q0)
    spec = ConstraintSpec(obstacle, 100.0, 0.0, kappa_for_radius(0.03), 0.01)
    shaped = shaped_joint_field(arm, [(bp, spec) for bp in body_points], base)

    free_errors, shaped_errors = [], []
    for i in range(3):
        unshaped_roll = integrate_stream(base, q0, 0.02, 200, "euler",
                                         np.random.default_rng([5, i]))
        shaped_roll = integrate_stream(shaped, q0, 0.02, 200, "euler",
                                       np.random.default_rng([5, i]))
        dmin_un = min(min_body_distance(arm, body_points, [obstacle], q)
                      for q in unshaped_roll.states)
        dmin_sh = min(min_body_distance(arm, body_points, [obstacle], q)
                      for q in shaped_roll.states)
        assert dmin_un < 0.0, i          # unshaped sweep penetrates
        assert dmin_sh >= 0.0, (i, dmin_sh)
        free_errors.append(np.linalg.norm(fk_point(arm, ee, unshaped_roll.states[-1]) - goal))
        shaped_errors.append(np.linalg.norm(fk_point(arm, ee, shaped_roll.states[-1]) - goal))

    # obstacle-free baseline: the same policy rolled out without shaping
    assert np.mean(shaped_errors) <= 2.0 * np.mean(free_errors)
    assert time.perf_counter() - t0 <= 120.0


# ---------------------------------------------------------------------------
# Criterion 6: CBF oracle equivalence
# ---------------------------------------------------------------------------

def _qp_oracle(grad, d, gamma, v):
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


def test_cbf_matches_qp_oracle_and_barrier():
    gamma = 5.0
    cfg = CbfConfig(gamma=gamma)
    circle = Circle((0.0, 0.0), 0.5)
    rng = np.random.default_rng(6)
    checked = 0
    while checked < 500:
        a = rng.uniform(-1.5, 1.5, 2)
        s = circle.evaluate(a)
        if not s.gradient_norm_ok:
            continue
        v = rng.normal(size=2) * 2.0
        out = cbf_filter([circle], cfg, a, v)
        assert np.allclose(out, _qp_oracle(s.gradient, s.value, gamma, v),
                           atol=1e-6)
        if not np.allclose(out, v):
            assert s.gradient @ out + gamma * s.value >= -1e-9
        checked += 1


# ---------------------------------------------------------------------------
# Criterion 7: Frechet oracle equivalence
# ---------------------------------------------------------------------------

def _frechet_oracle(p, q):
    """Exhaustive search over monotone couplings (branch-and-bound walk)."""
    d = np.linalg.norm(p[:, None, :] - q[None, :, :], axis=2)
    n, m = d.shape
    best = [np.inf]

    def walk(i, j, cur):
        cur = max(cur, d[i, j])
        if cur >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = cur
            return
        if i + 1 < n:
            walk(i + 1, j, cur)
        if j + 1 < m:
            walk(i, j + 1, cur)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, cur)

    walk(0, 0, 0.0)
    return best[0]


def test_frechet_matches_exhaustive_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        p = rng.normal(size=(int(rng.integers(1, 7)), 2))
        q = rng.normal(size=(int(rng.integers(1, 7)), 2))
        assert discrete_frechet(p, q) == pytest.approx(_frechet_oracle(p, q),
                                                       abs=1e-12)


# ---------------------------------------------------------------------------
# Criterion 8: learning checks
# ---------------------------------------------------------------------------

def _flat(params):
    return np.concatenate([a.ravel() for a in (*params.weights, *params.biases)])


def _rebuild(params, vec):
    arrays, i = [], 0
    for a in (*params.weights, *params.biases):
        arrays.append(vec[i:i + a.size].reshape(a.shape))
        i += a.size
    n_w = len(params.weights)
    return autodiff.MlpParams(params.spec, tuple(arrays[:n_w]),
                              tuple(arrays[n_w:]))


def test_mlp_gradients_match_finite_differences():
    rng = np.random.default_rng(8)
    params = autodiff.init_params(autodiff.MlpSpec(3, (8, 8), 2), rng)
    x = rng.normal(size=(5, 3))
    upstream = rng.normal(size=(5, 2))
    grads = autodiff.backward_params(params, x, upstream)

    vec, gvec = _flat(params), _flat(grads)
    h = 1e-6
    for i in rng.choice(vec.size, 60, replace=False):
        hi = vec.copy(); hi[i] += h
        lo = vec.copy(); lo[i] -= h
        f_hi = float(np.sum(upstream * autodiff.forward(_rebuild(params, hi), x)))
        f_lo = float(np.sum(upstream * autodiff.forward(_rebuild(params, lo), x)))
        fd = (f_hi - f_lo) / (2 * h)
        assert abs(gvec[i] - fd) <= 1e-4 * max(1.0, abs(fd))

    # input gradients
    x0 = rng.normal(size=3)
    jac = autodiff.input_gradient(params, x0)
    for j in range(3):
        dx = np.zeros(3); dx[j] = h
        fd = (autodiff.forward(params, x0 + dx)
              - autodiff.forward(params, x0 - dx)) / (2 * h)
        assert np.all(np.abs(jac[:, j] - fd) <= 1e-4 * np.maximum(1.0, np.abs(fd)))


def test_learned_sdf_band_accuracy_and_eikonal():
    circle = Circle((0.0, 0.0), 0.5)
    fld = train_sdf(circle, SdfTrainConfig(epochs=600, lr=1.5e-3, seed=0,
                                           bounds=((-1.5, -1.5), (1.5, 1.5))))
    rng = np.random.default_rng(3)
    points, truth = [], []
    while len(points) < 500:
        p = rng.uniform(-1.5, 1.5, 2)
        d = circle.evaluate(p).value
        if abs(d) <= 0.3:
            points.append(p)
            truth.append(abs(d))  # learned field is unsigned
    points = np.asarray(points)
    pred = np.array([fld.evaluate(p).value for p in points])
    rms = float(np.sqrt(np.mean((pred - np.asarray(truth)) ** 2)))
    assert rms <= 0.05, rms
    norms = [float(np.linalg.norm(autodiff.input_gradient(fld.params, p)))
             for p in points]
    assert 0.9 <= float(np.median(norms)) <= 1.1


def test_trained_policy_reaches_line_endpoint():
    task = generate_task("line", 0)
    policy = trained_policy(task, PolicyConfig())
    h = task.demos[0].waypoints[0]
    roll = integrate_stream(policy.field(h), h, 0.02, 200, "euler",
                            np.random.default_rng([13, 0]))
    endpoint = task.demos[0].waypoints[-1]
    assert np.linalg.norm(roll.states[-1] - endpoint) <= 0.1


def test_two_mode_task_preserves_multimodality():
    t = np.linspace(0.0, 1.0, 100)
    s = np.minimum(t / 0.6, 1.0)
    profile = s * s * (3.0 - 2.0 * s)  # smoothstep separation
    x = 0.1 + 0.8 * t
    demos = [
        Demonstration.from_waypoints(np.column_stack([x, 0.5 + 0.3 * profile])),
        Demonstration.from_waypoints(np.column_stack([x, 0.5 - 0.3 * profile])),
    ]
    cfg = PolicyConfig(seed=0, sigma0=0.1, epochs=4000,
                       hidden_dims=(128, 128, 128), k_gain=3.0)
    policy = train_policy(demos, cfg)
    h = np.array([0.1, 0.5])
    fld = policy.field(h)
    up = demos[0].waypoints[-1]
    down = demos[1].waypoints[-1]
    near_up = near_down = 0
    for i in range(100):
        roll = integrate_stream(fld, h, cfg.sigma0, 200, "euler",
                                np.random.default_rng([11, i]))
        near_up += np.linalg.norm(roll.states[-1] - up) <= 0.1
        near_down += np.linalg.norm(roll.states[-1] - down) <= 0.1
    assert near_up >= 10
    assert near_down >= 10
    assert near_up + near_down >= 80  # few strays overall


# ---------------------------------------------------------------------------
# Criterion 9: tube law
# ---------------------------------------------------------------------------

def test_tube_std_matches_closed_form():
    waypoints = np.column_stack([np.linspace(0.1, 0.9, 50), np.full(50, 0.4)])
    demo = Demonstration.from_waypoints(waypoints)
    sigma0, k = 0.05, 5.0
    rng = np.random.default_rng(9)
    for t in (0.0, 0.5, 1.0):
        xi, _ = interpolate_demo(demo, t)
        draws = np.array([sample_tube(demo, t, sigma0, k, rng)
                          for _ in range(100_000)])
        empirical = float((draws - xi).std())
        assert empirical == pytest.approx(float(tube_std(sigma0, k, t)),
                                          rel=0.05)


# ---------------------------------------------------------------------------
# Criterion 10: determinism
# ---------------------------------------------------------------------------

def test_reports_and_svgs_are_deterministic(tmp_path):
    cfg = RunConfig(task=generate_task("line", 0), rollouts=2, steps=60,
                    policy=PolicyConfig(epochs=300, hidden_dims=(32, 32), seed=0))
    r1 = run_bench(["line"], METHODS, 0, cfg, cache_dir=tmp_path / "c1")
    r2 = run_bench(["line"], METHODS, 0, cfg, cache_dir=tmp_path / "c2")
    assert report_fingerprint(r1) == report_fingerprint(r2)

    first = render_task_fields("line", 0, tmp_path / "s1", cfg=cfg,
                               rollouts_per_plot=2)
    second = render_task_fields("line", 0, tmp_path / "s2", cfg=cfg,
                                rollouts_per_plot=2)
    assert len(first) == len(METHODS)
    for a, b in zip(first, second):
        with open(a, "rb") as fa, open(b, "rb") as fb:
            assert fa.read() == fb.read()
