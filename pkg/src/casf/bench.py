"""Benchmark orchestration: train, shape, roll out, score, report.

One trained policy per task is shared by all shaping methods (cached by a
content hash of demos, policy config and seed), mirroring a comparison of
shaping strategies on a fixed nominal policy. Every requested (task, method)
cell is either populated or carries an explicit error record.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff
from .baselines import CbfConfig, ProjectionConfig, filtered_field
from .errors import InvalidInputError
from .evaluation import score_rollout
from .metric import ConstraintSpec, kappa_for_radius, shaped_field
from .policy import PolicyConfig, StreamingPolicy, integrate_stream
from .render import render_field_svg, render_report_figure
from .sdf_learn import SdfTrainConfig, train_sdf
from .tasks import TaskSpec, generate_task

METHODS = ("none", "projection", "cbf", "casf")


@dataclass(frozen=True)
class ShapingParams:
    """Benchmark shaping defaults: a stiff, purely normal metric confined to a
    narrow band hugging the obstacle. A narrow band preserves fidelity (the
    nominal flow is untouched until just outside contact) while the high
    normal stiffness still zeroes the approach velocity before penetration."""

    alpha: float = 100.0
    beta: float = 0.0
    margin: float = 0.005
    influence_frac: float = 0.005  # e^-1 influence radius as a bounds-diagonal fraction


@dataclass(frozen=True)
class RunConfig:
    task: TaskSpec
    method: str = "casf"
    rollouts: int = 20
    steps: int = 200
    integrator: str = "euler"
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    shaping: ShapingParams = field(default_factory=ShapingParams)
    cbf: CbfConfig = field(default_factory=CbfConfig)
    projection: ProjectionConfig = field(default_factory=lambda: ProjectionConfig(margin=0.02))
    sdf_source: str = "analytic"
    sdf_train: SdfTrainConfig = field(default_factory=SdfTrainConfig)
    mask_margin: float = 0.02  # contact margin for the masked-FD reference mask
    out_dir: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}")
        if self.sdf_source not in ("analytic", "learned"):
            raise InvalidInputError(f"unknown sdf source {self.sdf_source!r}")


_POLICY_CACHE: dict = {}
_FIELD_CACHE: dict = {}


def _policy_key(task, cfg):
    h = hashlib.sha256()
    for demo in task.demos:
        h.update(demo.times.tobytes())
        h.update(demo.waypoints.tobytes())
    h.update(repr((cfg.k_gain, cfg.sigma0, cfg.epochs, cfg.batch_size,
                   cfg.seed, cfg.hidden_dims, cfg.lr)).encode())
    return h.hexdigest()


def trained_policy(task, cfg, cache_dir=None):
    """Trains (or fetches a cached) policy for the task's demonstrations."""
    from .policy import train_policy

    key = _policy_key(task, cfg)
    path = None
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        path = os.path.join(cache_dir, f"policy-{key}.json")
    if key in _POLICY_CACHE:
        pol = _POLICY_CACHE[key]
        if path is not None and not os.path.exists(path):
            autodiff.save_model(pol.net, path)
        return pol
    if path is not None and os.path.exists(path):
        params = autodiff.load_model(path)
        pol = StreamingPolicy(params, cfg, task.demos[0].dim)
        _POLICY_CACHE[key] = pol
        return pol
    pol = train_policy(list(task.demos), cfg)
    _POLICY_CACHE[key] = pol
    if path is not None:
        autodiff.save_model(pol.net, path)
    return pol


def constraint_specs(task, shaping, sdf_source="analytic", sdf_cfg=None):
    """One ConstraintSpec per task obstacle (analytic or learned field)."""
    diag = float(np.linalg.norm(np.asarray(task.bounds[1], dtype=float)
                                - np.asarray(task.bounds[0], dtype=float)))
    kappa = kappa_for_radius(shaping.influence_frac * diag)
    specs = []
    for shape in task.obstacles:
        fld = shape
        if sdf_source == "learned":
            cfg = sdf_cfg if sdf_cfg is not None else SdfTrainConfig()
            pad = 0.3 * diag
            lo = tuple(np.asarray(task.bounds[0], dtype=float) - pad)
            hi = tuple(np.asarray(task.bounds[1], dtype=float) + pad)
            cfg = replace(cfg, bounds=(lo, hi))
            key = (json.dumps(shape.to_dict(), sort_keys=True), repr(cfg))
            if key not in _FIELD_CACHE:
                _FIELD_CACHE[key] = train_sdf(shape, cfg)
            fld = _FIELD_CACHE[key]
        specs.append(ConstraintSpec(fld, shaping.alpha, shaping.beta, kappa,
                                    shaping.margin))
    return specs


def method_field(cfg, base_field, specs):
    """Wires the method's field wrapper; returns (field, post_step)."""
    fields = tuple(s.field for s in specs)
    if cfg.method == "none":
        return base_field, None
    if cfg.method == "casf":
        return shaped_field(specs, base_field), None
    if cfg.method == "projection":
        return filtered_field("projection", fields, cfg.projection, base_field)
    return filtered_field("cbf", fields, cfg.cbf, base_field)


def _rollout_rng(task_seed, index):
    return np.random.default_rng([task_seed, 7919, index])


def run_experiment(cfg, cache_dir=None):
    """Executes one (task, method) cell; never raises on per-rollout failures."""
    t0 = time.perf_counter()
    task = cfg.task
    cell = {"task": task.name, "method": cfg.method, "seed": task.seed,
            "error": None, "per_rollout": [], "metrics": None}
    try:
        pol = trained_policy(task, cfg.policy, cache_dir)
        h = task.demos[0].waypoints[0]
        base = pol.field(h)
        specs = constraint_specs(task, cfg.shaping, cfg.sdf_source, cfg.sdf_train)
        fld, post = method_field(cfg, base, specs)
        score_fields = tuple(task.obstacles)

        for i in range(cfg.rollouts):
            shaped = integrate_stream(fld, h, cfg.policy.sigma0, cfg.steps,
                                      cfg.integrator, _rollout_rng(task.seed, i),
                                      post_step=post)
            if cfg.method == "none":
                unshaped = shaped
            else:
                unshaped = integrate_stream(base, h, cfg.policy.sigma0, cfg.steps,
                                            cfg.integrator,
                                            _rollout_rng(task.seed, i))
            report = score_rollout(shaped, unshaped, score_fields,
                                   cfg.mask_margin)
            cell["per_rollout"].append(report.to_dict())

        cell["metrics"] = _aggregate(cell["per_rollout"])
    except Exception as exc:  # cell-level failures are recorded, not raised
        cell["error"] = f"{type(exc).__name__}: {exc}"
    cell["timing_s"] = time.perf_counter() - t0
    return cell


def _aggregate(per_rollout):
    out = {}
    for key in ("masked_fd", "mpd", "int_violation", "path_length"):
        vals = [r[key] for r in per_rollout if r[key] is not None]
        out[key] = float(np.mean(vals)) if vals else None
    return out


def run_bench(families=None, methods=METHODS, seed=0, base_cfg=None,
              cache_dir=None, progress=None):
    """Full benchmark grid over task families and shaping methods."""
    from .tasks import TASK_FAMILIES

    families = list(families if families is not None else TASK_FAMILIES)
    base_cfg = base_cfg if base_cfg is not None else RunConfig(
        task=generate_task(families[0], seed))

    report = {
        "config": {
            "rollouts": base_cfg.rollouts, "steps": base_cfg.steps,
            "integrator": base_cfg.integrator,
            "policy": {"k_gain": base_cfg.policy.k_gain,
                       "sigma0": base_cfg.policy.sigma0,
                       "epochs": base_cfg.policy.epochs,
                       "batch_size": base_cfg.policy.batch_size,
                       "seed": base_cfg.policy.seed},
            "shaping": {"alpha": base_cfg.shaping.alpha,
                        "beta": base_cfg.shaping.beta,
                        "margin": base_cfg.shaping.margin,
                        "influence_frac": base_cfg.shaping.influence_frac},
            "cbf": {"gamma": base_cfg.cbf.gamma,
                    "max_passes": base_cfg.cbf.max_passes},
            "projection": {"margin": base_cfg.projection.margin,
                           "push_out": base_cfg.projection.push_out},
            "sdf_source": base_cfg.sdf_source,
            "mask_margin": base_cfg.mask_margin,
            "masked_fd_rule": "mask removes unshaped reference samples whose "
                              "distance to any obstacle is below the contact margin",
            "seed": seed,
        },
        "tasks": families,
        "methods": list(methods),
        "cells": {},
    }
    for family in families:
        task = generate_task(family, seed)
        report["cells"][family] = {}
        for method in methods:
            cfg = replace(base_cfg, task=task, method=method)
            cell = run_experiment(cfg, cache_dir)
            report["cells"][family][method] = cell
            if progress is not None:
                progress(family, method, cell)
    return report


def _strip_timings(obj):
    if isinstance(obj, dict):
        return {k: _strip_timings(v) for k, v in obj.items() if k != "timing_s"}
    if isinstance(obj, list):
        return [_strip_timings(v) for v in obj]
    return obj


def report_fingerprint(report):
    """Stable JSON text of a report with timings removed (determinism checks)."""
    return json.dumps(_strip_timings(report), sort_keys=True)


def emit_report(report, out_dir, formats=("json", "csv", "markdown"),
                figure=True):
    """Writes the report grid as JSON / CSV / markdown plus a summary figure."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    metric_keys = ("masked_fd", "mpd", "int_violation", "path_length")
    grid = {task: {method: (cell["metrics"] or {})
                   for method, cell in methods.items()}
            for task, methods in report["cells"].items()}

    if "json" in formats:
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            json.dump(report, fh, indent=2)
        written.append(path)

    if "csv" in formats:
        path = os.path.join(out_dir, "report.csv")
        with open(path, "w") as fh:
            fh.write("task,method," + ",".join(metric_keys) + ",error\n")
            for task in report["tasks"]:
                for method in report["methods"]:
                    cell = report["cells"][task][method]
                    m = cell["metrics"] or {}
                    vals = ["" if m.get(k) is None else repr(m[k])
                            for k in metric_keys]
                    err = (cell["error"] or "").replace(",", ";")
                    fh.write(f"{task},{method}," + ",".join(vals) + f",{err}\n")
        written.append(path)

    if "markdown" in formats:
        path = os.path.join(out_dir, "report.md")
        tasks = report["tasks"]
        with open(path, "w") as fh:
            fh.write("| Method | Metric | " + " | ".join(tasks) + " |\n")
            fh.write("|---|---|" + "---|" * len(tasks) + "\n")
            for method in report["methods"]:
                for key in metric_keys:
                    row = [f"| {method} | {key} |"]
                    for task in tasks:
                        m = report["cells"][task][method]["metrics"] or {}
                        v = m.get(key)
                        row.append(" NA |" if v is None else f" {v:.3f} |")
                    fh.write("".join(row) + "\n")
        written.append(path)

    if figure:
        path = os.path.join(out_dir, "report.png")
        render_report_figure(grid, path)
        written.append(path)
    return written


def render_task_fields(family, seed, out_dir, cfg=None, rollouts_per_plot=5,
                       cache_dir=None):
    """Writes one field/trajectory SVG per method for a task family."""
    os.makedirs(out_dir, exist_ok=True)
    task = generate_task(family, seed)
    base_cfg = cfg if cfg is not None else RunConfig(task=task)
    pol = trained_policy(task, base_cfg.policy, cache_dir)
    h = task.demos[0].waypoints[0]
    base = pol.field(h)
    specs = constraint_specs(task, base_cfg.shaping)
    written = []
    for method in METHODS:
        mcfg = replace(base_cfg, task=task, method=method)
        fld, post = method_field(mcfg, base, specs)
        rollouts = [integrate_stream(fld, h, base_cfg.policy.sigma0,
                                     base_cfg.steps, base_cfg.integrator,
                                     _rollout_rng(task.seed, i), post_step=post)
                    for i in range(rollouts_per_plot)]
        path = os.path.join(out_dir, f"{family}-{method}.svg")
        render_field_svg(fld, task.obstacles, rollouts, task.bounds, path,
                         demo=task.demos[0],
                         specs=specs if method == "casf" else ())
        written.append(path)
    return written
