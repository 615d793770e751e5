"""Command-line benchmark front end.

Subcommands: gen-data, train-policy, train-sdf, rollout, bench, field-plot.
A single JSON config document (--config) overrides the defaults of every
component; --seed and --out apply globally. Exit codes: 0 success, 1 config
error, 2 runtime failure (with any partial report written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import autodiff
from .baselines import CbfConfig, ProjectionConfig
from .bench import (METHODS, RunConfig, ShapingParams, constraint_specs,
                    emit_report, method_field, run_bench, render_task_fields,
                    trained_policy)
from .errors import InvalidInputError
from .geometry import shape_from_dict
from .policy import PolicyConfig, StreamingPolicy, integrate_stream
from .sdf_learn import SdfTrainConfig, save_learned_field, train_sdf
from .tasks import (TASK_FAMILIES, generate_task, ingest_demo_csv,
                    write_trajectory_csv)


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise InvalidInputError("config document must be a JSON object")
    return doc


def _dataclass_from(cfg_cls, doc, key):
    section = doc.get(key, {})
    try:
        return cfg_cls(**{k: tuple(v) if isinstance(v, list) else v
                          for k, v in section.items()})
    except TypeError as exc:
        raise InvalidInputError(f"bad config section {key!r}: {exc}") from exc


def _run_config(doc, seed):
    policy = _dataclass_from(PolicyConfig, doc, "policy")
    if "seed" not in doc.get("policy", {}):
        policy = replace(policy, seed=seed)
    bench_doc = doc.get("bench", {})
    return RunConfig(
        task=generate_task(bench_doc.get("families", TASK_FAMILIES)[0], seed),
        rollouts=bench_doc.get("rollouts", 20),
        steps=bench_doc.get("steps", 200),
        integrator=bench_doc.get("integrator", "euler"),
        policy=policy,
        shaping=_dataclass_from(ShapingParams, doc, "shaping"),
        cbf=_dataclass_from(CbfConfig, doc, "cbf"),
        projection=_dataclass_from(ProjectionConfig, doc, "projection"),
        sdf_source=bench_doc.get("sdf_source", "analytic"),
        sdf_train=_dataclass_from(SdfTrainConfig, doc, "sdf"),
        mask_margin=bench_doc.get("mask_margin", 0.02),
    )


def _families(args, doc):
    if args.family:
        return [args.family]
    return list(doc.get("bench", {}).get("families", TASK_FAMILIES))


def cmd_gen_data(args, doc):
    os.makedirs(args.out, exist_ok=True)
    for family in _families(args, doc):
        task = generate_task(family, args.seed)
        demo = task.demos[0]
        write_trajectory_csv(demo.times, demo.waypoints,
                             os.path.join(args.out, f"{family}-demo.csv"))
        with open(os.path.join(args.out, f"{family}-task.json"), "w") as fh:
            json.dump({"name": task.name, "seed": task.seed,
                       "bounds": [list(b) for b in task.bounds],
                       "obstacles": [o.to_dict() for o in task.obstacles]}, fh,
                      indent=2)
        print(f"wrote {family} demo and task description to {args.out}")
    return 0


def cmd_train_policy(args, doc):
    os.makedirs(args.out, exist_ok=True)
    cfg = _run_config(doc, args.seed)
    for family in _families(args, doc):
        task = generate_task(family, args.seed)
        pol = trained_policy(task, cfg.policy, cache_dir=args.out)
        path = os.path.join(args.out, f"{family}-policy.json")
        autodiff.save_model(pol.net, path)
        print(f"{family}: final loss {pol.final_loss:.5f} -> {path}")
    return 0


def cmd_train_sdf(args, doc):
    os.makedirs(args.out, exist_ok=True)
    sdf_cfg = _dataclass_from(SdfTrainConfig, doc, "sdf")
    if "seed" not in doc.get("sdf", {}):
        sdf_cfg = replace(sdf_cfg, seed=args.seed)
    if "shape" in doc:
        shape = shape_from_dict(doc["shape"])
        name = doc["shape"].get("type", "shape")
    else:
        family = args.family or TASK_FAMILIES[0]
        task = generate_task(family, args.seed)
        shape = task.obstacles[0]
        name = f"{family}-obstacle"
    fld = train_sdf(shape, sdf_cfg)
    path = os.path.join(args.out, f"{name}-sdf.json")
    save_learned_field(fld, path)
    print(f"trained distance field for {name}: final loss "
          f"{fld.final_loss:.5f} -> {path}")
    return 0


def cmd_rollout(args, doc):
    os.makedirs(args.out, exist_ok=True)
    cfg = _run_config(doc, args.seed)
    family = args.family or TASK_FAMILIES[0]
    task = generate_task(family, args.seed)
    cfg = replace(cfg, task=task, method=args.method)
    pol = trained_policy(task, cfg.policy)
    h = task.demos[0].waypoints[0]
    specs = constraint_specs(task, cfg.shaping, cfg.sdf_source, cfg.sdf_train)
    fld, post = method_field(cfg, pol.field(h), specs)
    for i in range(args.n):
        rng = np.random.default_rng([args.seed, 7919, i])
        r = integrate_stream(fld, h, cfg.policy.sigma0, cfg.steps,
                             cfg.integrator, rng, post_step=post)
        path = os.path.join(args.out, f"{family}-{args.method}-rollout{i}.csv")
        write_trajectory_csv(r.times, r.states, path)
    print(f"wrote {args.n} rollouts to {args.out}")
    return 0


def cmd_bench(args, doc):
    cfg = _run_config(doc, args.seed)
    methods = doc.get("bench", {}).get("methods", list(METHODS))

    def progress(family, method, cell):
        status = cell["error"] or "ok"
        print(f"[{family:>8s} / {method:>10s}] {status} "
              f"({cell['timing_s']:.1f}s)")

    report = run_bench(_families(args, doc), methods, args.seed, cfg,
                       cache_dir=os.path.join(args.out, "cache"),
                       progress=progress)
    written = emit_report(report, args.out)
    for path in written:
        print(f"wrote {path}")
    if any(cell["error"] for methods_ in report["cells"].values()
           for cell in methods_.values()):
        return 2
    return 0


def cmd_field_plot(args, doc):
    cfg = _run_config(doc, args.seed)
    for family in _families(args, doc):
        for path in render_task_fields(family, args.seed, args.out, cfg):
            print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="casf",
        description="Constraint-aware streaming flow benchmark harness")
    parser.add_argument("--config", default=None, help="JSON config document")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic task demos and shapes")
    p.add_argument("--family", choices=TASK_FAMILIES, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-policy", help="train streaming flow policies")
    p.add_argument("--family", choices=TASK_FAMILIES, default=None)
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("train-sdf", help="train a neural distance field")
    p.add_argument("--family", choices=TASK_FAMILIES, default=None)
    p.set_defaults(func=cmd_train_sdf)

    p = sub.add_parser("rollout", help="integrate and export trajectories")
    p.add_argument("--family", choices=TASK_FAMILIES, default=None)
    p.add_argument("--method", choices=METHODS, default="casf")
    p.add_argument("-n", type=int, default=5, help="number of rollouts")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("bench", help="run the full benchmark grid")
    p.add_argument("--family", choices=TASK_FAMILIES, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("field-plot", help="render velocity-field SVGs")
    p.add_argument("--family", choices=TASK_FAMILIES, default=None)
    p.set_defaults(func=cmd_field_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        doc = _load_config(args.config)
    except (OSError, json.JSONDecodeError, InvalidInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args, doc)
    except InvalidInputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure, partial outputs may exist
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
