"""Command-line surface binding the modules into reproducible runs.

Exit codes: 0 success, 1 domain or IO failure, 2 usage error. The worker pool
size resolves as --workers flag > SMALLDATA_WORKERS env var > plan default.
External trainers are registered as --trainer "external:<command line>".
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import asha, datakit, heightfield, learner, sweep
from .heightfield import LABELS


class CliError(Exception):
    pass


def _resolve_workers(args) -> int | None:
    if getattr(args, "workers", None):
        return args.workers
    env = os.environ.get("SMALLDATA_WORKERS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"SMALLDATA_WORKERS must be an integer, got {env!r}") from None
    return None


def _load_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"invalid JSON in {path}: {exc}") from None


def _parse_trainer(value: str) -> sweep.TrainerSpec:
    if value == "builtin":
        return sweep.TrainerSpec(name="builtin", kind="builtin")
    if value.startswith("external:"):
        command = value[len("external:"):]
        if not command:
            raise CliError("external trainer needs a command: --trainer external:<command>")
        return sweep.TrainerSpec(name="external", kind="external", command=command,
                                 checkpoint="microsoft/resnet-18")
    raise CliError(f"unknown trainer {value!r}; use builtin or external:<command>")


def cmd_generate(args) -> int:
    counts_raw = args.counts.split(",")
    if len(counts_raw) != 3:
        raise CliError("--counts takes three integers: nominal,gap,overlap")
    try:
        numbers = [int(c) for c in counts_raw]
    except ValueError:
        raise CliError(f"--counts must be integers, got {args.counts!r}") from None
    if any(n < 0 for n in numbers):
        raise CliError("--counts must be non-negative")
    counts = dict(zip(LABELS, numbers))

    cfg_kwargs = {}
    if args.config:
        cfg_kwargs = _load_json(args.config)
    cfg_kwargs["seed"] = args.seed
    cfg = heightfield.synthesis_config_from_dict(cfg_kwargs)

    patches, manifest = heightfield.synthesize_dataset(cfg, counts)
    manifest["created_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    heightfield.write_dataset_dir(args.out, patches, manifest)
    for label in LABELS:
        print(f"{label.value:8s} {counts[label]}")
    print(f"wrote {len(patches)} patches to {args.out}")
    return 0


def cmd_split(args) -> int:
    manifest = heightfield.read_manifest(args.dataset)
    index = datakit.DatasetIndex.from_manifest(manifest)
    spec = datakit.SplitSpec(train_fraction=args.train_fraction,
                             eval_fraction_of_train=args.eval_fraction,
                             seed=args.seed)
    result = datakit.stratified_split(index, spec)
    out = datakit.split_to_manifest(result)
    out["spec"] = {"train_fraction": spec.train_fraction,
                   "eval_fraction_of_train": spec.eval_fraction_of_train,
                   "seed": spec.seed}
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(out, indent=2))
    for name, part in result.parts().items():
        hist = " ".join(f"{label.value}={part.histogram[label]}" for label in LABELS)
        print(f"{name:5s} n={len(part):6d}  {hist}")
    return 0


def cmd_preprocess(args) -> int:
    patches, manifest = heightfield.load_dataset_dir(args.dataset)
    index = datakit.DatasetIndex.from_manifest(manifest)
    split_doc = _load_json(args.split)
    split = datakit.split_from_manifest(index, split_doc)

    data = sweep.PreparedData(
        index=index, split=split,
        X=None, y=None,  # features are not needed to serialize model inputs
        row_of={item["id"]: row for row, item in enumerate(manifest["items"])},
        patches=patches, ids=[item["id"] for item in manifest["items"]])
    path = sweep.write_trainer_data(data, split.train, args.out)
    print(f"wrote trainer data manifest to {path}")
    return 0


def _prepare_from_dirs(args, plan: sweep.ExperimentPlan):
    patches, manifest = heightfield.load_dataset_dir(args.dataset)
    if args.split:
        index = datakit.DatasetIndex.from_manifest(manifest)
        split = datakit.split_from_manifest(index, _load_json(args.split))
        data = sweep.prepare(patches, manifest, plan)
        data.split = split
    else:
        data = sweep.prepare(patches, manifest, plan)
    return data


def _plan_from_args(args) -> sweep.ExperimentPlan:
    if args.plan:
        return sweep.plan_from_dict(_load_json(args.plan))
    spec = _parse_trainer(args.trainer)
    kwargs = {"trainer_specs": (spec,)}
    if getattr(args, "ladder", None):
        kwargs["ladder_sizes"] = tuple(int(s) for s in args.ladder.split(","))
    if getattr(args, "seeds", None):
        kwargs["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    if getattr(args, "tuning_per_class", None):
        kwargs["tuning_examples_per_class"] = args.tuning_per_class
    if getattr(args, "epochs", None):
        kwargs["fine_tune_epochs"] = args.epochs
    if getattr(args, "split_seed", None) is not None:
        kwargs["split"] = datakit.SplitSpec(seed=args.split_seed)
    return sweep.ExperimentPlan(**kwargs)


def cmd_tune(args) -> int:
    plan = _plan_from_args(args)
    data = _prepare_from_dirs(args, plan)
    workers = _resolve_workers(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tuned = {}
    for spec in plan.trainer_specs:
        config = sweep.tune(plan, spec, data, rundir=out, workers=workers)
        tuned[spec.name] = config
        print(f"{spec.name}: lr={config.learning_rate:.6g} "
              f"batch_size={config.batch_size}")
    (out / "tuned.json").write_text(json.dumps(sweep.tuned_to_dict(tuned), indent=2))
    return 0


def cmd_sweep(args) -> int:
    plan = _plan_from_args(args)
    data = _prepare_from_dirs(args, plan)
    workers = _resolve_workers(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.tuned:
        tuned = sweep.tuned_from_dict(_load_json(args.tuned))
    else:
        tuned = {}
        for spec in plan.trainer_specs:
            tuned[spec.name] = sweep.tune(plan, spec, data, rundir=out, workers=workers)
        (out / "tuned.json").write_text(json.dumps(sweep.tuned_to_dict(tuned), indent=2))

    report = sweep.run_sweep(plan, data, tuned, rundir=out, workers=workers)
    (out / "run_manifest.json").write_text(json.dumps({
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "plan": sweep.plan_to_dict(plan),
        "tuned": sweep.tuned_to_dict(tuned),
        "n_records": len(report.records),
        "n_failures": len(report.failures),
    }, indent=2))
    for key, stats in sorted(report.summary().items()):
        trainer, size = key
        print(f"{trainer} size={size}: macro_f1 mean={stats['mean']:.4f} "
              f"spread={stats['spread']:.4f} n={stats['n']}")
    if report.failures:
        print(f"{len(report.failures)} cell(s) failed", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    report = sweep.report_from_dict(_load_json(args.input))
    payload = sweep.emit_report(report, args.format)
    if args.out:
        Path(args.out).write_bytes(payload)
    else:
        sys.stdout.write(payload.decode())
    return 0


def cmd_audit(args) -> int:
    violations = asha.audit_log_file(args.log)
    if violations:
        for v in violations:
            print(str(v), file=sys.stderr)
        return 1
    print("promotion audit clean")
    return 0


def cmd_gradcheck(args) -> int:
    worst = learner.gradient_check(n_draws=args.draws, seed=args.seed)
    print(f"max relative error over {args.draws} draws: {worst:.3e}")
    return 0 if worst < 1e-4 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smalldata",
        description="Small-data defect classification benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a labeled patch dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--counts", required=True, help="nominal,gap,overlap")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file of generator settings")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("split", help="stratified train/eval/test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--eval-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("preprocess", help="serialize model inputs for external trainers")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    for name, func in (("tune", cmd_tune), ("sweep", cmd_sweep)):
        p = sub.add_parser(name)
        p.add_argument("--dataset", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--split", help="split manifest (computed from plan seed if absent)")
        p.add_argument("--plan", help="JSON experiment plan")
        p.add_argument("--trainer", default="builtin",
                       help="builtin or external:<command>")
        p.add_argument("--ladder", help="comma-separated per-class sizes")
        p.add_argument("--seeds", help="comma-separated experiment seeds")
        p.add_argument("--tuning-per-class", type=int, dest="tuning_per_class")
        p.add_argument("--epochs", type=int, help="fine-tuning epochs per cell")
        p.add_argument("--split-seed", type=int, dest="split_seed")
        p.add_argument("--workers", type=int)
        if name == "sweep":
            p.add_argument("--tuned", help="reuse a tuned.json instead of searching")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="convert report.json to csv or plotdata")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=("csv", "json", "plotdata"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("audit", help="replay a search event log against the promotion rule")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("gradcheck", help="finite-difference check of the baseline gradient")
    p.add_argument("--draws", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, heightfield.HeightfieldError, datakit.DatakitError,
            learner.LearnerError, asha.AshaError, sweep.SweepError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:  # console_scripts hook
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
