"""Two-phase experiment orchestration: tune once, then sweep the size ladder.

Phase 1 (tune): the train split is balanced down to a fixed per-class tuning
budget and the scheduler searches learning rate and batch size against the
eval split. This happens once per trainer.

Phase 2 (sweep): for every (trainer, ladder size, seed) cell, a nested
balanced subset of the train split is drawn, a fresh model is fine-tuned with
the tuned configuration, and the untouched test split is scored. Subsets are
nested across sizes and shared across trainers, so size effects are not
confounded by resampling. Failed cells are recorded and the sweep continues.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics
from .asha import AshaConfig, AshaScheduler, SearchSpace, run_search, write_event_log
from .datakit import DatasetIndex, SplitResult, SplitSpec, balance, stratified_split, subset_ladder
from .exttrainer import ExternalTrainer, TrainerProcessError
from .heightfield import LABELS, LabeledPatch
from .learner import BaselineTrainer, TrainConfig, build_features
from .preprocess import encode_model_input, preprocess
from .seeding import derive_seed


class SweepError(ValueError):
    pass


@dataclass(frozen=True)
class TrainerSpec:
    """A trainer under study: the builtin baseline or an external command."""

    name: str
    kind: str = "builtin"              # "builtin" | "external"
    command: str | None = None         # launch command for external adapters
    checkpoint: str | None = None      # checkpoint id passed to external init

    def __post_init__(self):
        if self.kind not in ("builtin", "external"):
            raise SweepError(f"trainer kind must be builtin or external, got {self.kind!r}")
        if self.kind == "external" and not self.command:
            raise SweepError(f"external trainer {self.name!r} needs a command")


DEFAULT_LADDER = (200, 400, 600, 800, 1200, 1600, 2000)


@dataclass(frozen=True)
class ExperimentPlan:
    trainer_specs: tuple[TrainerSpec, ...]
    ladder_sizes: tuple[int, ...] = DEFAULT_LADDER
    tuning_examples_per_class: int = 512
    asha: AshaConfig = field(default_factory=AshaConfig)
    space: SearchSpace = field(default_factory=SearchSpace)
    split: SplitSpec = field(default_factory=SplitSpec)
    seeds: tuple[int, ...] = (0,)
    fine_tune_epochs: int = 32
    pool_factor: int = 4

    def __post_init__(self):
        if not self.trainer_specs:
            raise SweepError("plan needs at least one trainer")
        if not self.seeds:
            raise SweepError("plan needs at least one seed")
        if any(b <= a for a, b in zip(self.ladder_sizes, self.ladder_sizes[1:])):
            raise SweepError("ladder sizes must be strictly increasing")
        if self.fine_tune_epochs < 0:
            raise SweepError("fine_tune_epochs must be >= 0")


def plan_to_dict(plan: ExperimentPlan) -> dict:
    return {
        "trainers": [{"name": s.name, "kind": s.kind, "command": s.command,
                      "checkpoint": s.checkpoint} for s in plan.trainer_specs],
        "ladder_sizes": list(plan.ladder_sizes),
        "tuning_examples_per_class": plan.tuning_examples_per_class,
        "asha": {"max_t": plan.asha.max_t, "grace_period": plan.asha.grace_period,
                 "reduction_factor": plan.asha.reduction_factor,
                 "n_trials": plan.asha.n_trials, "workers": plan.asha.workers},
        "space": {"lr_min": plan.space.lr_min, "lr_max": plan.space.lr_max,
                  "batch_sizes": list(plan.space.batch_sizes)},
        "split": {"train_fraction": plan.split.train_fraction,
                  "eval_fraction_of_train": plan.split.eval_fraction_of_train,
                  "seed": plan.split.seed},
        "seeds": list(plan.seeds),
        "fine_tune_epochs": plan.fine_tune_epochs,
        "pool_factor": plan.pool_factor,
    }


def plan_from_dict(data: dict) -> ExperimentPlan:
    kwargs = {}
    if "trainers" in data:
        kwargs["trainer_specs"] = tuple(
            TrainerSpec(name=t["name"], kind=t.get("kind", "builtin"),
                        command=t.get("command"), checkpoint=t.get("checkpoint"))
            for t in data["trainers"])
    else:
        raise SweepError("plan file must name at least one trainer")
    if "ladder_sizes" in data:
        kwargs["ladder_sizes"] = tuple(data["ladder_sizes"])
    if "tuning_examples_per_class" in data:
        kwargs["tuning_examples_per_class"] = int(data["tuning_examples_per_class"])
    if "asha" in data:
        kwargs["asha"] = AshaConfig(**data["asha"])
    if "space" in data:
        s = dict(data["space"])
        if "batch_sizes" in s:
            s["batch_sizes"] = tuple(s["batch_sizes"])
        kwargs["space"] = SearchSpace(**s)
    if "split" in data:
        kwargs["split"] = SplitSpec(**data["split"])
    if "seeds" in data:
        kwargs["seeds"] = tuple(data["seeds"])
    if "fine_tune_epochs" in data:
        kwargs["fine_tune_epochs"] = int(data["fine_tune_epochs"])
    if "pool_factor" in data:
        kwargs["pool_factor"] = int(data["pool_factor"])
    return ExperimentPlan(**kwargs)


@dataclass
class PreparedData:
    """Featurized dataset plus its split, shared by every trainer and cell."""

    index: DatasetIndex
    split: SplitResult
    X: np.ndarray
    y: np.ndarray
    row_of: dict[str, int]
    patches: list[LabeledPatch]
    ids: list[str]

    def rows(self, index: DatasetIndex) -> np.ndarray:
        return np.array([self.row_of[i] for i in index.ids()], dtype=np.int64)


def prepare(patches: list[LabeledPatch], manifest: dict, plan: ExperimentPlan,
            keep_patches: bool = True) -> PreparedData:
    """Split and featurize a dataset once, for reuse by every trainer and cell.

    keep_patches=False drops the pixel data after featurization; builtin-only
    runs do not need it, and a production-scale dataset holds a gigabyte of
    raster.
    """
    index = DatasetIndex.from_manifest(manifest)
    split = stratified_split(index, plan.split)
    X, y = build_features(patches, plan.pool_factor)
    ids = [item["id"] for item in manifest["items"]]
    row_of = {item_id: row for row, item_id in enumerate(ids)}
    return PreparedData(index=index, split=split, X=X, y=y, row_of=row_of,
                        patches=list(patches) if keep_patches else [], ids=ids)


def check_test_hygiene(train_like: DatasetIndex, test: DatasetIndex) -> None:
    overlap_ids = set(train_like.ids()) & set(test.ids())
    if overlap_ids:
        raise SweepError(f"test split leaked into training: {sorted(overlap_ids)[:3]}...")


def write_trainer_data(data: PreparedData, train_index: DatasetIndex,
                       out_dir: str | Path) -> Path:
    """Serialize model inputs and the split manifest for external trainers.

    Writes one .mi file per item under out_dir/inputs plus trainer_data.json
    naming the train/eval/test members with labels and file paths.
    """
    if not data.patches:
        raise SweepError("prepared data was built with keep_patches=False; "
                         "external trainers need the raster data")
    out = Path(out_dir)
    inputs = out / "inputs"
    inputs.mkdir(parents=True, exist_ok=True)
    needed: dict[str, str] = {}
    parts = {"train": train_index, "eval": data.split.eval, "test": data.split.test}
    for part in parts.values():
        for item_id, _ in part.entries:
            needed.setdefault(item_id, f"inputs/{item_id}.mi")
    for item_id, rel in needed.items():
        patch = data.patches[data.row_of[item_id]]
        blob = encode_model_input(preprocess(patch.image, source_id=item_id))
        (out / rel).write_bytes(blob)
    manifest = {
        "version": 1,
        "labels": [label.value for label in LABELS],
        "parts": {name: [{"id": i, "label": lab.value, "file": needed[i]}
                         for i, lab in part.entries]
                  for name, part in parts.items()},
    }
    path = out / "trainer_data.json"
    path.write_text(json.dumps(manifest))
    return path


def _make_factory(spec: TrainerSpec, data: PreparedData, train_index: DatasetIndex,
                  plan: ExperimentPlan, workdir: Path | None):
    """Trainer factory for one (spec, training subset) pairing."""
    check_test_hygiene(train_index, data.split.test)
    check_test_hygiene(data.split.eval, data.split.test)
    if spec.kind == "builtin":
        train_rows = data.rows(train_index)
        eval_rows = data.rows(data.split.eval)
        test_rows = data.rows(data.split.test)

        def factory(config: TrainConfig, trial_id: int) -> BaselineTrainer:
            return BaselineTrainer(data.X, data.y, train_rows, eval_rows, test_rows,
                                   pool_factor=plan.pool_factor)
        return factory

    if workdir is None:
        raise SweepError(f"external trainer {spec.name!r} needs a run directory")
    manifest_path = write_trainer_data(data, train_index, workdir)

    def factory(config: TrainConfig, trial_id: int) -> ExternalTrainer:
        return ExternalTrainer(spec.command, manifest_path,
                               checkpoint=spec.checkpoint or spec.name)
    return factory


def tune(plan: ExperimentPlan, spec: TrainerSpec, data: PreparedData,
         rundir: str | Path | None = None, workers: int | None = None,
         trainer_factory=None) -> TrainConfig:
    """Balance the train split to the tuning budget and run the full search.

    Returns the best trial's configuration; persists the event log when a run
    directory is given. trainer_factory overrides the factory built from the
    TrainerSpec (used to drive the search with stub trainers in tests).
    """
    tuning_index = balance(data.split.train, plan.tuning_examples_per_class,
                           seed=derive_seed(plan.split.seed, "tuning-subset"))
    if trainer_factory is None:
        workdir = Path(rundir) / f"tune_{spec.name}" if rundir is not None else None
        factory = _make_factory(spec, data, tuning_index, plan, workdir)
    else:
        factory = trainer_factory
    scheduler = AshaScheduler(plan.space, plan.asha,
                              seed=derive_seed(plan.split.seed, "asha", spec.name))
    run_search(scheduler, factory, workers=workers)
    if rundir is not None:
        Path(rundir).mkdir(parents=True, exist_ok=True)
        write_event_log(Path(rundir) / f"asha_{spec.name}.jsonl", scheduler)
    config, _, _ = scheduler.best_trial()
    return config


def tuned_to_dict(tuned: dict[str, TrainConfig]) -> dict:
    """Tuning result file content: best configuration per trainer name."""
    return {name: {"learning_rate": cfg.learning_rate, "batch_size": cfg.batch_size,
                   "seed": cfg.seed}
            for name, cfg in tuned.items()}


def tuned_from_dict(data: dict) -> dict[str, TrainConfig]:
    return {name: TrainConfig(**cfg) for name, cfg in data.items()}


@dataclass(frozen=True)
class RunRecord:
    trainer: str
    train_size: int
    seed: int
    config: TrainConfig
    report: metrics.EvalReport
    wall_seconds: float


@dataclass(frozen=True)
class CellFailure:
    trainer: str
    train_size: int
    seed: int
    error: str


@dataclass(frozen=True)
class SweepReport:
    records: tuple[RunRecord, ...]
    failures: tuple[CellFailure, ...] = ()

    def summary(self) -> dict[tuple[str, int], dict]:
        """Mean and spread (population std) of macro-F1 per (trainer, size)."""
        groups: dict[tuple[str, int], list[float]] = {}
        for r in self.records:
            groups.setdefault((r.trainer, r.train_size), []).append(r.report.macro_f1)
        return {key: {"mean": float(np.mean(vals)), "spread": float(np.std(vals)),
                      "n": len(vals)}
                for key, vals in groups.items()}


def run_sweep(plan: ExperimentPlan, data: PreparedData,
              tuned: dict[str, TrainConfig],
              rundir: str | Path | None = None,
              workers: int | None = None) -> SweepReport:
    """Fine-tune every (trainer, ladder size, seed) cell and score the test split.

    Every cell starts from a fresh initialization; the per-seed ladder is
    shared across trainers. Cell failures are recorded without aborting.
    """
    for spec in plan.trainer_specs:
        if spec.name not in tuned:
            raise SweepError(f"no tuned configuration for trainer {spec.name!r}")
    ladders = {seed: subset_ladder(data.split.train, list(plan.ladder_sizes), seed)
               for seed in plan.seeds}

    cells = []
    for spec in plan.trainer_specs:
        for seed in plan.seeds:
            for size_pos, size in enumerate(plan.ladder_sizes):
                cells.append((spec, seed, size_pos, size))

    records: list[RunRecord | None] = [None] * len(cells)
    failures: list[CellFailure] = []

    def run_cell(pos: int):
        spec, seed, size_pos, size = cells[pos]
        subset = ladders[seed][size_pos]
        workdir = (Path(rundir) / f"cell_{spec.name}_{size}_{seed}"
                   if rundir is not None and spec.kind == "external" else None)
        factory = _make_factory(spec, data, subset, plan, workdir)
        config = replace(tuned[spec.name], seed=derive_seed(seed, "cell", size))
        start = time.perf_counter()
        handle = factory(config, -1)
        try:
            handle.init(config)
            handle.train(plan.fine_tune_epochs)
            report = handle.evaluate_test()
        finally:
            handle.shutdown()
        records[pos] = RunRecord(trainer=spec.name, train_size=size, seed=seed,
                                 config=config, report=report,
                                 wall_seconds=time.perf_counter() - start)

    max_workers = workers or plan.asha.workers
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {pool.submit(run_cell, pos): pos for pos in range(len(cells))}
        for future, pos in futures.items():
            spec, seed, _, size = cells[pos]
            try:
                future.result()
            except (TrainerProcessError, SweepError, ValueError, OSError) as exc:
                failures.append(CellFailure(trainer=spec.name, train_size=size,
                                            seed=seed, error=str(exc)))

    report = SweepReport(records=tuple(r for r in records if r is not None),
                         failures=tuple(failures))
    if rundir is not None:
        out = Path(rundir)
        out.mkdir(parents=True, exist_ok=True)
        if report.records:
            write_report_files(report, out)
        if report.failures:
            (out / "failures.json").write_text(json.dumps(
                [{"trainer": f.trainer, "train_size": f.train_size,
                  "seed": f.seed, "error": f.error} for f in report.failures],
                indent=2))
    return report


# --- report emission ----------------------------------------------------------

CSV_COLUMNS = ("trainer", "train_size", "seed", "lr", "batch_size", "macro_f1",
               "nominal_acc", "gap_acc", "overlap_acc", "wall_seconds")


def report_to_dict(report: SweepReport) -> dict:
    return {
        "records": [{
            "trainer": r.trainer,
            "train_size": r.train_size,
            "seed": r.seed,
            "lr": r.config.learning_rate,
            "batch_size": r.config.batch_size,
            "macro_f1": r.report.macro_f1,
            "micro_f1": r.report.micro_f1,
            "n_items": r.report.n_items,
            "per_class": metrics.report_to_dict(r.report)["per_class"],
            "wall_seconds": r.wall_seconds,
        } for r in report.records],
        "summary": [{"trainer": t, "train_size": s, **stats}
                    for (t, s), stats in sorted(report.summary().items())],
        "failures": [{"trainer": f.trainer, "train_size": f.train_size,
                      "seed": f.seed, "error": f.error} for f in report.failures],
    }


def report_from_dict(data: dict) -> SweepReport:
    records = []
    for r in data["records"]:
        ev = metrics.report_from_dict({
            "macro_f1": r["macro_f1"], "micro_f1": r.get("micro_f1", 0.0),
            "n_items": r.get("n_items", 0), "per_class": r["per_class"]})
        records.append(RunRecord(
            trainer=r["trainer"], train_size=int(r["train_size"]), seed=int(r["seed"]),
            config=TrainConfig(learning_rate=float(r["lr"]),
                               batch_size=int(r["batch_size"])),
            report=ev, wall_seconds=float(r["wall_seconds"])))
    failures = tuple(CellFailure(trainer=f["trainer"], train_size=int(f["train_size"]),
                                 seed=int(f["seed"]), error=f["error"])
                     for f in data.get("failures", []))
    return SweepReport(records=tuple(records), failures=failures)


def emit_report(report: SweepReport, fmt: str) -> bytes:
    """Render as csv, json, or plotdata (x/y/error series per trainer)."""
    if not report.records:
        raise SweepError("cannot emit an empty report")
    if fmt == "json":
        return (json.dumps(report_to_dict(report), indent=2) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in report.records:
            writer.writerow([
                r.trainer, r.train_size, r.seed,
                repr(r.config.learning_rate), r.config.batch_size,
                repr(r.report.macro_f1),
                repr(r.report.per_class[LABELS[0]].accuracy),
                repr(r.report.per_class[LABELS[1]].accuracy),
                repr(r.report.per_class[LABELS[2]].accuracy),
                repr(r.wall_seconds),
            ])
        return buf.getvalue().encode()
    if fmt == "plotdata":
        summary = report.summary()
        trainers = []
        for r in report.records:
            if r.trainer not in trainers:
                trainers.append(r.trainer)
        series = []
        for trainer in trainers:
            sizes = sorted({s for (t, s) in summary if t == trainer})
            series.append({
                "trainer": trainer,
                "x": sizes,
                "y": [summary[(trainer, s)]["mean"] for s in sizes],
                "error": [summary[(trainer, s)]["spread"] for s in sizes],
            })
        return (json.dumps({"series": series}, indent=2) + "\n").encode()
    raise SweepError(f"unknown report format {fmt!r}")


def write_report_files(report: SweepReport, rundir: str | Path) -> None:
    out = Path(rundir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_bytes(emit_report(report, "json"))
    (out / "report.csv").write_bytes(emit_report(report, "csv"))
    (out / "plotdata.json").write_bytes(emit_report(report, "plotdata"))
