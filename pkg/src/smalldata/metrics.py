"""Confusion-matrix accounting and per-class precision/recall/F1 reporting.

Zero-denominator conventions: precision and recall are 0 when their
denominator is 0, and F1 is 0 when precision + recall is 0, so degenerate
matrices never raise. Per-class accuracy is the one-vs-rest hit rate on true
members of the class, i.e. recall. The headline number is macro-F1, the
unweighted mean of per-class F1; micro-F1 is carried along for transparency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .heightfield import LABELS, DefectLabel, label_from_name


class MetricsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Square count matrix; rows are truth, columns are prediction."""

    labels: tuple[DefectLabel, ...]
    counts: np.ndarray  # (K, K) int64

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        k = len(self.labels)
        if c.shape != (k, k):
            raise MetricsError(f"counts shape {c.shape} does not match {k} labels")
        if (c < 0).any():
            raise MetricsError("counts must be non-negative")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.counts, other.counts)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float


@dataclass(frozen=True)
class EvalReport:
    per_class: dict[DefectLabel, ClassMetrics]
    macro_f1: float
    micro_f1: float
    n_items: int


def _as_label(value, labels: tuple[DefectLabel, ...]) -> DefectLabel:
    if isinstance(value, DefectLabel):
        if value not in labels:
            raise MetricsError(f"label {value.value!r} is not in the declared set")
        return value
    if isinstance(value, (int, np.integer)):
        if not 0 <= int(value) < len(labels):
            raise MetricsError(f"label index {int(value)} out of range for {len(labels)} labels")
        return labels[int(value)]
    raise MetricsError(f"cannot interpret {value!r} as a label")


def confusion(truths, preds, labels: tuple[DefectLabel, ...] = LABELS) -> ConfusionMatrix:
    """Count matrix over (truth, prediction) pairs.

    Accepts DefectLabel values or integer indices into `labels`.
    """
    truths = list(truths)
    preds = list(preds)
    if len(truths) != len(preds):
        raise MetricsError(f"got {len(truths)} truths but {len(preds)} predictions")
    pos = {label: i for i, label in enumerate(labels)}
    k = len(labels)
    counts = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(truths, preds):
        counts[pos[_as_label(t, labels)], pos[_as_label(p, labels)]] += 1
    return ConfusionMatrix(labels=tuple(labels), counts=counts)


def evaluate(m: ConfusionMatrix) -> EvalReport:
    """Per-class precision/recall/F1/accuracy plus macro and micro F1."""
    counts = m.counts
    per_class: dict[DefectLabel, ClassMetrics] = {}
    f1_sum = 0.0
    for i, label in enumerate(m.labels):
        tp = int(counts[i, i])
        fp = int(counts[:, i].sum()) - tp
        fn = int(counts[i, :].sum()) - tp
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class[label] = ClassMetrics(precision=precision, recall=recall,
                                        f1=f1, accuracy=recall)
        f1_sum += f1
    macro_f1 = f1_sum / len(m.labels)
    total = m.total
    # single-label multiclass: micro precision = micro recall = overall accuracy
    micro_f1 = float(np.trace(counts)) / total if total > 0 else 0.0
    return EvalReport(per_class=per_class, macro_f1=macro_f1,
                      micro_f1=micro_f1, n_items=total)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "macro_f1": report.macro_f1,
        "micro_f1": report.micro_f1,
        "n_items": report.n_items,
        "per_class": {
            label.value: {
                "precision": cm.precision,
                "recall": cm.recall,
                "f1": cm.f1,
                "accuracy": cm.accuracy,
            } for label, cm in report.per_class.items()
        },
    }


def report_from_dict(data: dict) -> EvalReport:
    per_class = {}
    for name, vals in data["per_class"].items():
        per_class[label_from_name(name)] = ClassMetrics(
            precision=float(vals["precision"]), recall=float(vals["recall"]),
            f1=float(vals["f1"]), accuracy=float(vals["accuracy"]))
    return EvalReport(per_class=per_class, macro_f1=float(data["macro_f1"]),
                      micro_f1=float(data.get("micro_f1", 0.0)),
                      n_items=int(data["n_items"]))


CSV_REPORT_FIELDS = ("model", "train_size", "seed", "macro_f1",
                     "nominal_f1", "gap_f1", "overlap_f1",
                     "nominal_acc", "gap_acc", "overlap_acc")


def report_csv_row(report: EvalReport, model: str, train_size: int, seed: int) -> list[str]:
    """One CSV row matching CSV_REPORT_FIELDS."""
    row = [model, str(train_size), str(seed), repr(report.macro_f1)]
    row += [repr(report.per_class[label].f1) for label in LABELS]
    row += [repr(report.per_class[label].accuracy) for label in LABELS]
    return row
