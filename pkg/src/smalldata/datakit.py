"""Dataset indexing, stratified splitting, class balancing and size ladders.

All sampling is done per label with a generator keyed on (seed, label, role),
so results do not depend on iteration interleavings and are reproducible from
the seed alone. Counts use largest-remainder rounding, which keeps every part
within one item of its exact fractional share per class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .heightfield import LABELS, DefectLabel, label_from_name
from .seeding import rng_for


class DatakitError(ValueError):
    pass


class StratificationError(DatakitError):
    def __init__(self, label: DefectLabel, available: int, needed: int):
        self.label = label
        super().__init__(f"label {label.value!r} has only {available} items, "
                         f"needs at least {needed} for a stratified split")


class BalanceError(DatakitError):
    def __init__(self, label: DefectLabel, available: int, requested: int):
        self.label = label
        self.available = available
        super().__init__(f"cannot draw {requested} items of label {label.value!r} "
                         f"without replacement, only {available} available")


@dataclass(frozen=True)
class DatasetIndex:
    """Ordered (item_id, label) entries with a consistent per-label histogram."""

    entries: tuple[tuple[str, DefectLabel], ...]
    histogram: dict[DefectLabel, int] = field(init=False)

    def __post_init__(self):
        entries = tuple((str(i), label) for i, label in self.entries)
        ids = [i for i, _ in entries]
        if len(set(ids)) != len(ids):
            raise DatakitError("item ids must be unique")
        hist = {label: 0 for label in LABELS}
        for _, label in entries:
            hist[label] += 1
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "histogram", hist)

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> tuple[str, ...]:
        return tuple(i for i, _ in self.entries)

    def of_label(self, label: DefectLabel) -> list[str]:
        return [i for i, lab in self.entries if lab is label]

    @classmethod
    def from_manifest(cls, manifest: dict) -> "DatasetIndex":
        return cls(tuple((item["id"], label_from_name(item["label"]))
                         for item in manifest["items"]))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    eval_fraction_of_train: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("train_fraction", "eval_fraction_of_train"):
            f = getattr(self, name)
            if not 0.0 < f < 1.0:
                raise DatakitError(f"{name} must lie in (0, 1), got {f}")


@dataclass(frozen=True)
class SplitResult:
    train: DatasetIndex
    eval: DatasetIndex
    test: DatasetIndex

    def parts(self) -> dict[str, DatasetIndex]:
        return {"train": self.train, "eval": self.eval, "test": self.test}


def largest_remainder(total: int, fractions: list[float]) -> list[int]:
    """Integer shares of `total` proportional to `fractions` (which sum to 1).

    Floors every share, then hands leftover units to the largest fractional
    remainders; ties go to the earlier part.
    """
    raw = [f * total for f in fractions]
    out = [math.floor(r) for r in raw]
    leftover = total - sum(out)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - out[i]), i))
    for i in order[:leftover]:
        out[i] += 1
    return out


def _shuffled_by_label(index: DatasetIndex, seed: int, role: str) -> dict[DefectLabel, list[str]]:
    out = {}
    for label in LABELS:
        ids = index.of_label(label)
        if ids:
            rng = rng_for(seed, role, label.value)
            order = rng.permutation(len(ids))
            out[label] = [ids[i] for i in order]
    return out


def stratified_split(index: DatasetIndex, spec: SplitSpec) -> SplitResult:
    """Per-label shuffled split into train/eval/test.

    Each label is shuffled with a seeded generator, cut into a train pool and
    the test part by largest-remainder counts, and the eval part is carved out
    of the pool the same way. Deterministic given spec.seed.
    """
    shuffled = _shuffled_by_label(index, spec.seed, "split")
    train_entries, eval_entries, test_entries = [], [], []
    for label in LABELS:
        ids = shuffled.get(label)
        if ids is None:
            continue
        if len(ids) < 3:
            raise StratificationError(label, len(ids), 3)
        n_pool, n_test = largest_remainder(
            len(ids), [spec.train_fraction, 1.0 - spec.train_fraction])
        pool, test_ids = ids[:n_pool], ids[n_pool:]
        n_eval, _ = largest_remainder(
            n_pool, [spec.eval_fraction_of_train, 1.0 - spec.eval_fraction_of_train])
        eval_ids, train_ids = pool[:n_eval], pool[n_eval:]
        train_entries += [(i, label) for i in train_ids]
        eval_entries += [(i, label) for i in eval_ids]
        test_entries += [(i, label) for i in test_ids]
    return SplitResult(train=DatasetIndex(tuple(train_entries)),
                       eval=DatasetIndex(tuple(eval_entries)),
                       test=DatasetIndex(tuple(test_entries)))


def balance(index: DatasetIndex, n_per_class: int, seed: int) -> DatasetIndex:
    """Exactly n_per_class items per present label, drawn without replacement."""
    if n_per_class < 0:
        raise DatakitError("n_per_class must be >= 0")
    shuffled = _shuffled_by_label(index, seed, "balance")
    entries = []
    for label in LABELS:
        ids = shuffled.get(label)
        if ids is None:
            continue
        if len(ids) < n_per_class:
            raise BalanceError(label, len(ids), n_per_class)
        entries += [(i, label) for i in ids[:n_per_class]]
    return DatasetIndex(tuple(entries))


def subset_ladder(index: DatasetIndex, sizes: list[int], seed: int) -> list[DatasetIndex]:
    """One balanced index per size, nested: smaller subsets are prefixes of larger ones.

    Nesting keeps size-sensitivity comparisons free of resampling noise. A
    single-element ladder equals balance(index, size, seed).
    """
    if not sizes:
        raise DatakitError("ladder needs at least one size")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise DatakitError(f"ladder sizes must be strictly increasing, got {list(sizes)}")
    if sizes[0] < 0:
        raise DatakitError("ladder sizes must be >= 0")
    shuffled = _shuffled_by_label(index, seed, "balance")
    for label in LABELS:
        ids = shuffled.get(label)
        if ids is not None and len(ids) < sizes[-1]:
            raise BalanceError(label, len(ids), sizes[-1])
    out = []
    for size in sizes:
        entries = []
        for label in LABELS:
            ids = shuffled.get(label)
            if ids is None:
                continue
            entries += [(i, label) for i in ids[:size]]
        out.append(DatasetIndex(tuple(entries)))
    return out


def split_to_manifest(split: SplitResult) -> dict:
    """JSON-ready manifest: item id lists per part."""
    return {"version": 1,
            "parts": {name: list(part.ids()) for name, part in split.parts().items()}}


def split_from_manifest(index: DatasetIndex, manifest: dict) -> SplitResult:
    """Rebuild a SplitResult from a manifest, taking labels from the source index."""
    label_of = {i: label for i, label in index.entries}
    parts = {}
    for name in ("train", "eval", "test"):
        ids = manifest["parts"][name]
        missing = [i for i in ids if i not in label_of]
        if missing:
            raise DatakitError(f"split manifest references unknown ids: {missing[:3]}...")
        parts[name] = DatasetIndex(tuple((i, label_of[i]) for i in ids))
    return SplitResult(train=parts["train"], eval=parts["eval"], test=parts["test"])


def ladder_to_manifest(sizes: list[int], subsets: list[DatasetIndex]) -> dict:
    return {"version": 1,
            "sizes": list(sizes),
            "subsets": {str(size): list(subset.ids())
                        for size, subset in zip(sizes, subsets)}}
