import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smalldata import datakit as dk
from smalldata.heightfield import LABELS, DefectLabel


def make_index(n_nominal, n_gap, n_overlap) -> dk.DatasetIndex:
    entries = [(f"n{i}", DefectLabel.NOMINAL) for i in range(n_nominal)]
    entries += [(f"g{i}", DefectLabel.GAP) for i in range(n_gap)]
    entries += [(f"o{i}", DefectLabel.OVERLAP) for i in range(n_overlap)]
    return dk.DatasetIndex(tuple(entries))


class TestDatasetIndex:
    def test_histogram_consistent(self):
        idx = make_index(5, 3, 2)
        assert idx.histogram == {DefectLabel.NOMINAL: 5, DefectLabel.GAP: 3,
                                 DefectLabel.OVERLAP: 2}
        assert len(idx) == 10

    def test_duplicate_ids_rejected(self):
        with pytest.raises(dk.DatakitError):
            dk.DatasetIndex((("a", DefectLabel.GAP), ("a", DefectLabel.NOMINAL)))


class TestLargestRemainder:
    def test_exact_division(self):
        assert dk.largest_remainder(100, [0.7, 0.3]) == [70, 30]

    def test_rounding_goes_to_largest_remainder(self):
        # 0.7 * 15 = 10.5, 0.3 * 15 = 4.5; tie goes to the earlier part
        assert dk.largest_remainder(15, [0.7, 0.3]) == [11, 4]
        assert dk.largest_remainder(11, [0.7, 0.3]) == [8, 3]  # 7.7 -> 8

    def test_totals_preserved(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(0, 10000))
            f = rng.dirichlet([1, 1, 1])
            parts = dk.largest_remainder(n, list(f))
            assert sum(parts) == n
            for p, frac in zip(parts, f):
                assert abs(p - frac * n) <= 1


class TestStratifiedSplit:
    def test_reference_histogram(self):
        # 0.7 then 0.1-of-train applied per label: chosen to divide exactly
        idx = make_index(200, 100, 100)
        split = dk.stratified_split(idx, dk.SplitSpec(seed=4))
        assert [split.train.histogram[l] for l in LABELS] == [126, 63, 63]
        assert [split.eval.histogram[l] for l in LABELS] == [14, 7, 7]
        assert [split.test.histogram[l] for l in LABELS] == [60, 30, 30]

    def test_exactly_divisible_has_zero_slack(self):
        idx = make_index(100, 100, 100)
        split = dk.stratified_split(idx, dk.SplitSpec(train_fraction=0.8,
                                                      eval_fraction_of_train=0.25,
                                                      seed=1))
        for label in LABELS:
            assert split.test.histogram[label] == 20
            assert split.eval.histogram[label] == 20
            assert split.train.histogram[label] == 60

    def test_deterministic_per_seed(self):
        idx = make_index(50, 20, 10)
        a = dk.stratified_split(idx, dk.SplitSpec(seed=3))
        b = dk.stratified_split(idx, dk.SplitSpec(seed=3))
        c = dk.stratified_split(idx, dk.SplitSpec(seed=4))
        assert a.train.entries == b.train.entries
        assert a.test.entries == b.test.entries
        assert a.train.entries != c.train.entries

    def test_disjoint_and_covering(self):
        idx = make_index(41, 17, 9)
        split = dk.stratified_split(idx, dk.SplitSpec(seed=8))
        ids = [set(part.ids()) for part in split.parts().values()]
        assert ids[0] | ids[1] | ids[2] == set(idx.ids())
        assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])

    def test_small_label_rejected_with_label_name(self):
        idx = make_index(10, 2, 10)
        with pytest.raises(dk.StratificationError, match="gap"):
            dk.stratified_split(idx, dk.SplitSpec(seed=0))

    def test_proportions_within_one_item(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            counts = [int(rng.integers(3, 500)) for _ in range(3)]
            idx = make_index(*counts)
            spec = dk.SplitSpec(seed=int(rng.integers(0, 1000)))
            split = dk.stratified_split(idx, spec)
            f_train = spec.train_fraction * (1 - spec.eval_fraction_of_train)
            f_eval = spec.train_fraction * spec.eval_fraction_of_train
            f_test = 1 - spec.train_fraction
            for label, n in zip(LABELS, counts):
                assert abs(split.train.histogram[label] - f_train * n) <= 1
                assert abs(split.eval.histogram[label] - f_eval * n) <= 1
                assert abs(split.test.histogram[label] - f_test * n) <= 1

    def test_production_scale_histogram(self):
        # the real-world composition: 61,794 / 8,707 / 3,248
        idx = make_index(61794, 8707, 3248)
        split = dk.stratified_split(idx, dk.SplitSpec(seed=0))
        for label, n in zip(LABELS, (61794, 8707, 3248)):
            assert abs(split.test.histogram[label] - 0.3 * n) <= 1
            assert abs(split.train.histogram[label] - 0.63 * n) <= 1
            assert abs(split.eval.histogram[label] - 0.07 * n) <= 1
        ids = [set(p.ids()) for p in split.parts().values()]
        assert sum(len(s) for s in ids) == 73749
        assert ids[0] | ids[1] | ids[2] == set(idx.ids())

    @given(st.integers(3, 400), st.integers(3, 400), st.integers(3, 400),
           st.integers(0, 2 ** 31))
    @settings(max_examples=40, deadline=None)
    def test_split_properties(self, a, b, c, seed):
        idx = make_index(a, b, c)
        split = dk.stratified_split(idx, dk.SplitSpec(seed=seed))
        parts = list(split.parts().values())
        all_ids = set()
        for part in parts:
            part_ids = set(part.ids())
            assert not (all_ids & part_ids)
            all_ids |= part_ids
        assert all_ids == set(idx.ids())
        for label, n in zip(LABELS, (a, b, c)):
            assert abs(split.train.histogram[label] - 0.63 * n) <= 1

    def test_bad_fractions_rejected(self):
        with pytest.raises(dk.DatakitError):
            dk.SplitSpec(train_fraction=1.0)
        with pytest.raises(dk.DatakitError):
            dk.SplitSpec(eval_fraction_of_train=0.0)


class TestBalance:
    def test_uniform_histogram(self):
        idx = make_index(500, 300, 200)
        out = dk.balance(idx, 200, seed=1)
        assert len(out) == 600
        assert all(out.histogram[l] == 200 for l in LABELS)

    def test_boundary_full_inclusion(self):
        idx = make_index(50, 30, 10)
        out = dk.balance(idx, 10, seed=2)
        assert set(out.of_label(DefectLabel.OVERLAP)) == set(
            idx.of_label(DefectLabel.OVERLAP))

    def test_insufficient_class_rejected_with_counts(self):
        idx = make_index(50, 30, 10)
        with pytest.raises(dk.BalanceError, match="overlap") as err:
            dk.balance(idx, 11, seed=0)
        assert err.value.available == 10

    def test_without_replacement_and_deterministic(self):
        idx = make_index(40, 40, 40)
        a = dk.balance(idx, 25, seed=9)
        assert len(set(a.ids())) == len(a.ids())
        b = dk.balance(idx, 25, seed=9)
        assert a.entries == b.entries


class TestSubsetLadder:
    def test_nesting_and_histograms(self):
        idx = make_index(900, 700, 500)
        ladder = dk.subset_ladder(idx, [200, 400], seed=6)
        assert set(ladder[0].ids()) <= set(ladder[1].ids())
        assert all(ladder[0].histogram[l] == 200 for l in LABELS)
        assert all(ladder[1].histogram[l] == 400 for l in LABELS)

    def test_single_rung_equals_balance(self):
        idx = make_index(100, 80, 60)
        assert dk.subset_ladder(idx, [30], seed=5)[0].entries == \
            dk.balance(idx, 30, seed=5).entries

    def test_non_increasing_sizes_rejected(self):
        idx = make_index(100, 80, 60)
        with pytest.raises(dk.DatakitError):
            dk.subset_ladder(idx, [400, 200], seed=0)

    def test_unsatisfiable_max_size_rejected(self):
        idx = make_index(100, 80, 60)
        with pytest.raises(dk.BalanceError, match="overlap"):
            dk.subset_ladder(idx, [50, 70], seed=0)

    def test_full_default_ladder_nesting(self):
        idx = make_index(2500, 2200, 2100)
        sizes = [200, 400, 600, 800, 1200, 1600, 2000]
        ladder = dk.subset_ladder(idx, sizes, seed=3)
        for small, big in zip(ladder, ladder[1:]):
            assert set(small.ids()) <= set(big.ids())


class TestManifests:
    def test_split_manifest_round_trip(self):
        idx = make_index(30, 20, 10)
        split = dk.stratified_split(idx, dk.SplitSpec(seed=2))
        doc = dk.split_to_manifest(split)
        back = dk.split_from_manifest(idx, doc)
        for name in ("train", "eval", "test"):
            assert getattr(back, name).entries == getattr(split, name).entries

    def test_split_manifest_unknown_id_rejected(self):
        idx = make_index(5, 5, 5)
        split = dk.stratified_split(idx, dk.SplitSpec(seed=2))
        doc = dk.split_to_manifest(split)
        doc["parts"]["train"].append("bogus")
        with pytest.raises(dk.DatakitError):
            dk.split_from_manifest(idx, doc)

    def test_ladder_manifest_shape(self):
        idx = make_index(50, 50, 50)
        ladder = dk.subset_ladder(idx, [10, 20], seed=1)
        doc = dk.ladder_to_manifest([10, 20], ladder)
        assert doc["sizes"] == [10, 20]
        assert len(doc["subsets"]["10"]) == 30
        assert len(doc["subsets"]["20"]) == 60
