import numpy as np
import pytest

from smalldata import metrics as mt
from smalldata.heightfield import LABELS, DefectLabel

N, G, O = DefectLabel.NOMINAL, DefectLabel.GAP, DefectLabel.OVERLAP


def brute_force_report(truths, preds):
    """Direct-counting oracle: per-class tallies via explicit pair loops."""
    per_class = {}
    f1s = []
    for label in LABELS:
        tp = fp = fn = 0
        for t, p in zip(truths, preds):
            if p is label and t is label:
                tp += 1
            elif p is label:
                fp += 1
            elif t is label:
                fn += 1
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class[label] = (precision, recall, f1, recall)
        f1s.append(f1)
    macro = sum(f1s) / len(LABELS)
    return per_class, macro


class TestConfusion:
    def test_identity_predictions_are_diagonal(self):
        truths = [N, N, G, O, G]
        cm = mt.confusion(truths, truths)
        assert np.array_equal(cm.counts, np.diag([2, 2, 1]))

    def test_hand_counted_example(self):
        cm = mt.confusion([G, G, O], [G, O, O])
        expected = np.zeros((3, 3), dtype=np.int64)
        expected[1, 1] = 1  # gap predicted gap
        expected[1, 2] = 1  # gap predicted overlap
        expected[2, 2] = 1  # overlap predicted overlap
        assert np.array_equal(cm.counts, expected)

    def test_empty_lists_give_zero_matrix(self):
        cm = mt.confusion([], [])
        assert cm.total == 0
        assert (cm.counts == 0).all()

    def test_length_mismatch_rejected(self):
        with pytest.raises(mt.MetricsError):
            mt.confusion([N], [N, G])

    def test_integer_indices_accepted(self):
        cm = mt.confusion([0, 1, 2], [0, 1, 2])
        assert np.array_equal(cm.counts, np.eye(3, dtype=np.int64))

    def test_unknown_index_rejected(self):
        with pytest.raises(mt.MetricsError):
            mt.confusion([3], [0])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        truths = list(rng.integers(0, 3, 40))
        preds = list(rng.integers(0, 3, 40))
        cm = mt.confusion(truths, preds)
        order = rng.permutation(40)
        cm2 = mt.confusion([truths[i] for i in order], [preds[i] for i in order])
        assert cm == cm2

    def test_negative_counts_rejected(self):
        with pytest.raises(mt.MetricsError):
            mt.ConfusionMatrix(LABELS, np.array([[-1, 0, 0], [0, 0, 0], [0, 0, 0]]))


class TestEvaluate:
    def test_perfect_predictions(self):
        cm = mt.confusion([N, G, O] * 5, [N, G, O] * 5)
        report = mt.evaluate(cm)
        assert report.macro_f1 == 1.0
        assert report.micro_f1 == 1.0
        for label in LABELS:
            assert report.per_class[label].f1 == 1.0

    def test_frozen_three_class_matrix(self):
        # rows [[8,1,1],[0,9,1],[1,0,9]]: per-class values recomputed by hand:
        # P = (8/9, 9/10, 9/11), R = (0.8, 0.9, 0.9),
        # F1 = (16/19, 9/10, 6/7), macro = 3457/3990
        cm = mt.ConfusionMatrix(LABELS, np.array([[8, 1, 1], [0, 9, 1], [1, 0, 9]]))
        report = mt.evaluate(cm)
        assert report.per_class[N].precision == pytest.approx(8 / 9, abs=1e-15)
        assert report.per_class[N].recall == pytest.approx(0.8, abs=1e-15)
        assert report.per_class[N].f1 == pytest.approx(16 / 19, abs=1e-15)
        assert report.per_class[G].f1 == pytest.approx(9 / 10, abs=1e-15)
        assert report.per_class[O].f1 == pytest.approx(6 / 7, abs=1e-15)
        assert report.macro_f1 == pytest.approx(3457 / 3990, abs=1e-15)
        assert round(report.macro_f1, 4) == 0.8664

    def test_absent_class_scores_zero_and_counts_in_macro(self):
        cm = mt.confusion([N, N, G, G], [N, N, G, G])
        report = mt.evaluate(cm)
        assert report.per_class[O].f1 == 0.0
        assert report.macro_f1 == pytest.approx(2 / 3)

    def test_accuracy_equals_recall(self):
        cm = mt.ConfusionMatrix(LABELS, np.array([[5, 3, 2], [1, 8, 1], [0, 2, 8]]))
        report = mt.evaluate(cm)
        for label in LABELS:
            assert report.per_class[label].accuracy == report.per_class[label].recall

    def test_duplication_leaves_ratios_unchanged(self):
        rng = np.random.default_rng(1)
        truths = list(rng.integers(0, 3, 30))
        preds = list(rng.integers(0, 3, 30))
        r1 = mt.evaluate(mt.confusion(truths, preds))
        r2 = mt.evaluate(mt.confusion(truths * 2, preds * 2))
        assert r1.macro_f1 == r2.macro_f1
        assert r1.per_class == r2.per_class
        assert r2.n_items == 2 * r1.n_items

    def test_brute_force_equivalence_exact(self):
        rng = np.random.default_rng(42)
        for _ in range(500):
            n = int(rng.integers(0, 13))
            truths = [LABELS[i] for i in rng.integers(0, 3, n)]
            preds = [LABELS[i] for i in rng.integers(0, 3, n)]
            report = mt.evaluate(mt.confusion(truths, preds))
            oracle_per_class, oracle_macro = brute_force_report(truths, preds)
            assert report.macro_f1 == oracle_macro
            for label in LABELS:
                got = report.per_class[label]
                assert (got.precision, got.recall, got.f1, got.accuracy) == \
                    oracle_per_class[label]

    def test_macro_in_unit_interval_and_one_iff_diagonal(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            counts = rng.integers(0, 10, size=(3, 3))
            report = mt.evaluate(mt.ConfusionMatrix(LABELS, counts))
            assert 0.0 <= report.macro_f1 <= 1.0
            off_diag = counts.sum() - np.trace(counts)
            if report.macro_f1 == 1.0:
                assert off_diag == 0
            if off_diag == 0 and all(counts[i, i] > 0 for i in range(3)):
                assert report.macro_f1 == 1.0


class TestReportSerialization:
    def test_dict_round_trip(self):
        cm = mt.ConfusionMatrix(LABELS, np.array([[8, 1, 1], [0, 9, 1], [1, 0, 9]]))
        report = mt.evaluate(cm)
        back = mt.report_from_dict(mt.report_to_dict(report))
        assert back == report

    def test_csv_row_shape(self):
        report = mt.evaluate(mt.confusion([N, G, O], [N, G, O]))
        row = mt.report_csv_row(report, "builtin", 200, 7)
        assert row[:3] == ["builtin", "200", "7"]
        assert len(row) == len(mt.CSV_REPORT_FIELDS)
        assert float(row[3]) == 1.0
