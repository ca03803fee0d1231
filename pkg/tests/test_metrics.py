from fractions import Fraction

import numpy as np
import numpy.testing as npt
import pytest

from heteroiot.metrics import confusion_matrix, evaluation_report


def tally_oracle(y_true, y_pred, k):
    """Independent per-sample metric computation with exact fractions."""
    n = len(y_true)
    acc = Fraction(sum(int(t == p) for t, p in zip(y_true, y_pred)), n)
    f1s, supports = [], []
    for c in range(k):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        prec = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        rec = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else Fraction(0)
        f1s.append(f1)
        supports.append(tp + fn)
    weighted = sum(s * f for s, f in zip(supports, f1s)) / Fraction(n)
    macro = sum(f1s) / Fraction(k)
    return acc, weighted, macro, f1s


class TestConfusionMatrix:
    def test_counts_and_total(self):
        cm = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 2], 3)
        npt.assert_array_equal(cm, [[1, 1, 0], [0, 1, 0], [0, 0, 1]])
        assert cm.sum() == 4

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            confusion_matrix([0, 3], [0, 0], 3)


class TestEvaluationReport:
    def test_perfect_predictions(self):
        y = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2, 0])
        rep = evaluation_report(y, y, ["a", "b", "c"])
        assert rep.accuracy == 1.0
        assert rep.weighted_f1 == 1.0 and rep.macro_f1 == 1.0
        npt.assert_array_equal(rep.confusion, np.diag([4, 3, 3]))

    def test_two_class_hand_fixture(self):
        # TP=1, FP=1, FN=1, TN=1 counting class 1 as positive
        y_true = np.array([1, 0, 1, 0])
        y_pred = np.array([1, 1, 0, 0])
        rep = evaluation_report(y_true, y_pred, ["neg", "pos"])
        assert rep.accuracy == 0.5
        npt.assert_allclose(rep.f1, [0.5, 0.5])
        assert rep.weighted_f1 == 0.5

    def test_ten_sample_hand_computed_fixture(self):
        y_true = [0, 0, 0, 0, 1, 1, 1, 2, 2, 2]
        y_pred = [0, 0, 1, 2, 1, 1, 0, 2, 2, 1]
        rep = evaluation_report(y_true, y_pred, ["a", "b", "c"])
        npt.assert_array_equal(rep.confusion, [[2, 1, 1], [1, 2, 0], [0, 1, 2]])
        assert rep.accuracy == 0.6
        # class F1: a=4/7, b=4/7, c=2/3 (precision/recall worked by hand)
        npt.assert_allclose(rep.f1, [4 / 7, 4 / 7, 2 / 3], rtol=1e-15)
        npt.assert_allclose(rep.weighted_f1, 0.6, rtol=1e-15)
        npt.assert_allclose(rep.macro_f1, 38 / 63, rtol=1e-15)

    def test_matches_fraction_oracle_on_random_labelings(self):
        rng = np.random.default_rng(17)
        for _ in range(25):
            k = int(rng.integers(2, 6))
            n = int(rng.integers(5, 40))
            y_true = rng.integers(0, k, size=n)
            y_true[: k] = np.arange(k)  # every class supported
            y_pred = rng.integers(0, k, size=n)
            rep = evaluation_report(y_true, y_pred, [str(i) for i in range(k)])
            acc, weighted, macro, f1s = tally_oracle(y_true.tolist(), y_pred.tolist(), k)
            assert abs(rep.accuracy - float(acc)) < 1e-12
            assert abs(rep.weighted_f1 - float(weighted)) < 1e-12
            assert abs(rep.macro_f1 - float(macro)) < 1e-12
            npt.assert_allclose(rep.f1, [float(f) for f in f1s], atol=1e-12)

    def test_balanced_classes_weighted_equals_macro(self):
        rng = np.random.default_rng(23)
        y_true = np.repeat(np.arange(4), 10)
        y_pred = rng.integers(0, 4, size=40)
        rep = evaluation_report(y_true, y_pred, list("abcd"))
        assert abs(rep.weighted_f1 - rep.macro_f1) < 1e-12

    def test_trace_identity(self):
        rng = np.random.default_rng(29)
        y_true = rng.integers(0, 3, size=30)
        y_true[:3] = [0, 1, 2]
        y_pred = rng.integers(0, 3, size=30)
        rep = evaluation_report(y_true, y_pred, list("abc"))
        assert rep.accuracy == np.trace(rep.confusion) / rep.total

    def test_text_rendering_contains_rows(self):
        rep = evaluation_report([0, 1], [0, 1], ["alpha", "beta"])
        text = rep.to_text()
        assert "alpha" in text and "beta" in text and "accuracy" in text
