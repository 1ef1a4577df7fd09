import math

import numpy as np
import pytest

from fedsim.errors import EmptyShard
from fedsim.metrics import confusion_matrix, evaluate_global, mcc, metrics_from_confusion
from fedsim.model import DataShard, init_params


def test_perfect_predictions():
    y = np.array([0, 1, 2, 2, 1, 0])
    r = metrics_from_confusion(confusion_matrix(y, y, 3))
    assert r.accuracy == r.sensitivity == r.specificity == r.precision == r.f1 == r.mcc == 1.0


def test_constant_binary_predictor():
    y = np.array([0, 0, 1, 1])
    r = metrics_from_confusion(confusion_matrix(y, np.zeros(4, int), 2))
    assert r.accuracy == 0.5
    assert r.mcc == 0.0
    assert not any(math.isnan(v) for v in (r.precision, r.f1, r.specificity))


def test_hand_computed_three_class():
    cm = np.array([[5, 1, 0], [2, 3, 1], [0, 1, 4]])
    r = metrics_from_confusion(cm)
    # class 0: tp5 fn1 fp2 tn9; class 1: tp3 fn3 fp2 tn9; class 2: tp4 fn1 fp1 tn11
    assert r.sensitivity == pytest.approx((5 / 6 + 3 / 6 + 4 / 5) / 3, abs=1e-12)
    assert r.specificity == pytest.approx((9 / 11 + 9 / 11 + 11 / 12) / 3, abs=1e-12)
    assert r.precision == pytest.approx((5 / 7 + 3 / 5 + 4 / 5) / 3, abs=1e-12)
    assert r.f1 == pytest.approx((10 / 13 + 6 / 11 + 8 / 10) / 3, abs=1e-12)
    assert r.accuracy == pytest.approx(12 / 17, abs=1e-12)
    # Gorodkin: (c*s - sum p_k t_k) / sqrt((s^2 - sum p^2)(s^2 - sum t^2))
    t, p = [6, 6, 5], [7, 5, 5]
    num = 12 * 17 - sum(a * b for a, b in zip(p, t))
    den = math.sqrt((17**2 - sum(a * a for a in p)) * (17**2 - sum(a * a for a in t)))
    assert r.mcc == pytest.approx(num / den, abs=1e-12)


def test_binary_mcc_matches_classic_formula():
    tp, fn, fp, tn = 7, 3, 2, 8
    cm = np.array([[tp, fn], [fp, tn]])
    classic = (tp * tn - fp * fn) / math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    assert mcc(cm) == pytest.approx(classic, abs=1e-12)


def test_degenerate_matrices_are_finite():
    for cm in (np.zeros((3, 3), int), np.array([[4, 0], [0, 0]]), np.array([[0, 3], [0, 0]])):
        r = metrics_from_confusion(cm)
        assert all(math.isfinite(v) for v in (r.accuracy, r.sensitivity, r.specificity, r.precision, r.f1, r.mcc))


def test_evaluate_global_zero_model():
    test = DataShard(np.ones((6, 2)), [0, 1, 2, 0, 1, 2])
    r = evaluate_global(init_params(2, 3), test)
    assert r.accuracy == pytest.approx(1 / 3)  # ties resolve to class 0
    assert r.loss == pytest.approx(math.log(3))
    with pytest.raises(EmptyShard):
        evaluate_global(init_params(2, 3), DataShard(np.empty((0, 2)), []))
