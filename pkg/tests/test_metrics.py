import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teco.errors import DataError
from teco.metrics import compute_metrics


def oracle_metrics(preds, labels, n):
    """Independent oracle: direct per-class counting over the lists."""
    preds, labels = list(preds), list(labels)
    acc = sum(p == y for p, y in zip(preds, labels)) / len(labels)
    precs, recs, f1s = [], [], []
    for k in range(n):
        tp = sum(1 for p, y in zip(preds, labels) if p == k and y == k)
        pred_k = sum(1 for p in preds if p == k)
        true_k = sum(1 for y in labels if y == k)
        p = tp / pred_k if pred_k else 0.0
        r = tp / true_k if true_k else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        precs.append(p)
        recs.append(r)
        f1s.append(f)
    return acc, sum(precs) / n, sum(recs) / n, sum(f1s) / n


def test_perfect_predictions():
    rep = compute_metrics([0, 1, 2, 1], [0, 1, 2, 1], 3)
    assert rep.acc == rep.macro_f1 == rep.macro_prec == rep.macro_rec == 1.0


def test_hand_confusion_matrix_example():
    rep = compute_metrics([0, 1, 1, 2], [0, 0, 1, 2], 3)
    assert rep.acc == pytest.approx(0.75)
    assert rep.per_class_prec == pytest.approx([1.0, 0.5, 1.0])
    assert rep.per_class_rec == pytest.approx([0.5, 1.0, 1.0])
    assert rep.macro_prec == pytest.approx(0.8333, abs=1e-4)
    assert rep.macro_rec == pytest.approx(0.8333, abs=1e-4)
    assert rep.macro_f1 == pytest.approx((2 / 3 + 2 / 3 + 1.0) / 3, abs=1e-4)


def test_degenerate_single_class_predictor():
    rep = compute_metrics([0, 0, 0, 0], [0, 0, 1, 1], 2)
    assert rep.acc == pytest.approx(0.5)
    assert rep.macro_f1 == pytest.approx(1 / 3)


def test_confusion_counts_sum_to_samples():
    rep = compute_metrics([0, 1, 2, 0, 1], [2, 1, 0, 0, 0], 3)
    assert rep.confusion.sum() == 5


def test_length_mismatch_error():
    with pytest.raises(DataError):
        compute_metrics([0, 1], [0], 2)


def test_out_of_range_error():
    with pytest.raises(DataError):
        compute_metrics([0, 3], [0, 1], 3)


def test_exhaustive_enumeration_matches_oracle():
    """All label/prediction assignments with n <= 6, N = 3, memoized by
    confusion-matrix signature."""
    n_classes = 3
    checked = {}
    for n in range(1, 7):
        for labels in itertools.product(range(n_classes), repeat=n):
            for preds in itertools.product(range(n_classes), repeat=n):
                key = tuple(sorted(zip(labels, preds)))
                if key in checked:
                    continue
                checked[key] = True
                rep = compute_metrics(list(preds), list(labels), n_classes)
                acc, mp, mr, mf = oracle_metrics(preds, labels, n_classes)
                assert rep.acc == pytest.approx(acc)
                assert rep.macro_prec == pytest.approx(mp)
                assert rep.macro_rec == pytest.approx(mr)
                assert rep.macro_f1 == pytest.approx(mf)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 50), st.integers(0, 10_000))
def test_random_assignments_match_oracle(n_classes, n, seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_classes, size=n)
    preds = rng.integers(0, n_classes, size=n)
    rep = compute_metrics(preds, labels, n_classes)
    acc, mp, mr, mf = oracle_metrics(preds, labels, n_classes)
    assert rep.acc == pytest.approx(acc)
    assert rep.macro_prec == pytest.approx(mp)
    assert rep.macro_rec == pytest.approx(mr)
    assert rep.macro_f1 == pytest.approx(mf)
