import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xautoml.metrics import compute_metrics, confusion_counts


def test_perfect_predictions():
    labels = np.array([1, -1, 1, -1])
    m = compute_metrics(labels, predictions=labels.copy())
    assert m["f1"] == 1.0
    assert m["accuracy"] == 1.0
    assert m["precision"] == 1.0 and m["recall"] == 1.0


def test_all_majority_on_imbalanced_data():
    # 14:1 — predicting the majority class everywhere scores F1 = 0 on the
    # failure class while accuracy still looks high
    labels = np.array([1] * 10 + [-1] * 140)
    preds = -np.ones(150, dtype=int)
    m = compute_metrics(labels, predictions=preds)
    assert m["f1"] == 0.0
    assert m["accuracy"] == pytest.approx(140 / 150)
    assert m["recall"] == 0.0


def test_confusion_count_oracle():
    labels = np.array([1, 1, -1, -1, 1])
    preds = np.array([1, -1, -1, 1, 1])
    c = confusion_counts(labels, preds)
    assert (c["tp"], c["fn"], c["tn"], c["fp"]) == (2, 1, 1, 1)


def test_threshold_on_probabilities():
    labels = np.array([1, -1])
    m_default = compute_metrics(labels, probabilities=np.array([0.6, 0.4]))
    assert m_default["accuracy"] == 1.0
    m_high = compute_metrics(labels, probabilities=np.array([0.6, 0.4]),
                             threshold=0.7)
    assert m_high["recall"] == 0.0


def test_precision_recall_swap_under_inversion():
    rng = np.random.default_rng(3)
    labels = np.where(rng.random(200) < 0.3, 1, -1)
    preds = np.where(rng.random(200) < 0.4, 1, -1)
    m = compute_metrics(labels, predictions=preds)
    m_inv = compute_metrics(-labels, predictions=-preds)
    # inverting both swaps the roles of the positive/negative classes:
    # old TN become TP, so precision/recall are those of the negative class
    c = confusion_counts(labels, preds)
    assert m_inv["precision"] == pytest.approx(
        c["tn"] / (c["tn"] + c["fn"]) if c["tn"] + c["fn"] else 0.0)
    assert m_inv["accuracy"] == pytest.approx(m["accuracy"])


@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30),
       st.integers(0, 30))
@settings(max_examples=80, deadline=None)
def test_f1_from_counts(tp, fp, fn, tn):
    if tp + fp + fn + tn == 0:
        return
    labels = np.array([1] * (tp + fn) + [-1] * (fp + tn))
    preds = np.array([1] * tp + [-1] * fn + [1] * fp + [-1] * tn)
    m = compute_metrics(labels, predictions=preds)
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    assert m["f1"] == pytest.approx(f1)
    assert m["accuracy"] == pytest.approx((tp + tn) / (tp + fp + fn + tn))
