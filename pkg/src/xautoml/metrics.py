"""Binary classification metrics with the failure class (+1) as positive."""

from __future__ import annotations

import numpy as np


def confusion_counts(labels, predictions) -> dict:
    """Counts over labels/predictions in {-1, +1}."""
    y = np.asarray(labels)
    p = np.asarray(predictions)
    if y.shape != p.shape:
        raise ValueError("labels and predictions must have equal length")
    return {
        "tp": int(np.sum((y == 1) & (p == 1))),
        "fp": int(np.sum((y == -1) & (p == 1))),
        "tn": int(np.sum((y == -1) & (p == -1))),
        "fn": int(np.sum((y == 1) & (p == -1))),
    }


def compute_metrics(labels, predictions=None, probabilities=None,
                    threshold: float = 0.5) -> dict:
    """Accuracy, precision, recall, F1 (positive = failure class +1) and the
    confusion counts. Give either hard predictions in {-1,+1} or positive-
    class probabilities plus a threshold."""
    if predictions is None:
        if probabilities is None:
            raise ValueError("need predictions or probabilities")
        predictions = np.where(np.asarray(probabilities) >= threshold, 1, -1)
    cc = confusion_counts(labels, predictions)
    tp, fp, tn, fn = cc["tp"], cc["fp"], cc["tn"], cc["fn"]
    total = tp + fp + tn + fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return {
        "accuracy": (tp + tn) / total if total else 0.0,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        **cc,
    }
