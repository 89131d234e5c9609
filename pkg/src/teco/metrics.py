"""Accuracy plus macro precision/recall/F1 over an N-class confusion matrix.

Macro scores are unweighted means over all N classes, including classes
absent from the evaluated sample; undefined per-class ratios count as 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass
class MetricsReport:
    acc: float
    macro_f1: float
    macro_prec: float
    macro_rec: float
    per_class_prec: list = field(default_factory=list)
    per_class_rec: list = field(default_factory=list)
    per_class_f1: list = field(default_factory=list)
    confusion: np.ndarray | None = None


def confusion_matrix(predictions, labels, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for p, y in zip(predictions, labels):
        cm[int(y), int(p)] += 1
    return cm


def compute_metrics(predictions, labels, n_classes: int) -> MetricsReport:
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise DataError(
            f"predictions/labels must be equal-length and non-empty, got "
            f"{predictions.shape} vs {labels.shape}")
    if predictions.min() < 0 or predictions.max() >= n_classes or \
            labels.min() < 0 or labels.max() >= n_classes:
        raise DataError(f"class index out of range [0, {n_classes})")
    cm = confusion_matrix(predictions, labels, n_classes)
    prec, rec, f1 = [], [], []
    for k in range(n_classes):
        tp = cm[k, k]
        fp = cm[:, k].sum() - tp
        fn = cm[k, :].sum() - tp
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        prec.append(float(p))
        rec.append(float(r))
        f1.append(float(f))
    return MetricsReport(
        acc=float((predictions == labels).mean()),
        macro_f1=float(np.mean(f1)),
        macro_prec=float(np.mean(prec)),
        macro_rec=float(np.mean(rec)),
        per_class_prec=prec,
        per_class_rec=rec,
        per_class_f1=f1,
        confusion=cm,
    )
