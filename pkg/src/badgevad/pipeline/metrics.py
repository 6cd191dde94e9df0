"""Confusion matrices and the scores derived from them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fp: int
    fn: int
    tp: int

    def __post_init__(self):
        if min(self.tn, self.fp, self.fn, self.tp) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return ConfusionMatrix(self.tn + other.tn, self.fp + other.fp,
                               self.fn + other.fn, self.tp + other.tp)


@dataclass(frozen=True)
class MetricsRow:
    balanced_accuracy: float
    f1: float
    binary_accuracy: float
    precision: float
    recall: float


def confusion(probs, labels, threshold: float = 0.5) -> ConfusionMatrix:
    """Tally predictions ``prob >= threshold`` against binary labels."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.shape != labels.shape:
        raise ValueError(f"length mismatch: {probs.shape} probabilities, {labels.shape} labels")
    pred = probs >= threshold
    truth = labels.astype(bool)
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    tn = int(truth.size - tp - fp - fn)
    return ConfusionMatrix(tn, fp, fn, tp)


def metrics(cm: ConfusionMatrix) -> MetricsRow:
    if cm.tp + cm.fn == 0 or cm.tn + cm.fp == 0:
        raise UndefinedMetricError(
            f"balanced accuracy needs both classes present, got {cm}")
    recall = cm.tp / (cm.tp + cm.fn)
    specificity = cm.tn / (cm.tn + cm.fp)
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsRow(
        balanced_accuracy=(recall + specificity) / 2,
        f1=f1,
        binary_accuracy=(cm.tp + cm.tn) / cm.total,
        precision=precision,
        recall=recall,
    )


def pooled_metrics(cms) -> MetricsRow:
    """Metrics of the element-wise sum of several confusion matrices."""
    cms = list(cms)
    if not cms:
        raise ValueError("need at least one confusion matrix")
    total = cms[0]
    for cm in cms[1:]:
        total = total + cm
    return metrics(total)


def balanced_accuracy(probs, labels, threshold: float = 0.5) -> float:
    return metrics(confusion(probs, labels, threshold)).balanced_accuracy
