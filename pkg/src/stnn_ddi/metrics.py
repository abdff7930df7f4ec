"""Ranking and thresholded metrics, pooled over all test triples of a fold."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

METRIC_KEYS = ("auc", "aupr", "acc", "pre")


class UndefinedMetricError(ValueError):
    pass


class ScoredLabel(NamedTuple):
    score: float
    label: int


def _unpack(items, labels=None):
    """Accept ``ScoredLabel`` rows, or parallel score and label arrays."""
    if labels is not None:
        s = np.asarray(items, dtype=np.float64)
        y = np.asarray(labels)
    else:
        arr = np.asarray(items, dtype=np.float64).reshape(-1, 2)
        s, y = arr[:, 0], arr[:, 1]
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(bool)


def _average_ranks(s):
    uniq, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    # tied values share the mean of the 1-based ranks they occupy
    return ((upper - counts + 1 + upper) / 2.0)[inverse]


def roc_auc(items, labels=None) -> float:
    """Mann-Whitney AUC; ties between a positive and a negative count 1/2.

    Call as ``roc_auc(scored_labels)`` or ``roc_auc(scores, labels)``.
    """
    s, y = _unpack(items, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    ranks = _average_ranks(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(items, labels=None) -> float:
    """Area under the stepwise precision-recall curve.

    Thresholds sweep the distinct scores from high to low; the area is
    ``sum_i (R_i - R_{i-1}) * P_i`` with ``R_0 = 0``.
    """
    s, y = _unpack(items, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPR needs at least one positive")
    uniq, inverse = np.unique(-s, return_inverse=True)
    tp = np.cumsum(np.bincount(inverse, weights=y, minlength=len(uniq)))
    seen = np.cumsum(np.bincount(inverse, minlength=len(uniq)))
    total = 0.0
    prev_recall = 0.0
    for tp_i, seen_i in zip(tp, seen):
        recall = tp_i / n_pos
        total += (recall - prev_recall) * (tp_i / seen_i)
        prev_recall = recall
    return float(total)


class ThresholdMetrics(NamedTuple):
    accuracy: float
    precision: float
    precision_undefined: bool


def thresholded_metrics(items, labels=None, threshold: float = 0.5) -> ThresholdMetrics:
    """Accuracy and precision with ``score >= threshold`` predicted positive."""
    s, y = _unpack(items, labels)
    if len(s) == 0:
        raise ValueError("thresholded metrics need at least one item")
    pred = s >= threshold
    accuracy = float(np.mean(pred == y))
    n_pred = int(pred.sum())
    if n_pred == 0:
        return ThresholdMetrics(accuracy, 0.0, True)
    return ThresholdMetrics(accuracy, float(np.sum(pred & y)) / n_pred, False)


@dataclass
class FoldMetrics:
    fold_index: int
    auc: float | None = None
    aupr: float | None = None
    acc: float | None = None
    pre: float | None = None
    test_size: int = 0
    skipped: bool = False
    precision_undefined: bool = False


def evaluate_scores(fold_index: int, scores, labels, threshold: float = 0.5) -> FoldMetrics:
    thr = thresholded_metrics(scores, labels, threshold)
    return FoldMetrics(
        fold_index,
        roc_auc(scores, labels),
        aupr(scores, labels),
        thr.accuracy,
        thr.precision,
        len(labels),
        precision_undefined=thr.precision_undefined,
    )


@dataclass
class EvalReport:
    task: str
    folds: list = field(default_factory=list)
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    skipped: int = 0
    averaging: str = "micro"
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "averaging": self.averaging,
            "config": self.config,
            "folds": [asdict(f) for f in self.folds],
            "skipped": self.skipped,
            "mean": self.mean,
            "std": self.std,
        }


def aggregate(folds, task: str = "") -> EvalReport:
    """Unweighted mean and sample standard deviation over non-skipped folds."""
    folds = list(folds)
    if not folds:
        raise ValueError("aggregate needs at least one fold")
    used = [f for f in folds if not f.skipped]
    if not used:
        raise UndefinedMetricError("every fold was skipped")
    mean, std = {}, {}
    for key in METRIC_KEYS:
        vals = np.array([getattr(f, key) for f in used], dtype=np.float64)
        mean[key] = float(vals.mean())
        std[key] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return EvalReport(task, folds, mean, std, len(folds) - len(used))
