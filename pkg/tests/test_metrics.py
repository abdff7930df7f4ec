import numpy as np
import pytest
from hypothesis import given, strategies as st

from stnn_ddi.metrics import (
    FoldMetrics,
    ScoredLabel,
    UndefinedMetricError,
    aggregate,
    aupr,
    roc_auc,
    thresholded_metrics,
)


def pair_count_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for a in pos:
        for b in neg:
            wins += 1.0 if a > b else 0.5 if a == b else 0.0
    return wins / (len(pos) * len(neg))


def stepwise_aupr(scores, labels):
    n_pos = sum(labels)
    total, prev = 0.0, 0.0
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 0)
        recall = tp / n_pos
        total += (recall - prev) * (tp / (tp + fp))
        prev = recall
    return total


def random_instance(rng, size=None, ties=True):
    size = size or int(rng.integers(2, 51))
    labels = rng.integers(0, 2, size)
    labels[0], labels[1] = 1, 0
    if ties:
        scores = rng.integers(0, max(2, size // 3), size).astype(float) / 7.0
    else:
        scores = rng.permutation(size).astype(float) + rng.random()
    return scores, labels


def test_auc_examples():
    s = [0.9, 0.8, 0.3, 0.1]
    assert roc_auc(s, [1, 1, 0, 0]) == 1.0
    assert roc_auc(s, [1, 0, 1, 0]) == 0.75
    assert roc_auc([0.4] * 5, [1, 0, 1, 0, 0]) == 0.5


def test_auc_accepts_scored_labels():
    items = [ScoredLabel(0.9, 1), ScoredLabel(0.8, 0), ScoredLabel(0.3, 1), ScoredLabel(0.1, 0)]
    assert roc_auc(items) == 0.75


def test_auc_single_class():
    with pytest.raises(UndefinedMetricError):
        roc_auc([0.1, 0.2], [1, 1])


def test_auc_matches_pair_counting_exactly():
    rng = np.random.default_rng(0)
    for _ in range(100):
        s, y = random_instance(rng)
        assert roc_auc(s, y) == pair_count_auc(s, y)


@given(st.integers(0, 2**32 - 1))
def test_auc_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    s, y = random_instance(rng)
    assert roc_auc(np.exp(3 * s) - 2, y) == roc_auc(s, y)


@given(st.integers(0, 2**32 - 1))
def test_auc_label_swap(seed):
    rng = np.random.default_rng(seed)
    s, y = random_instance(rng, ties=False)
    assert roc_auc(s, 1 - y) == pytest.approx(1 - roc_auc(s, y), abs=1e-15)


def test_aupr_examples():
    assert aupr([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0
    assert aupr([0.9, 0.8, 0.3, 0.1], [0, 0, 0, 1]) == 0.25
    assert aupr([0.5, 0.1, 0.3], [1, 1, 1]) == 1.0
    with pytest.raises(UndefinedMetricError):
        aupr([0.5, 0.1], [0, 0])


def test_aupr_matches_stepwise_oracle_exactly():
    rng = np.random.default_rng(1)
    for _ in range(100):
        s, y = random_instance(rng)
        assert aupr(s, y) == stepwise_aupr(list(s), list(y))


@given(st.integers(0, 2**32 - 1))
def test_aupr_perfect_ranker(seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, 30)
    y[0] = 1
    s = y + rng.random(30) * 0.5
    assert aupr(s, y) == 1.0


def test_thresholded_examples():
    assert thresholded_metrics([0.9, 0.1], [1, 0]) == (1.0, 1.0, False)
    acc, pre, flag = thresholded_metrics([0.6, 0.6, 0.4], [1, 0, 1])
    assert acc == pytest.approx(1 / 3)
    assert pre == 0.5 and not flag
    acc, pre, flag = thresholded_metrics([0.1, 0.2, 0.3, 0.4], [0, 1, 0, 0])
    assert acc == 0.75
    assert pre == 0.0 and flag
    with pytest.raises(ValueError):
        thresholded_metrics([], [])


@given(st.integers(0, 2**32 - 1), st.floats(-1, 2))
def test_accuracy_plus_error_is_one(seed, threshold):
    rng = np.random.default_rng(seed)
    s, y = random_instance(rng)
    acc = thresholded_metrics(s, y, threshold).accuracy
    errors = np.sum((s >= threshold) != (y == 1)) / len(y)
    assert acc + errors == 1.0


def test_aggregate_single_and_pair():
    one = aggregate([FoldMetrics(0, 0.9, 0.8, 0.7, 0.6, 10)])
    assert one.mean == {"auc": 0.9, "aupr": 0.8, "acc": 0.7, "pre": 0.6}
    assert one.std == {"auc": 0.0, "aupr": 0.0, "acc": 0.0, "pre": 0.0}
    two = aggregate([FoldMetrics(0, 0.9, 0.5, 0.5, 0.5, 4), FoldMetrics(1, 0.8, 0.5, 0.5, 0.5, 4)])
    assert two.mean["auc"] == pytest.approx(0.85)


def test_aggregate_matches_summation_oracle():
    rng = np.random.default_rng(2)
    folds = [FoldMetrics(i, *rng.random(4), 20) for i in range(10)]
    report = aggregate(folds)
    for key in ("auc", "aupr", "acc", "pre"):
        vals = [getattr(f, key) for f in folds]
        mean = sum(vals) / len(vals)
        var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
        assert report.mean[key] == pytest.approx(mean, abs=1e-12)
        assert report.std[key] == pytest.approx(var ** 0.5, abs=1e-12)


def test_aggregate_skips():
    report = aggregate([FoldMetrics(0, 0.9, 0.9, 0.9, 0.9, 5), FoldMetrics(1, skipped=True)], "C3")
    assert report.skipped == 1
    assert report.mean["auc"] == 0.9
    doc = report.to_dict()
    assert doc["task"] == "C3" and doc["averaging"] == "micro"
    assert set(doc["mean"]) == {"auc", "aupr", "acc", "pre"}
    with pytest.raises(UndefinedMetricError):
        aggregate([FoldMetrics(0, skipped=True)])
