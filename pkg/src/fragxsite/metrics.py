"""Binary classification metrics: rank AUC and thresholded precision/recall/F1."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class Metrics:
    auc: float
    precision: float
    recall: float
    f1: float
    no_predicted_positives: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def roc_auc(labels, scores) -> float:
    """Mann-Whitney AUC; tied scores contribute one half through midranks."""
    y = np.asarray(labels).astype(bool).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if y.shape != s.shape:
        raise MetricError(f"labels {y.shape} and scores {s.shape} differ in length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC is undefined when only one class is present")
    ranks = rankdata(s)  # average ranks for ties
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def confusion(labels, scores, threshold: float = 0.5) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) with positive prediction at score >= threshold."""
    y = np.asarray(labels).astype(bool).ravel()
    pred = np.asarray(scores, dtype=np.float64).ravel() >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    tn = int(np.sum(~pred & ~y))
    return tp, fp, fn, tn


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float, bool]:
    no_pos = tp + fp == 0
    precision = 0.0 if no_pos else tp / (tp + fp)
    recall = 0.0 if tp + fn == 0 else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1, no_pos


def compute_metrics(labels, scores, threshold: float = 0.5) -> Metrics:
    tp, fp, fn, _ = confusion(labels, scores, threshold)
    p, r, f1, flag = precision_recall_f1(tp, fp, fn)
    return Metrics(roc_auc(labels, scores), p, r, f1, flag)
