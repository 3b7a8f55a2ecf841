"""Confusion counts, ROC curve, AUC-ROC and accuracy.

Conventions: a sample is predicted positive iff ``score >= threshold``; a
rate with a zero denominator is 0.
"""

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass(frozen=True)
class MetricsReport:
    auc_roc: float | None
    accuracy: float
    counts: ConfusionCounts
    curve: RocCurve | None
    n_samples: int
    scores: np.ndarray | None = None


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError(f"scores ({s.size}) and labels ({y.size}) differ in length")
    if s.size == 0:
        raise ValueError("need at least one scored sample")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def confusion(scores, labels, threshold=0.5):
    s, y = _check(scores, labels)
    pred = s >= threshold
    pos = y == 1
    return ConfusionCounts(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


def tpr_fpr(c):
    """True- and false-positive rates TP/(TP+FN) and FP/(FP+TN)."""
    tpr = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    fpr = c.fp / (c.fp + c.tn) if c.fp + c.tn else 0.0
    return tpr, fpr


def _require_both_classes(y):
    npos = int(y.sum())
    if npos == 0 or npos == y.size:
        raise ValueError("ROC/AUC need at least one positive and one negative label")
    return npos, y.size - npos


def roc_curve(scores, labels):
    """ROC points over every distinct score threshold, descending.

    The first point is (0, 0) at threshold +inf; tied scores collapse to a
    single point; the last point is (1, 1).
    """
    s, y = _check(scores, labels)
    npos, nneg = _require_both_classes(y)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    tpr = np.r_[0.0, tp / npos]
    fpr = np.r_[0.0, fp / nneg]
    thr = np.r_[np.inf, s[ends]]
    return RocCurve(fpr, tpr, thr)


def auc(scores, labels):
    """Trapezoidal area under :func:`roc_curve`."""
    c = roc_curve(scores, labels)
    return float(np.sum(np.diff(c.fpr) * (c.tpr[1:] + c.tpr[:-1])) / 2.0)


def accuracy(scores, labels, threshold=0.5):
    c = confusion(scores, labels, threshold)
    return (c.tp + c.tn) / c.n


def report(scores, labels, threshold=0.5):
    """Collect every metric for one evaluation run. AUC and the curve are
    ``None`` when only one class is present."""
    s, y = _check(scores, labels)
    counts = confusion(s, y, threshold)
    if 0 < y.sum() < y.size:
        curve = roc_curve(s, y)
        area = auc(s, y)
    else:
        curve, area = None, None
    return MetricsReport(area, (counts.tp + counts.tn) / counts.n, counts, curve, int(y.size), s)


def write_report_csv(path, rows):
    """Write ``model,auc_roc,accuracy,n`` rows from (model name, report) pairs."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "auc_roc", "accuracy", "n"])
        for name, r in rows:
            w.writerow([name, "" if r.auc_roc is None else repr(r.auc_roc), repr(r.accuracy), r.n_samples])


def write_roc_csv(path, curve):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "tpr"])
        if curve is not None:
            for f, t in zip(curve.fpr, curve.tpr):
                w.writerow([repr(float(f)), repr(float(t))])
