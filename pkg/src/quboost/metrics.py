"""Precision/recall machinery for imbalanced binary classification.

The positive class is +1 throughout.  Precision comparisons are made at a
fixed recall level (default 83%) obtained by linear interpolation on the
precision-recall curve.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

DEFAULT_RECALL_TARGET = 0.83


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class PrCurve:
    """Points (threshold, precision, recall) sorted by ascending recall."""

    thresholds: np.ndarray
    precisions: np.ndarray
    recalls: np.ndarray

    def __len__(self) -> int:
        return len(self.recalls)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "precision", "recall"])
            for t, p, r in zip(self.thresholds, self.precisions, self.recalls):
                writer.writerow([repr(float(t)), repr(float(p)), repr(float(r))])


def confusion(predictions, labels) -> ConfusionCounts:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels must have equal length")
    pos = labels == 1
    pred_pos = predictions == 1
    return ConfusionCounts(
        tp=int(np.sum(pred_pos & pos)),
        fp=int(np.sum(pred_pos & ~pos)),
        tn=int(np.sum(~pred_pos & ~pos)),
        fn=int(np.sum(~pred_pos & pos)),
    )


def precision_recall(c: ConfusionCounts) -> tuple[float | None, float | None]:
    """(P, R); a component is None when its denominator is zero."""
    p = c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else None
    r = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else None
    return p, r


def pr_curve(margins, labels, n_thresholds: int = 201) -> PrCurve:
    """Sweep decision thresholds over the margin range.

    A sample is predicted positive when its margin is >= the threshold.
    Thresholds with no positive predictions are dropped (precision
    undefined); among points sharing a recall the maximum precision is kept.
    """
    margins = np.asarray(margins, dtype=np.float64)
    labels = np.asarray(labels)
    if margins.shape != labels.shape:
        raise ValueError("margins and labels must have equal length")
    if n_thresholds < 2:
        raise ValueError("n_thresholds must be >= 2")
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("pr_curve needs both classes present in labels")

    thresholds = np.linspace(margins.min(), margins.max(), n_thresholds)
    best: dict[float, tuple[float, float]] = {}
    for t in thresholds:
        preds = np.where(margins >= t, 1, -1)
        c = confusion(preds, labels)
        p, r = precision_recall(c)
        if p is None or r is None:
            continue
        if r not in best or p > best[r][0]:
            best[r] = (p, t)

    recalls = np.array(sorted(best))
    precisions = np.array([best[r][0] for r in recalls])
    thr = np.array([best[r][1] for r in recalls])
    return PrCurve(thresholds=thr, precisions=precisions, recalls=recalls)


def precision_at_recall(curve: PrCurve, r_target: float = DEFAULT_RECALL_TARGET) -> float:
    """Precision at ``r_target`` by linear interpolation between the two
    recall-adjacent curve points bracketing it."""
    recalls = curve.recalls
    precisions = curve.precisions
    if len(recalls) == 0:
        raise ValueError("empty PR curve")
    if r_target < recalls[0] or r_target > recalls[-1]:
        raise ValueError(
            f"recall target {r_target} outside curve span [{recalls[0]}, {recalls[-1]}]"
        )
    exact = np.nonzero(recalls == r_target)[0]
    if len(exact):
        return float(precisions[exact[0]])
    hi = int(np.searchsorted(recalls, r_target))
    lo = hi - 1
    r0, r1 = recalls[lo], recalls[hi]
    p0, p1 = precisions[lo], precisions[hi]
    return float(p0 + (p1 - p0) * (r_target - r0) / (r1 - r0))
