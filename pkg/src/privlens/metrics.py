"""Confusion counts, balanced accuracy, F1, unweighted accuracy.

PRIVATE is the positive class throughout.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Sequence

from .errors import EmptyInput, LengthMismatch, UndefinedMetric
from .features import PrivacyLabel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(
    y_true: Sequence[PrivacyLabel], y_pred: Sequence[PrivacyLabel]
) -> ConfusionCounts:
    if len(y_true) != len(y_pred):
        raise LengthMismatch(f"{len(y_true)} true vs {len(y_pred)} predicted")
    if not y_true:
        raise EmptyInput("no samples to evaluate")
    tp = fp = tn = fn = 0
    for truth, pred in zip(y_true, y_pred):
        if truth is PrivacyLabel.PRIVATE:
            if pred is PrivacyLabel.PRIVATE:
                tp += 1
            else:
                fn += 1
        else:
            if pred is PrivacyLabel.PRIVATE:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def balanced_accuracy(c: ConfusionCounts) -> float:
    """Mean of per-class recall; undefined when a class is absent."""
    if c.tp + c.fn == 0 or c.tn + c.fp == 0:
        raise UndefinedMetric("balanced accuracy needs both classes present")
    return (c.tp / (c.tp + c.fn) + c.tn / (c.tn + c.fp)) / 2.0


def f1(c: ConfusionCounts) -> float:
    """2·tp / (2·tp + fp + fn); 0.0 by convention when the denominator is 0."""
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        log.warning("F1 denominator is zero (no positives anywhere); returning 0.0")
        return 0.0
    return 2 * c.tp / denom


def unweighted_accuracy(c: ConfusionCounts) -> float:
    """Plain fraction of correct predictions."""
    if c.n == 0:
        raise EmptyInput("cannot compute accuracy on zero samples")
    return (c.tp + c.tn) / c.n


@dataclass(frozen=True)
class MetricsReport:
    balanced_accuracy: float | None
    f1: float
    unweighted_accuracy: float
    counts: ConfusionCounts

    @property
    def n(self) -> int:
        return self.counts.n

    @classmethod
    def from_labels(
        cls, y_true: Sequence[PrivacyLabel], y_pred: Sequence[PrivacyLabel]
    ) -> "MetricsReport":
        c = confusion(y_true, y_pred)
        try:
            ba = balanced_accuracy(c)
        except UndefinedMetric:
            ba = None
        return cls(
            balanced_accuracy=ba,
            f1=f1(c),
            unweighted_accuracy=unweighted_accuracy(c),
            counts=c,
        )

    def to_dict(self) -> dict:
        return {
            "balanced_accuracy": self.balanced_accuracy,
            "f1": self.f1,
            "unweighted_accuracy": self.unweighted_accuracy,
            "counts": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "tn": self.counts.tn,
                "fn": self.counts.fn,
            },
            "n": self.n,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table_row(self, name: str = "") -> str:
        ba = f"{self.balanced_accuracy:6.4f}" if self.balanced_accuracy is not None else "   n/a"
        return f"{name:<24s} BA={ba} F1={self.f1:6.4f} UBA={self.unweighted_accuracy:6.4f} n={self.n}"
