"""Confusion counts and the precision / recall / accuracy / F1 / F2 family."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyConfusion


@dataclass(frozen=True)
class Confusion:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def swapped(self) -> Confusion:
        """The same counts seen from the other class as positive."""
        return Confusion(tp=self.tn, tn=self.tp, fp=self.fn, fn=self.fp)

    @classmethod
    def from_predictions(cls, y_true, y_pred, positive: int = 1) -> Confusion:
        t = np.asarray(y_true) == positive
        p = np.asarray(y_pred) == positive
        return cls(int(np.sum(t & p)), int(np.sum(~t & ~p)), int(np.sum(~t & p)), int(np.sum(t & ~p)))

    def to_dict(self) -> dict:
        return {"TP": self.tp, "TN": self.tn, "FP": self.fp, "FN": self.fn}

    @classmethod
    def from_dict(cls, d: dict) -> Confusion:
        return cls(d["TP"], d["TN"], d["FP"], d["FN"])


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    accuracy: float
    f1: float
    f2: float

    def to_dict(self) -> dict:
        return asdict(self)


METRIC_NAMES = ("precision", "recall", "accuracy", "f1", "f2")


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def compute_metrics(c: Confusion) -> Metrics:
    """Metrics for the positive class of ``c``; every 0/0 is taken as 0."""
    if c.total <= 0:
        raise EmptyConfusion("confusion matrix has no samples")
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    accuracy = (c.tp + c.tn) / c.total
    f1 = _ratio(2 * precision * recall, precision + recall)
    f2 = _ratio(5 * precision * recall, 4 * precision + recall)
    return Metrics(precision, recall, accuracy, f1, f2)


def mean_metrics(items: list[Metrics]) -> Metrics:
    return Metrics(*(float(np.mean([getattr(m, k) for m in items])) for k in METRIC_NAMES))
