from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..errors import ContractError


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    y_true = np.asarray(y_true, dtype=np.intp)
    y_pred = np.asarray(y_pred, dtype=np.intp)
    if y_true.shape != y_pred.shape:
        raise ContractError(f"{y_true.shape[0]} labels vs {y_pred.shape[0]} predictions")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    return conf


@dataclass
class MetricsReport:
    accuracy: float
    weighted_f1: float
    per_class_f1: dict[str, float]
    confusion: np.ndarray
    support: dict[str, int]
    precision: dict[str, float]
    recall: dict[str, float]

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "per_class_f1": dict(self.per_class_f1),
            "precision": dict(self.precision),
            "recall": dict(self.recall),
            "support": dict(self.support),
            "confusion": self.confusion.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "MetricsReport":
        return cls(float(data["accuracy"]), float(data["weighted_f1"]), dict(data["per_class_f1"]),
                   np.array(data["confusion"], dtype=np.int64), dict(data["support"]),
                   dict(data["precision"]), dict(data["recall"]))

    def table(self, min_support: int = 0) -> str:
        """Aligned plain-text table; classes under ``min_support`` are left out of the rows."""
        names = [c for c in self.per_class_f1 if self.support[c] >= min_support]
        width = max([len("class")] + [len(c) for c in names])
        lines = [f"{'class':<{width}}  {'support':>7}  {'prec':>6}  {'recall':>6}  {'f1':>6}"]
        for c in names:
            lines.append(f"{c:<{width}}  {self.support[c]:>7d}  {100 * self.precision[c]:>6.2f}"
                         f"  {100 * self.recall[c]:>6.2f}  {100 * self.per_class_f1[c]:>6.2f}")
        hidden = len(self.per_class_f1) - len(names)
        if hidden:
            lines.append(f"({hidden} class(es) with support < {min_support} not shown)")
        lines.append(f"{'acc':<{width}}  {self.total:>7d}  {100 * self.accuracy:>6.2f}")
        lines.append(f"{'w-F1':<{width}}  {self.total:>7d}  {100 * self.weighted_f1:>6.2f}")
        return "\n".join(lines)


def report_from_confusion(conf: np.ndarray, class_names: Sequence[str]) -> MetricsReport:
    conf = np.asarray(conf, dtype=np.int64)
    total = int(conf.sum())
    if total == 0:
        raise ContractError("cannot score an empty split")
    tp = np.diag(conf).astype(np.float64)
    support = conf.sum(axis=1)
    predicted = conf.sum(axis=0)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    names = list(class_names)
    return MetricsReport(
        accuracy=float(tp.sum() / total),
        weighted_f1=float(np.sum(support / total * f1)),
        per_class_f1=dict(zip(names, f1.tolist())),
        confusion=conf,
        support=dict(zip(names, support.tolist())),
        precision=dict(zip(names, precision.tolist())),
        recall=dict(zip(names, recall.tolist())),
    )


def score(y_true, y_pred, class_names: Sequence[str]) -> MetricsReport:
    return report_from_confusion(confusion_matrix(y_true, y_pred, len(class_names)), class_names)
