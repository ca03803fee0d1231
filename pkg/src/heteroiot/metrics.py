"""Classification metrics derived from a confusion matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class EvalReport:
    """Confusion matrix (rows true, cols predicted) and derived scores."""

    confusion: np.ndarray
    class_names: list[str]
    accuracy: float
    weighted_f1: float
    macro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_text(self) -> str:
        lines = [
            f"samples: {self.total}",
            f"accuracy:    {self.accuracy:.4f}",
            f"weighted F1: {self.weighted_f1:.4f}",
            f"macro F1:    {self.macro_f1:.4f}",
            "",
            f"{'class':<24} {'precision':>9} {'recall':>9} {'f1':>9} {'support':>8}",
        ]
        for i, name in enumerate(self.class_names):
            lines.append(
                f"{name:<24} {self.precision[i]:>9.4f} {self.recall[i]:>9.4f} "
                f"{self.f1[i]:>9.4f} {int(self.support[i]):>8}"
            )
        lines.append("")
        lines.append("confusion matrix (rows true, cols predicted):")
        for row in self.confusion:
            lines.append("  " + " ".join(f"{int(v):>5}" for v in row))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "macro_f1": self.macro_f1,
            "per_class": {
                name: {
                    "precision": float(self.precision[i]),
                    "recall": float(self.recall[i]),
                    "f1": float(self.f1[i]),
                    "support": int(self.support[i]),
                }
                for i, name in enumerate(self.class_names)
            },
            "confusion": self.confusion.tolist(),
        }


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} labels outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def evaluation_report(y_true, y_pred, class_names: list[str]) -> EvalReport:
    """Accuracy, per-class precision/recall/F1, weighted and macro F1.

    Zero-support or zero-prediction classes score 0 in the affected ratio
    rather than raising.
    """
    k = len(class_names)
    cm = confusion_matrix(y_true, y_pred, k)
    total = cm.sum()
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2.0 * precision * recall / denom, 0.0)

    accuracy = float(tp.sum() / total) if total else 0.0
    weighted_f1 = float((support / total) @ f1) if total else 0.0
    macro_f1 = float(f1.mean()) if k else 0.0
    return EvalReport(
        confusion=cm,
        class_names=list(class_names),
        accuracy=accuracy,
        weighted_f1=weighted_f1,
        macro_f1=macro_f1,
        precision=precision,
        recall=recall,
        f1=f1,
        support=support.astype(np.int64),
    )
