"""Classification metrics over predicted and true class indices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, IndexOutOfRange, LengthMismatch


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class EvalReport:
    """Aggregate metrics for one prediction run.

    confusion[i, j] counts queries of true class i predicted as class j;
    entries sum to n.  Per-class precision, recall, and F1 define 0/0 as
    0 (a class with no predictions and no members scores 0, it does not
    poison the macro average with NaN).
    """

    accuracy: float
    macro_f1: float
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    n: int

    def __post_init__(self):
        object.__setattr__(self, "confusion", _frozen(self.confusion))
        object.__setattr__(self, "precision", _frozen(self.precision))
        object.__setattr__(self, "recall", _frozen(self.recall))
        object.__setattr__(self, "f1", _frozen(self.f1))


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def evaluate(predicted, true, num_classes: int) -> EvalReport:
    """Accuracy, macro-F1, and the confusion matrix of a prediction run."""
    predicted = np.asarray(predicted, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if predicted.ndim != 1 or true.ndim != 1:
        raise LengthMismatch("predicted and true must be 1-d sequences")
    if predicted.shape[0] != true.shape[0]:
        raise LengthMismatch(
            f"predicted has {predicted.shape[0]} entries, true has {true.shape[0]}"
        )
    n = predicted.shape[0]
    if n == 0:
        raise EmptyInput("cannot evaluate zero predictions")
    num_classes = int(num_classes)
    for name, arr in (("predicted", predicted), ("true", true)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise IndexOutOfRange(f"{name} labels must lie in [0, {num_classes})")

    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (true, predicted), 1)

    diag = np.diag(confusion).astype(np.float64)
    precision = _ratio(diag, confusion.sum(axis=0).astype(np.float64))
    recall = _ratio(diag, confusion.sum(axis=1).astype(np.float64))
    f1 = _ratio(2 * precision * recall, precision + recall)
    return EvalReport(
        accuracy=float(diag.sum() / n),
        macro_f1=float(f1.mean()),
        confusion=confusion,
        precision=precision,
        recall=recall,
        f1=f1,
        n=n,
    )


def seed_summary(values) -> tuple[float, float]:
    """Mean and population standard deviation of per-seed metric values."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise EmptyInput("values must be a non-empty 1-d sequence")
    return float(values.mean()), float(values.std())
