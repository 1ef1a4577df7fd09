"""Confusion-matrix metrics for evaluating the global model.

Per-class rates are one-vs-rest and macro-averaged; accuracy is
trace/total and MCC uses the multiclass (Gorodkin) generalisation.
Any ratio whose denominator is zero is defined as 0.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyShard
from .model import DataShard, ModelParams, loss, predict_batch


def _div(num: float, den: float) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class EvalReport:
    confusion_matrix: np.ndarray
    sensitivity: float
    specificity: float
    precision: float
    accuracy: float
    f1: float
    mcc: float
    per_class_recall: tuple[float, ...]
    loss: float = math.nan

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "precision": self.precision,
            "f1": self.f1,
            "mcc": self.mcc,
            "loss": self.loss,
            "per_class_recall": list(self.per_class_recall),
            "confusion_matrix": self.confusion_matrix.tolist(),
        }


def confusion_matrix(y_true, y_pred, k: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def mcc(cm: np.ndarray) -> float:
    cm = np.asarray(cm, dtype=np.float64)
    s = cm.sum()
    c = np.trace(cm)
    t = cm.sum(axis=1)
    p = cm.sum(axis=0)
    num = float(c * s - p @ t)
    den = math.sqrt(float((s * s - p @ p) * (s * s - t @ t)))
    return _div(num, den)


def metrics_from_confusion(cm, loss: float = math.nan) -> EvalReport:
    cm = np.asarray(cm, dtype=np.int64)
    k = cm.shape[0]
    total = int(cm.sum())
    tp = np.diag(cm).astype(np.float64)
    fn = cm.sum(axis=1) - tp
    fp = cm.sum(axis=0) - tp
    tn = total - tp - fn - fp
    sens = [_div(tp[i], tp[i] + fn[i]) for i in range(k)]
    spec = [_div(tn[i], tn[i] + fp[i]) for i in range(k)]
    prec = [_div(tp[i], tp[i] + fp[i]) for i in range(k)]
    f1 = [_div(2 * tp[i], 2 * tp[i] + fp[i] + fn[i]) for i in range(k)]
    return EvalReport(
        confusion_matrix=cm,
        sensitivity=float(np.mean(sens)),
        specificity=float(np.mean(spec)),
        precision=float(np.mean(prec)),
        accuracy=_div(float(tp.sum()), total),
        f1=float(np.mean(f1)),
        mcc=mcc(cm),
        per_class_recall=tuple(float(v) for v in sens),
        loss=loss,
    )


def evaluate_global(params: ModelParams, test: DataShard) -> EvalReport:
    """Argmax predictions on ``test`` summarised as an :class:`EvalReport`."""
    if len(test) == 0:
        raise EmptyShard("test set is empty")
    probs = predict_batch(params, test.features)
    pred = probs.argmax(axis=1)
    ce = loss(params, test)
    cm = confusion_matrix(test.labels, pred, params.num_classes)
    return metrics_from_confusion(cm, ce)
