# denots/metrics.py
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .config import TaskKind
from .errors import DomainError, ShapeError

METRIC_NAME = {
    TaskKind.REGRESSION: "r2",
    TaskKind.BINARY: "auroc",
    TaskKind.MULTICLASS: "accuracy",
    TaskKind.FORECAST: "r2",
}


def r2(predictions: np.ndarray, targets: np.ndarray) -> float:
    p = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise ShapeError("r2", p.shape, y.shape)
    if y.size == 0:
        raise DomainError("r2 of an empty set")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise DomainError("r2 undefined for constant targets")
    return 1.0 - float(np.sum((y - p) ** 2)) / ss_tot


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney rank statistic; tied scores count one half."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(int)
    if s.shape != y.shape:
        raise ShapeError("auroc", s.shape, y.shape)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DomainError("auroc needs both classes present")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def accuracy(probabilities: np.ndarray, labels: np.ndarray) -> float:
    probs = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
    y = np.asarray(labels).ravel().astype(int)
    if probs.shape[0] != y.shape[0]:
        raise ShapeError("accuracy", probs.shape, y.shape)
    if y.size == 0:
        raise DomainError("accuracy of an empty set")
    return float(np.mean(probs.argmax(axis=1) == y))


def metric(task: TaskKind, predictions: Sequence[np.ndarray], targets: Sequence) -> float:
    """r2 for regression and forecasting, auroc for binary, accuracy for multiclass."""
    task = TaskKind(task)
    if len(predictions) == 0:
        raise DomainError("metric of an empty set")
    if task is TaskKind.BINARY:
        return auroc(np.array([np.ravel(p)[0] for p in predictions]), np.asarray(targets))
    if task is TaskKind.MULTICLASS:
        return accuracy(np.stack([np.ravel(p) for p in predictions]), np.asarray(targets))
    flat_p = np.concatenate([np.ravel(p) for p in predictions])
    flat_y = np.concatenate([np.ravel(np.asarray(t, dtype=np.float64)) for t in targets])
    return r2(flat_p, flat_y)


def correlation(xs: Sequence[float], ys: Sequence[float], kind: str = "pearson") -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError("correlation", x.shape, y.shape)
    if x.size < 3:
        raise DomainError("correlation needs at least three points")
    if kind == "spearman":
        x, y = rankdata(x), rankdata(y)
    elif kind != "pearson":
        raise DomainError(f"unknown correlation kind {kind!r}")
    dx, dy = x - x.mean(), y - y.mean()
    denom = float(np.sqrt(np.sum(dx * dx) * np.sum(dy * dy)))
    if denom == 0.0:
        raise DomainError("correlation undefined for zero variance")
    return float(np.sum(dx * dy) / denom)
