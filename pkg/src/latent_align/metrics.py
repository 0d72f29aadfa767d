"""Classification metrics and per-seed aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError


@dataclass
class MetricSummary:
    """Mean and population std over a set of runs."""

    mean: float
    std: float
    n_runs: int
    values: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "n_runs": self.n_runs,
            "values": self.values,
        }


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their rank range."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    n = len(values)
    ranks_sorted = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks_sorted[i : j + 1] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = ranks_sorted
    return ranks


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve via the Mann-Whitney rank statistic.

    Equals the probability that a uniformly random positive outscores a
    uniformly random negative, with ties counted as one half. Runs in
    O(N log N) using midranks.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or labels.shape != scores.shape:
        raise DataError("auroc expects equal-length 1-D scores and labels")
    positive = labels == 1
    n_pos = int(positive.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("auroc needs at least one positive and one negative label")
    ranks = _midranks(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def macro_auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Macro-averaged one-vs-rest AUROC over the classes present in labels."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise DataError("macro_auroc expects an N x C score matrix and N labels")
    present = np.unique(labels)
    if len(present) < 2:
        raise DataError("macro_auroc needs at least two classes in labels")
    per_class = [
        auroc(scores[:, c], (labels == c).astype(np.int64)) for c in present.tolist()
    ]
    return float(np.mean(per_class))


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of exact matches."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise DataError(
            f"length mismatch: {predictions.shape} predictions vs {labels.shape} labels"
        )
    return float(np.mean(predictions == labels))


def summarize(values: Sequence[float]) -> MetricSummary:
    """Mean and population standard deviation of per-run metric values."""
    if len(values) == 0:
        raise DataError("cannot summarize an empty list of values")
    arr = np.asarray(values, dtype=np.float64)
    return MetricSummary(
        mean=float(arr.mean()),
        std=float(arr.std()),
        n_runs=len(arr),
        values=[float(v) for v in arr],
    )
