"""Pre-processing for alignment: zero-padding and anchor-fitted scaling.

Two spaces of unequal width are first equalized by zero-padding the
narrower one, which leaves inner products and pairwise distances untouched.
Each feature is then standardized to zero mean and unit variance, with the
statistics computed from anchor rows only so the scaling can be inverted on
the target side (de-normalization). Padding happens before the scaler fit;
padded columns are constant zero, so their stored std is 0 and the epsilon
clamp keeps them exactly zero after scaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

DEFAULT_EPSILON = 1e-8


@dataclass
class PaddingSpec:
    original_dim: int
    padded_dim: int

    def __post_init__(self) -> None:
        if self.padded_dim < self.original_dim:
            raise DataError(
                f"padded dim {self.padded_dim} < original dim {self.original_dim}"
            )


@dataclass
class ScalerStats:
    """Per-feature standardization statistics.

    ``std`` is stored as computed (possibly zero); the epsilon clamp is
    applied when transforming, so apply/invert stay exact inverses.
    """

    mean: np.ndarray
    std: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.ndim != 1 or self.mean.shape != self.std.shape:
            raise DataError("scaler mean/std must be equal-length vectors")
        if np.any(self.std < 0):
            raise DataError("scaler std components must be >= 0")
        if self.epsilon <= 0:
            raise DataError("scaler epsilon must be positive")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def clamped_std(self) -> np.ndarray:
        return np.maximum(self.std, self.epsilon)


def zero_pad(matrix: np.ndarray, target_dim: int) -> np.ndarray:
    """Append zero columns until the matrix has ``target_dim`` columns."""
    matrix = np.asarray(matrix, dtype=np.float64)
    n, d = matrix.shape
    if target_dim < d:
        raise DataError(f"cannot pad {d}-dim rows down to {target_dim}")
    if target_dim == d:
        return matrix
    out = np.zeros((n, target_dim), dtype=np.float64)
    out[:, :d] = matrix
    return out


def fit_scaler(anchor_rows: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> ScalerStats:
    """Per-feature mean and population (divide-by-K) standard deviation."""
    anchor_rows = np.asarray(anchor_rows, dtype=np.float64)
    if anchor_rows.ndim != 2 or anchor_rows.shape[0] < 2:
        raise DataError("scaler fit needs a 2-D matrix with at least 2 rows")
    if not np.all(np.isfinite(anchor_rows)):
        raise DataError("scaler fit input contains non-finite values")
    return ScalerStats(
        mean=anchor_rows.mean(axis=0),
        std=anchor_rows.std(axis=0),
        epsilon=epsilon,
    )


def apply_scaler(stats: ScalerStats, matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != stats.dim:
        raise DataError(
            f"scaler expects {stats.dim} columns, got shape {matrix.shape}"
        )
    return (matrix - stats.mean) / stats.clamped_std()


def invert_scaler(stats: ScalerStats, matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != stats.dim:
        raise DataError(
            f"scaler expects {stats.dim} columns, got shape {matrix.shape}"
        )
    return matrix * stats.clamped_std() + stats.mean
