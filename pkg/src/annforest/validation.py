"""Input validation helpers shared by the estimator, search, and CLI."""

from __future__ import annotations

import numpy as np

from .exceptions import DataValidationError, DimensionMismatchError

VALID_METRICS = ("euclidean", "chi2")
METRIC_CODES = {"euclidean": 0, "chi2": 1}


def check_metric(metric: str) -> int:
    """Return the kernel code for a metric name."""
    if metric not in METRIC_CODES:
        raise DataValidationError(
            f"unknown metric {metric!r}; expected one of {VALID_METRICS}"
        )
    return METRIC_CODES[metric]


def check_dataset(X, metric: str = "euclidean") -> np.ndarray:
    """Validate a dataset and return it as C-contiguous float32.

    Requirements: 2-D, at least one row and one column, every value finite.
    The chi-square metric additionally needs non-negative inputs, otherwise
    per-coordinate terms can turn negative and the distance stops being one.
    """
    X = np.asarray(X)
    if X.ndim != 2:
        raise DataValidationError(f"expected a 2-D array, got ndim={X.ndim}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise DataValidationError(f"empty dataset with shape {X.shape}")
    if not np.issubdtype(X.dtype, np.floating) and not np.issubdtype(
        X.dtype, np.integer
    ):
        raise DataValidationError(f"non-numeric dtype {X.dtype}")
    X = np.ascontiguousarray(X, dtype=np.float32)
    if not np.all(np.isfinite(X)):
        raise DataValidationError("dataset contains NaN or infinite values")
    if metric == "chi2" and np.any(X < 0):
        raise DataValidationError("chi2 metric requires non-negative data")
    return X


def check_queries(Q, n_features: int, metric: str = "euclidean") -> np.ndarray:
    """Validate query vectors against the indexed dimensionality.

    Accepts a single vector or a batch; always returns a 2-D float32 array.
    """
    Q = np.asarray(Q)
    if Q.ndim == 1:
        Q = Q.reshape(1, -1)
    if Q.ndim != 2:
        raise DataValidationError(f"expected 1-D or 2-D queries, got ndim={Q.ndim}")
    if Q.shape[1] != n_features:
        raise DimensionMismatchError(
            f"query dimensionality {Q.shape[1]} != indexed {n_features}"
        )
    Q = np.ascontiguousarray(Q, dtype=np.float32)
    if not np.all(np.isfinite(Q)):
        raise DataValidationError("queries contain NaN or infinite values")
    if metric == "chi2" and np.any(Q < 0):
        raise DataValidationError("chi2 metric requires non-negative queries")
    return Q


def check_k(k, n_available: int, name: str = "k") -> int:
    if not isinstance(k, (int, np.integer)):
        raise DataValidationError(f"{name} must be an integer, got {type(k)}")
    k = int(k)
    if k < 1:
        raise DataValidationError(f"{name} must be >= 1, got {k}")
    if k > n_available:
        raise DataValidationError(
            f"{name}={k} exceeds the {n_available} indexed points"
        )
    return k
