"""Distance functions and dataset transforms.

Both metrics are computed by one shared compiled primitive so that every
caller -- single queries, batch scans, the evaluation loop -- produces the
same bits for the same pair of vectors.  Inputs are float32, accumulation is
float64.

Internally nearest-neighbor ranking uses the squared Euclidean distance;
the square root is applied only where distances are reported.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .validation import check_metric

__all__ = [
    "sq_euclidean",
    "euclidean",
    "chi_square",
    "pair_distance",
    "reported_distance",
    "normalize_unit",
]


def _as_vec(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float32)
    if a.ndim != 1:
        raise ValueError(f"expected a vector, got shape {a.shape}")
    return a


def _check_pair(a, b):
    a = _as_vec(a)
    b = _as_vec(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def sq_euclidean(a, b) -> float:
    """Squared Euclidean distance."""
    a, b = _check_pair(a, b)
    return float(_kernels._sq_l2(a, b))


def euclidean(a, b) -> float:
    return float(np.sqrt(sq_euclidean(a, b)))


def chi_square(a, b) -> float:
    """Chi-square histogram distance: sum (x-y)^2 / (x+y).

    Coordinates where x + y == 0 contribute exactly zero.  Meant for
    non-negative data (histograms); negative inputs are rejected upstream.
    """
    a, b = _check_pair(a, b)
    return float(_kernels._chi2(a, b))


def pair_distance(a, b, metric: str = "euclidean") -> float:
    """Ranking distance for a metric: squared Euclidean or raw chi-square."""
    code = check_metric(metric)
    a, b = _check_pair(a, b)
    return float(_kernels._dist(a, b, code))


def reported_distance(ranking_value, metric: str = "euclidean"):
    """Convert internal ranking distances to the user-facing scale."""
    check_metric(metric)
    if metric == "euclidean":
        return np.sqrt(ranking_value)
    return ranking_value


def normalize_unit(X) -> np.ndarray:
    """Scale each row to unit Euclidean norm; all-zero rows are left alone."""
    X = np.ascontiguousarray(X, dtype=np.float32)
    if X.ndim == 1:
        norm = float(np.linalg.norm(X.astype(np.float64)))
        return X if norm == 0.0 else (X / np.float32(norm))
    norms = np.linalg.norm(X.astype(np.float64), axis=1)
    norms[norms == 0.0] = 1.0
    return np.ascontiguousarray(X / norms[:, None].astype(np.float32))
