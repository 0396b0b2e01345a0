"""Query result type, exact scan oracle, and the recall boost model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .exceptions import ParameterError
from .metrics import reported_distance
from .validation import check_dataset, check_k, check_metric, check_queries

__all__ = ["QueryResult", "knn", "exact_knn", "exact_knn_batch", "boost_estimate"]


@dataclass
class QueryResult:
    """Neighbors for one query, ordered by (distance, id) ascending.

    ids: (m,) int64 point ids, m <= k when the candidate pool ran short.
    distances: (m,) float64 on the metric's reported scale (Euclidean is the
        true distance, not its square).
    n_candidates: how many distinct points were scored to produce this
        result; len(X) for the exact scan.
    """

    ids: np.ndarray
    distances: np.ndarray
    n_candidates: int = 0

    def __len__(self) -> int:
        return int(self.ids.shape[0])


def knn(index, q, k: int = 1) -> QueryResult:
    """Approximate k-NN through a fitted RandomPartitionForest."""
    return index.query(q, k)


def exact_knn(X, q, k: int = 1, metric: str = "euclidean") -> QueryResult:
    """Exact k nearest neighbors by brute-force scan.

    Shares the distance primitive and the (distance, id) tie rule with the
    forest search, so on a candidate set covering all of X both paths return
    byte-identical results.
    """
    code = check_metric(metric)
    X = check_dataset(X, metric)
    k = check_k(k, X.shape[0])
    q = check_queries(q, X.shape[1], metric)
    ids, d2 = _kernels._exact_topk(X, q, k, code)
    return QueryResult(
        ids=ids[0].astype(np.int64),
        distances=reported_distance(d2[0], metric),
        n_candidates=int(X.shape[0]),
    )


def exact_knn_batch(X, Q, k: int = 1, metric: str = "euclidean"):
    """Exact k-NN for many queries: (ids (nq, k) int64, distances (nq, k))."""
    code = check_metric(metric)
    X = check_dataset(X, metric)
    k = check_k(k, X.shape[0])
    Q = check_queries(Q, X.shape[1], metric)
    ids, d2 = _kernels._exact_topk(X, Q, k, code)
    return ids.astype(np.int64), reported_distance(d2, metric)


def boost_estimate(p_single: float, n_trees: int) -> float:
    """Recall predicted for a union of independent trees.

    If one tree finds the true neighbor with probability p, the chance at
    least one of L independent trees does is 1 - (1 - p)^L.  Trees built on
    the same data are not fully independent, so this is an upper-bound-ish
    estimate, but it tracks the observed recall curves closely.
    """
    p = float(p_single)
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p_single must be in [0, 1], got {p}")
    if not isinstance(n_trees, (int, np.integer)) or n_trees < 1:
        raise ParameterError(f"n_trees must be a positive int, got {n_trees}")
    return 1.0 - (1.0 - p) ** int(n_trees)
