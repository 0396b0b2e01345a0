"""Approximate nearest-neighbor search with random binary partition forests.

Quick start::

    from annforest import RandomPartitionForest

    index = RandomPartitionForest(n_trees=80, seed=1).fit(X)
    result = index.query(q, k=10)        # QueryResult: ids, distances
    dist, ids = index.kneighbors(Q, 10)  # sklearn-shaped batch form
"""

from .exceptions import (
    AnnForestError,
    DataValidationError,
    DimensionMismatchError,
    FileFormatError,
    IndexMismatchError,
    ParameterError,
)
from .evaluation import EvalRecord, EvalReport, evaluate, ground_truth, sweep
from .forest import ForestParams, RandomPartitionForest, build_forest
from .metrics import chi_square, euclidean, normalize_unit, sq_euclidean
from .search import QueryResult, boost_estimate, exact_knn, exact_knn_batch, knn
from .tree import PartitionTree, SplitTest, make_split

__version__ = "0.1.0"

__all__ = [
    "AnnForestError",
    "DataValidationError",
    "DimensionMismatchError",
    "FileFormatError",
    "IndexMismatchError",
    "ParameterError",
    "EvalRecord",
    "EvalReport",
    "evaluate",
    "ground_truth",
    "sweep",
    "ForestParams",
    "RandomPartitionForest",
    "build_forest",
    "chi_square",
    "euclidean",
    "normalize_unit",
    "sq_euclidean",
    "QueryResult",
    "boost_estimate",
    "exact_knn",
    "exact_knn_batch",
    "knn",
    "PartitionTree",
    "SplitTest",
    "make_split",
    "__version__",
]
