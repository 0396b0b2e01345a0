"""Random binary partition forest index.

The forest keeps every tree in one packed node table (see _kernels for the
layout) plus a fixed-width bucket table for leaf membership.  Buckets have
one spare slot beyond the leaf capacity so an insert can land in place and
trigger the split only afterwards, which is what makes single-point inserts
O(depth) instead of O(leaf rebuild).

Construction is bulk but equivalent, bit for bit, to inserting the points
one at a time in each tree's shuffled arrival order; the test suite checks
that against a sequential reference implementation.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np
from sklearn.base import BaseEstimator

from . import _kernels
from .exceptions import ParameterError
from .metrics import reported_distance
from .rng import LEFT_LABEL, RIGHT_LABEL, ROOT_LABEL, derive
from .search import QueryResult
from .tree import PartitionTree
from .validation import check_dataset, check_k, check_metric, check_queries

__all__ = ["ForestParams", "RandomPartitionForest", "build_forest"]


@dataclass
class ForestParams:
    """Construction parameters for a partition forest.

    n_trees: number of independent trees queried per lookup.
    split_ratio: lower bound, as a fraction, on either side of every split;
        in (0, 0.5].
    leaf_capacity: maximum points a leaf may hold before it splits.
    proj_dims: number of coordinates combined by each random hyperplane test.
    seed: master seed; everything else derives from it.
    """

    n_trees: int
    split_ratio: float = 0.3
    leaf_capacity: int = 12
    proj_dims: int = 1
    seed: int = 0

    def validate(self, n_features: int | None = None) -> None:
        if not isinstance(self.n_trees, (int, np.integer)) or self.n_trees < 1:
            raise ParameterError(f"n_trees must be a positive int, got {self.n_trees}")
        if not 0.0 < float(self.split_ratio) <= 0.5:
            raise ParameterError(
                f"split_ratio must be in (0, 0.5], got {self.split_ratio}"
            )
        if (
            not isinstance(self.leaf_capacity, (int, np.integer))
            or self.leaf_capacity < 2
        ):
            raise ParameterError(
                f"leaf_capacity must be an int >= 2, got {self.leaf_capacity}"
            )
        if not isinstance(self.proj_dims, (int, np.integer)) or self.proj_dims < 1:
            raise ParameterError(
                f"proj_dims must be a positive int, got {self.proj_dims}"
            )
        if n_features is not None and self.proj_dims > n_features:
            raise ParameterError(
                f"proj_dims={self.proj_dims} exceeds data dimensionality {n_features}"
            )
        if not isinstance(self.seed, (int, np.integer)):
            raise ParameterError(f"seed must be an int, got {type(self.seed)}")

    def as_dict(self) -> dict:
        return asdict(self)


def _grown(arr: np.ndarray, new_rows: int) -> np.ndarray:
    shape = (new_rows,) + arr.shape[1:]
    out = np.empty(shape, arr.dtype)
    out[: arr.shape[0]] = arr
    return out


class RandomPartitionForest(BaseEstimator):
    """Approximate nearest-neighbor index over random binary partitions.

    Each tree recursively splits the data with sparse random hyperplane
    tests whose thresholds are drawn between percentiles of the projected
    values, so leaves stay between ~split_ratio and 1x of leaf_capacity.
    A query walks every tree to exactly one leaf (no backtracking) and the
    union of those leaves is scored exactly.

    Parameters mirror ForestParams plus the metric ("euclidean" or "chi2")
    and n_threads for parallel tree construction.  With a fixed seed the
    index is identical regardless of n_threads.
    """

    def __init__(
        self,
        n_trees: int = 40,
        split_ratio: float = 0.3,
        leaf_capacity: int = 12,
        proj_dims: int = 1,
        metric: str = "euclidean",
        seed: int = 0,
        n_threads: int = 1,
    ):
        self.n_trees = n_trees
        self.split_ratio = split_ratio
        self.leaf_capacity = leaf_capacity
        self.proj_dims = proj_dims
        self.metric = metric
        self.seed = seed
        self.n_threads = n_threads

    # -- construction ----------------------------------------------------------

    @property
    def params(self) -> ForestParams:
        return ForestParams(
            n_trees=self.n_trees,
            split_ratio=self.split_ratio,
            leaf_capacity=self.leaf_capacity,
            proj_dims=self.proj_dims,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        params = self.params
        self._metric_code = check_metric(self.metric)
        X = check_dataset(X, self.metric)
        params.validate(X.shape[1])
        if not isinstance(self.n_threads, (int, np.integer)) or self.n_threads < 1:
            raise ParameterError(f"n_threads must be >= 1, got {self.n_threads}")

        self._X = X.copy()  # own the rows; inserts append here
        self.n_samples_ = X.shape[0]
        self.n_features_in_ = X.shape[1]
        seed64 = int(self.seed) & ((1 << 64) - 1)
        self._tree_seeds = np.array(
            [derive(seed64, t) for t in range(self.n_trees)], dtype=np.uint64
        )
        ratio = float(self.split_ratio)
        cap = int(self.leaf_capacity)
        ndims = int(self.proj_dims)
        attempts = int(self.n_features_in_)

        results: list = [None] * self.n_trees
        seconds = np.zeros(self.n_trees, np.float64)

        def build_one(t: int) -> None:
            t0 = time.perf_counter()
            results[t] = _kernels._build_tree(
                self._X, self._tree_seeds[t], ratio, cap, ndims, attempts
            )
            seconds[t] = time.perf_counter() - t0

        wall0 = time.perf_counter()
        workers = int(self.n_threads)
        if workers == 1:
            for t in range(self.n_trees):
                build_one(t)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(build_one, range(self.n_trees)))
        self._assemble(results)
        self.build_seconds_ = time.perf_counter() - wall0
        self.tree_build_seconds_ = seconds

        leaf_mask = self._left[: self._n_nodes] < 0
        self.mean_leaf_depth_ = float(
            np.mean(self._depth[: self._n_nodes][leaf_mask])
        )
        return self

    def _assemble(self, results: list) -> None:
        """Stitch per-tree local arrays into the packed global table."""
        node_counts = np.array([r[0].shape[0] for r in results], np.int64)
        bucket_counts = np.array([r[7].shape[0] for r in results], np.int64)
        node_off = np.zeros(len(results) + 1, np.int64)
        np.cumsum(node_counts, out=node_off[1:])
        buck_off = np.zeros(len(results) + 1, np.int64)
        np.cumsum(bucket_counts, out=buck_off[1:])

        adj_left, adj_right, adj_bucket = [], [], []
        for t, r in enumerate(results):
            left, right, bucket = r[3], r[4], r[5]
            adj_left.append(np.where(left >= 0, left + node_off[t], -1).astype(np.int32))
            adj_right.append(
                np.where(right >= 0, right + node_off[t], -1).astype(np.int32)
            )
            adj_bucket.append(
                np.where(bucket >= 0, bucket + buck_off[t], -1).astype(np.int32)
            )
        self._feat = np.concatenate([r[0] for r in results])
        self._coef = np.concatenate([r[1] for r in results])
        self._thresh = np.concatenate([r[2] for r in results])
        self._left = np.concatenate(adj_left)
        self._right = np.concatenate(adj_right)
        self._bucket = np.concatenate(adj_bucket)
        self._depth = np.concatenate([r[6] for r in results])
        self._buckets = np.concatenate([r[7] for r in results])
        self._bcount = np.concatenate([r[8] for r in results])
        self._roots = node_off[:-1].copy()
        self._n_nodes = int(node_off[-1])
        self._n_buckets = int(buck_off[-1])

    def _check_fitted(self) -> None:
        if not hasattr(self, "_feat"):
            raise ParameterError("forest is not fitted; call fit(X) first")

    # -- queries ---------------------------------------------------------------

    @property
    def trees_(self) -> list[PartitionTree]:
        self._check_fitted()
        return [PartitionTree(self, t) for t in range(self.n_trees)]

    def _active(self):
        """Views of the live prefix of each packed array."""
        n, b = self._n_nodes, self._n_buckets
        return (
            self._feat[:n],
            self._coef[:n],
            self._thresh[:n],
            self._left[:n],
            self._right[:n],
            self._bucket[:n],
            self._buckets[:b],
            self._bcount[:b],
        )

    def retrieve(self, q) -> np.ndarray:
        """Candidate set for one query: the deduplicated union of the leaf
        buckets it reaches, ascending by id."""
        self._check_fitted()
        q = check_queries(q, self.n_features_in_, self.metric)[0]
        f, c, th, lf, rt, bk, bks, bct = self._active()
        ids = _kernels._collect_candidates(
            f, c, th, lf, rt, bk, bks, bct, self._roots, q, self.n_samples_
        )
        return np.sort(ids)

    def query(self, q, k: int = 1) -> QueryResult:
        """Approximate k nearest neighbors of a single vector.

        May return fewer than k results when the candidate union is small;
        QueryResult.n_candidates tells the caller how many were scored.
        """
        self._check_fitted()
        k = check_k(k, self.n_samples_)
        q = check_queries(q, self.n_features_in_, self.metric)[0]
        f, c, th, lf, rt, bk, bks, bct = self._active()
        cand = _kernels._collect_candidates(
            f, c, th, lf, rt, bk, bks, bct, self._roots, q, self.n_samples_
        )
        dists = _kernels._score_ids(self._X[: self.n_samples_], cand, q, self._metric_code)
        order = np.lexsort((cand, dists))[:k]
        ids = cand[order].astype(np.int64)
        return QueryResult(
            ids=ids,
            distances=reported_distance(dists[order], self.metric),
            n_candidates=int(cand.shape[0]),
        )

    def kneighbors(self, Q, n_neighbors: int = 1):
        """Batch form of query(), sklearn-shaped.

        Returns (distances, ids), each (n_queries, n_neighbors).  Rows whose
        candidate union is smaller than n_neighbors are padded with id -1 and
        distance +inf.
        """
        self._check_fitted()
        k = check_k(n_neighbors, self.n_samples_, "n_neighbors")
        Q = check_queries(Q, self.n_features_in_, self.metric)
        nq = Q.shape[0]
        dist = np.full((nq, k), np.inf, np.float64)
        ids = np.full((nq, k), -1, np.int64)
        for j in range(nq):
            res = self.query(Q[j], k)
            m = res.ids.shape[0]
            ids[j, :m] = res.ids
            dist[j, :m] = res.distances
        return dist, ids

    # -- incremental updates -----------------------------------------------------

    def insert(self, x) -> int:
        """Add one point to the dataset and to every tree.

        Returns the new point id.  The updated forest is identical to the
        one that would result from the same arrival sequence at build time.
        """
        self._check_fitted()
        x = check_queries(x, self.n_features_in_, self.metric)[0]
        pid = self.n_samples_
        if pid >= self._X.shape[0]:
            self._X = _grown(self._X, max(2 * self._X.shape[0], pid + 1))
        self._X[pid] = x
        self.n_samples_ += 1
        for t in range(self.n_trees):
            self._insert_into_tree(t, pid)
        return pid

    def _insert_into_tree(self, t: int, pid: int) -> None:
        x = self._X[pid]
        key = derive(int(self._tree_seeds[t]), ROOT_LABEL)
        node = int(self._roots[t])
        ndims = int(self.proj_dims)
        while self._left[node] >= 0:
            acc = 0.0
            for k in range(ndims):
                acc += float(x[self._feat[node, k]]) * float(self._coef[node, k])
            if acc >= self._thresh[node]:
                key = derive(key, LEFT_LABEL)
                node = int(self._left[node])
            else:
                key = derive(key, RIGHT_LABEL)
                node = int(self._right[node])
        row = int(self._bucket[node])
        cnt = int(self._bcount[row])
        self._buckets[row, cnt] = pid
        self._bcount[row] = cnt + 1
        if cnt + 1 > self.leaf_capacity:
            self._split_leaf(node, row, key)

    def _split_leaf(self, node: int, row: int, key: int) -> None:
        head = self._buckets[row, : self._bcount[row]].copy()
        feat, coef, psi, side, _fb = _kernels._draw_split(
            self._X[: self.n_samples_],
            head,
            float(self.split_ratio),
            int(self.proj_dims),
            np.uint64(key),
            int(self.n_features_in_),
        )
        if self._n_nodes + 2 > self._left.shape[0]:
            new_cap = max(2 * self._left.shape[0], self._n_nodes + 2)
            for name in ("_feat", "_coef", "_thresh", "_left", "_right",
                         "_bucket", "_depth"):
                setattr(self, name, _grown(getattr(self, name), new_cap))
        if self._n_buckets + 1 > self._buckets.shape[0]:
            new_cap = max(2 * self._buckets.shape[0], self._n_buckets + 1)
            self._buckets = _grown(self._buckets, new_cap)
            self._bcount = _grown(self._bcount, new_cap)

        lidx, ridx = self._n_nodes, self._n_nodes + 1
        self._n_nodes += 2
        row2 = self._n_buckets  # right child gets a fresh row, left reuses
        self._n_buckets += 1

        left_ids = head[side == 1]
        right_ids = head[side == 0]
        self._buckets[row, : left_ids.shape[0]] = left_ids
        self._bcount[row] = left_ids.shape[0]
        self._buckets[row2, : right_ids.shape[0]] = right_ids
        self._bcount[row2] = right_ids.shape[0]

        self._feat[lidx] = self._feat[ridx] = 0
        self._coef[lidx] = self._coef[ridx] = 0.0
        self._thresh[lidx] = self._thresh[ridx] = 0.0
        self._left[lidx] = self._left[ridx] = -1
        self._right[lidx] = self._right[ridx] = -1
        self._bucket[lidx] = row
        self._bucket[ridx] = row2
        self._depth[lidx] = self._depth[ridx] = self._depth[node] + 1
        self._feat[node] = feat
        self._coef[node] = coef
        self._thresh[node] = psi
        self._left[node] = lidx
        self._right[node] = ridx
        self._bucket[node] = -1


def build_forest(X, params: ForestParams, metric: str = "euclidean",
                 n_threads: int = 1) -> RandomPartitionForest:
    """Functional construction front door used by the CLI and evaluation."""
    forest = RandomPartitionForest(
        metric=metric, n_threads=n_threads, **params.as_dict()
    )
    return forest.fit(X)
