"""Recall-versus-cost evaluation harness.

The measurement loop streams every query through the forest once (compiled
end to end), keeps the single best candidate, and compares it against the
exact nearest neighbor, so recall@1 numbers are free of Python overhead.
Ground truth is computed once per (dataset, queries, metric, k) and cached
on disk keyed by content hashes.

Trial semantics: trial i reseeds the forest with derive(seed, i), so trials
are independent but exactly reproducible.  A sweep builds the largest forest
once per trial and evaluates nested prefixes of its trees; a prefix of L
trees is bit-identical to a forest built with n_trees=L and the same seed.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .exceptions import ParameterError
from .forest import ForestParams, RandomPartitionForest
from .rng import derive
from .search import exact_knn_batch
from .io import content_hash, load_truth, save_truth
from .validation import check_dataset, check_metric, check_queries

__all__ = ["EvalRecord", "EvalReport", "ground_truth", "evaluate", "sweep"]

CSV_COLUMNS = (
    "L",
    "r",
    "C",
    "K",
    "trial",
    "seed",
    "recall_at_1",
    "candidate_fraction",
    "mean_query_us",
    "build_ms",
)


@dataclass
class EvalRecord:
    """One (tree count, trial) measurement."""

    n_trees: int
    split_ratio: float
    leaf_capacity: int
    proj_dims: int
    trial: int
    seed: int
    recall_at_1: float
    candidate_fraction: float
    mean_query_us: float
    build_ms: float

    def row(self) -> list:
        return [
            self.n_trees,
            repr(float(self.split_ratio)),
            self.leaf_capacity,
            self.proj_dims,
            self.trial,
            self.seed,
            repr(float(self.recall_at_1)),
            repr(float(self.candidate_fraction)),
            repr(float(self.mean_query_us)),
            repr(float(self.build_ms)),
        ]


@dataclass
class EvalReport:
    """All records from an evaluation run plus dataset context."""

    records: list = field(default_factory=list)
    n_samples: int = 0
    n_queries: int = 0
    metric: str = "euclidean"

    def mean_recall(self, n_trees: int) -> float:
        vals = [r.recall_at_1 for r in self.records if r.n_trees == n_trees]
        if not vals:
            raise ParameterError(f"no records with n_trees={n_trees}")
        return float(np.mean(vals))

    def mean_fraction(self, n_trees: int) -> float:
        vals = [r.candidate_fraction for r in self.records if r.n_trees == n_trees]
        if not vals:
            raise ParameterError(f"no records with n_trees={n_trees}")
        return float(np.mean(vals))

    def tree_counts(self) -> list[int]:
        return sorted({r.n_trees for r in self.records})

    def write_csv(self, target) -> None:
        """Write records as CSV; target is a path or an open text file."""
        if hasattr(target, "write"):
            w = csv.writer(target, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.records:
                w.writerow(r.row())
            return
        with open(target, "w", newline="") as fh:
            self.write_csv(fh)


def ground_truth(X, Q, metric: str = "euclidean", k: int = 1, cache_dir=None):
    """Exact (ids, distances) for each query, cached on disk when possible.

    The cache key is the content hash of both arrays plus metric and k, so a
    stale file can never be returned for different data.
    """
    check_metric(metric)
    X = check_dataset(X, metric)
    Q = check_queries(Q, X.shape[1], metric)
    if cache_dir is None:
        ids, dists = exact_knn_batch(X, Q, k, metric)
        return ids.astype(np.int32), dists
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    xh, qh = content_hash(X), content_hash(Q)
    path = cache_dir / f"truth-{xh:016x}-{qh:016x}-{metric}-k{k}.bin"
    if path.exists():
        ids, dists = load_truth(path, metric=metric, x_hash=xh, q_hash=qh)
        return ids, dists
    ids, dists = exact_knn_batch(X, Q, k, metric)
    ids = ids.astype(np.int32)
    save_truth(path, ids, dists, metric, xh, qh)
    return ids, dists


def _measure(forest: RandomPartitionForest, Q, truth_ids, trial, seed,
             n_trees=None, build_ms=None) -> EvalRecord:
    """Timed recall pass over the first n_trees trees of a fitted forest."""
    if n_trees is None:
        n_trees = forest.n_trees
    f, c, th, lf, rt, bk, bks, bct = forest._active()
    roots = forest._roots[:n_trees]
    X = forest._X[: forest.n_samples_]
    t0 = time.perf_counter()
    best, counts = _kernels._eval_recall(
        X, Q, f, c, th, lf, rt, bk, bks, bct, roots, forest._metric_code
    )
    dt = time.perf_counter() - t0
    if build_ms is None:
        build_ms = 1e3 * float(np.sum(forest.tree_build_seconds_[:n_trees]))
    return EvalRecord(
        n_trees=int(n_trees),
        split_ratio=float(forest.split_ratio),
        leaf_capacity=int(forest.leaf_capacity),
        proj_dims=int(forest.proj_dims),
        trial=int(trial),
        seed=int(seed),
        recall_at_1=float(np.mean(best == truth_ids)),
        candidate_fraction=float(np.mean(counts) / forest.n_samples_),
        mean_query_us=1e6 * dt / Q.shape[0],
        build_ms=float(build_ms),
    )


def evaluate(X, Q, params: ForestParams, metric: str = "euclidean",
             trials: int = 1, cache_dir=None, n_threads: int = 1) -> EvalReport:
    """Recall@1 and candidate cost for one parameter setting."""
    return sweep(
        X, Q, params, [params.n_trees], metric=metric, trials=trials,
        cache_dir=cache_dir, n_threads=n_threads,
    )


def sweep(X, Q, params: ForestParams, tree_counts, metric: str = "euclidean",
          trials: int = 1, cache_dir=None, n_threads: int = 1) -> EvalReport:
    """Evaluate several tree counts by building one forest per trial.

    tree_counts must be positive and ascending; the largest count is built
    and smaller ones are evaluated as prefixes of the same forest.
    """
    tree_counts = [int(v) for v in tree_counts]
    if not tree_counts or any(v < 1 for v in tree_counts):
        raise ParameterError(f"tree counts must be positive, got {tree_counts}")
    if sorted(tree_counts) != tree_counts or len(set(tree_counts)) != len(tree_counts):
        raise ParameterError(f"tree counts must be strictly ascending, got {tree_counts}")
    if not isinstance(trials, (int, np.integer)) or trials < 1:
        raise ParameterError(f"trials must be a positive int, got {trials}")
    check_metric(metric)
    X = check_dataset(X, metric)
    Q = check_queries(Q, X.shape[1], metric)
    params.validate(X.shape[1])

    truth_ids, _ = ground_truth(X, Q, metric, k=1, cache_dir=cache_dir)
    truth1 = truth_ids[:, 0].astype(np.int64)

    _kernels.warmup()  # keep JIT compilation out of the timings
    report = EvalReport(
        n_samples=X.shape[0], n_queries=Q.shape[0], metric=metric
    )
    l_max = tree_counts[-1]
    base_seed = int(params.seed) & ((1 << 64) - 1)
    for trial in range(trials):
        seed = derive(base_seed, trial)
        forest = RandomPartitionForest(
            n_trees=l_max,
            split_ratio=params.split_ratio,
            leaf_capacity=params.leaf_capacity,
            proj_dims=params.proj_dims,
            metric=metric,
            seed=seed,
            n_threads=n_threads,
        ).fit(X)
        for l_cur in tree_counts:
            report.records.append(
                _measure(forest, Q, truth1, trial, seed, n_trees=l_cur)
            )
    return report
