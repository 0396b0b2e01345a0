"""Single-tree view and split-test types.

Trees do not own storage: the forest keeps one packed node/bucket table and
each PartitionTree is a (forest, root) view into it.  That keeps the hot
kernels working on flat arrays while tests and callers still get a per-tree
object to poke at.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .exceptions import ParameterError

__all__ = ["SplitTest", "make_split", "PartitionTree"]


@dataclass(frozen=True, eq=False)  # ndarray fields make generated __eq__ a trap
class SplitTest:
    """Sparse random hyperplane test: dot(x[features], coefficients) >= threshold.

    True routes a point to the left child, False to the right.
    """

    features: np.ndarray  # (n_dims,) int32, distinct column indices
    coefficients: np.ndarray  # (n_dims,) float64 in [0, 1)
    threshold: float

    def project(self, x) -> float:
        x = np.ascontiguousarray(x, dtype=np.float32)
        acc = 0.0
        for k in range(self.features.shape[0]):
            acc += float(x[self.features[k]]) * float(self.coefficients[k])
        return acc

    def evaluate(self, x) -> bool:
        return self.project(x) >= self.threshold


def make_split(X, ids, ratio, n_dims, node_key, max_attempts=None):
    """Draw the split test a node with points `ids` would use.

    Returns (SplitTest, left_mask, used_fallback) where left_mask[j] is True
    iff point ids[j] is assigned to the left child.  The threshold is sampled
    between the ratio-th and (1-ratio)-th nearest-rank percentiles of the
    projections, so both children keep at least max(1, floor(ratio * n))
    of the n points.  If
    every attempt is degenerate (e.g. identical points), the split falls back
    to cutting the (value, id) order at the median; only then can left_mask
    disagree with evaluate() for duplicate-valued points.
    """
    X = np.ascontiguousarray(X, dtype=np.float32)
    ids = np.ascontiguousarray(ids, dtype=np.int32)
    n = ids.shape[0]
    d = X.shape[1]
    if n < 2:
        raise ParameterError(f"cannot split {n} point(s)")
    if not 0.0 < ratio <= 0.5:
        raise ParameterError(f"split ratio must be in (0, 0.5], got {ratio}")
    if not 1 <= n_dims <= d:
        raise ParameterError(f"n_dims must be in [1, {d}], got {n_dims}")
    if max_attempts is None:
        max_attempts = d
    feat, coef, psi, side, fb = _kernels._draw_split(
        X, ids, float(ratio), int(n_dims), np.uint64(node_key), int(max_attempts)
    )
    return SplitTest(feat, coef, float(psi)), side.astype(bool), bool(fb)


class PartitionTree:
    """Read-mostly view of one tree inside a fitted forest."""

    def __init__(self, forest, index: int):
        self._f = forest
        self.index = index

    @property
    def root(self) -> int:
        return int(self._f._roots[self.index])

    # -- structure -----------------------------------------------------------

    def node_indices(self) -> np.ndarray:
        """All node indices of this tree, breadth-first from the root."""
        f = self._f
        order = []
        frontier = [self.root]
        while frontier:
            order.extend(frontier)
            nxt = []
            for node in frontier:
                if f._left[node] >= 0:
                    nxt.append(int(f._left[node]))
                    nxt.append(int(f._right[node]))
            frontier = nxt
        return np.asarray(order, dtype=np.int64)

    def is_leaf(self, node: int) -> bool:
        return self._f._left[node] < 0

    def children(self, node: int):
        if self.is_leaf(node):
            return None
        return int(self._f._left[node]), int(self._f._right[node])

    def split_test(self, node: int) -> SplitTest:
        if self.is_leaf(node):
            raise ParameterError(f"node {node} is a leaf")
        f = self._f
        return SplitTest(
            f._feat[node].copy(), f._coef[node].copy(), float(f._thresh[node])
        )

    def leaf_ids(self, node: int) -> np.ndarray:
        """Point ids held by a leaf, in arrival order."""
        f = self._f
        if f._left[node] >= 0:
            raise ParameterError(f"node {node} is not a leaf")
        row = f._bucket[node]
        return f._buckets[row, : f._bcount[row]].copy()

    @property
    def n_nodes(self) -> int:
        return int(self.node_indices().shape[0])

    def leaf_depths(self) -> np.ndarray:
        f = self._f
        nodes = self.node_indices()
        mask = f._left[nodes] < 0
        return f._depth[nodes[mask]].astype(np.int64)

    # -- routing ---------------------------------------------------------------

    def route(self, x) -> int:
        """Leaf node index the vector x lands in."""
        f = self._f
        x = np.ascontiguousarray(x, dtype=np.float32)
        return int(
            _kernels._route_batch(
                f._feat, f._coef, f._thresh, f._left, f._right,
                np.int64(self.root), x.reshape(1, -1),
            )[0]
        )

    def retrieve(self, x) -> np.ndarray:
        """Ids in the leaf x routes to."""
        return self.leaf_ids(self.route(x))
