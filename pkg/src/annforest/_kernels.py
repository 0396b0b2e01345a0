"""Compiled kernels: tree construction, routing, and distance scans.

Everything here must stay bit-compatible with the pure-Python reference
implementations (rng.SplitStream and the oracle tree in the test suite), so
no fastmath, no reassociation tricks beyond a fixed four-accumulator unroll
that every call site shares, and float64 accumulation throughout.

Layout conventions used by all kernels:
  * node arrays are "packed": one global table for the whole forest, each
    tree owning a root index.  left/right hold global child indices or -1
    for leaves.  bucket[node] is a row into the fixed-width bucket table
    (width leaf_capacity + 1 so an insert can land before the split).
  * point ids are int32 row indices into the dataset.
  * metric codes: 0 = squared Euclidean, 1 = chi-square.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

# --- splitmix64, mirroring rng.py ------------------------------------------

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 2.0**-53

_PERM_LABEL = np.uint64(1)
_ROOT_LABEL = np.uint64(2)
_LEFT_LABEL = np.uint64(3)
_RIGHT_LABEL = np.uint64(4)


@njit(cache=True, inline="always")
def _mix64(z):
    z = z + _GOLD
    z = (z ^ (z >> _S30)) * _MUL1
    z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _derive(parent, label):
    return _mix64(parent ^ _mix64(label))


@njit(cache=True)
def _fisher_yates(seed, n):
    """Permutation of [0, n) drawn from the stream at `seed`."""
    state = seed
    perm = np.empty(n, np.int32)
    for i in range(n):
        perm[i] = i
    for i in range(n - 1, 0, -1):
        state = state + _GOLD
        j = np.int64(_mix64(state) % np.uint64(i + 1))
        t = perm[i]
        perm[i] = perm[j]
        perm[j] = t
    return perm


# --- distances ---------------------------------------------------------------

@njit(cache=True, inline="always")
def _sq_l2(a, b):
    n = a.shape[0]
    m = n - (n & 3)
    acc0 = 0.0
    acc1 = 0.0
    acc2 = 0.0
    acc3 = 0.0
    i = 0
    while i < m:
        d0 = np.float64(a[i]) - np.float64(b[i])
        d1 = np.float64(a[i + 1]) - np.float64(b[i + 1])
        d2 = np.float64(a[i + 2]) - np.float64(b[i + 2])
        d3 = np.float64(a[i + 3]) - np.float64(b[i + 3])
        acc0 += d0 * d0
        acc1 += d1 * d1
        acc2 += d2 * d2
        acc3 += d3 * d3
        i += 4
    while i < n:
        d0 = np.float64(a[i]) - np.float64(b[i])
        acc0 += d0 * d0
        i += 1
    return (acc0 + acc1) + (acc2 + acc3)


@njit(cache=True, inline="always")
def _chi2(a, b):
    # sum (x-y)^2 / (x+y); coordinates with zero denominator contribute 0
    n = a.shape[0]
    m = n - (n & 3)
    acc0 = 0.0
    acc1 = 0.0
    acc2 = 0.0
    acc3 = 0.0
    i = 0
    while i < m:
        x0 = np.float64(a[i])
        y0 = np.float64(b[i])
        x1 = np.float64(a[i + 1])
        y1 = np.float64(b[i + 1])
        x2 = np.float64(a[i + 2])
        y2 = np.float64(b[i + 2])
        x3 = np.float64(a[i + 3])
        y3 = np.float64(b[i + 3])
        s0 = x0 + y0
        s1 = x1 + y1
        s2 = x2 + y2
        s3 = x3 + y3
        if s0 > 0.0:
            acc0 += (x0 - y0) * (x0 - y0) / s0
        if s1 > 0.0:
            acc1 += (x1 - y1) * (x1 - y1) / s1
        if s2 > 0.0:
            acc2 += (x2 - y2) * (x2 - y2) / s2
        if s3 > 0.0:
            acc3 += (x3 - y3) * (x3 - y3) / s3
        i += 4
    while i < n:
        x0 = np.float64(a[i])
        y0 = np.float64(b[i])
        s0 = x0 + y0
        if s0 > 0.0:
            acc0 += (x0 - y0) * (x0 - y0) / s0
        i += 1
    return (acc0 + acc1) + (acc2 + acc3)


@njit(cache=True, inline="always")
def _dist(a, b, metric):
    if metric == 0:
        return _sq_l2(a, b)
    return _chi2(a, b)


@njit(cache=True, nogil=True)
def _score_ids(X, ids, q, metric):
    out = np.empty(ids.shape[0], np.float64)
    for j in range(ids.shape[0]):
        out[j] = _dist(X[ids[j]], q, metric)
    return out


# --- split drawing -----------------------------------------------------------

@njit(cache=True, nogil=True)
def _draw_split(X, ids, ratio, n_dims, node_key, max_attempts):
    """Random hyperplane test for the points `ids`, keyed by `node_key`.

    Returns (features, coefficients, threshold, left_side, used_fallback)
    where left_side[j] == 1 iff point ids[j] goes to the left child.  The
    threshold is drawn uniformly between the ratio-th and (1-ratio)-th
    percentile values of the projections, percentiles resolved to nearest
    rank (half rounds up), so each side keeps at least
    max(1, floor(ratio * n)) points; after max_attempts degenerate draws the
    split falls back to assigning the lower half of the (value, id) order to
    the right child and the upper half to the left.
    """
    n = ids.shape[0]
    d = X.shape[1]
    feat = np.empty(n_dims, np.int32)
    coef = np.empty(n_dims, np.float64)
    y = np.empty(n, np.float64)
    order = np.empty(n, np.int64)
    left_side = np.empty(n, np.uint8)

    lo = np.int64(np.floor(ratio * n + 0.5))
    if lo < 1:
        lo = 1
    hi = np.int64(np.floor((1.0 - ratio) * n + 0.5))
    if hi > n - 1:
        hi = n - 1

    state = node_key
    for _attempt in range(max_attempts):
        for k in range(n_dims):
            while True:
                state = state + _GOLD
                c = np.int32(_mix64(state) % np.uint64(d))
                dup = False
                for kk in range(k):
                    if feat[kk] == c:
                        dup = True
                        break
                if not dup:
                    feat[k] = c
                    break
        for k in range(n_dims):
            state = state + _GOLD
            coef[k] = np.float64(_mix64(state) >> _S11) * _INV53
        for j in range(n):
            acc = 0.0
            row = ids[j]
            for k in range(n_dims):
                acc += np.float64(X[row, feat[k]]) * coef[k]
            y[j] = acc
        # stable order by (projection, id); n is small so insertion sort
        for j in range(n):
            order[j] = j
        for j in range(1, n):
            oj = order[j]
            yj = y[oj]
            ij = ids[oj]
            p = j - 1
            while p >= 0:
                op = order[p]
                if y[op] > yj or (y[op] == yj and ids[op] > ij):
                    order[p + 1] = op
                    p -= 1
                else:
                    break
            order[p + 1] = oj

        if lo < hi:
            y_lo = y[order[lo]]
            y_hi = y[order[hi]]
            if y_lo < y_hi:
                state = state + _GOLD
                u = np.float64(_mix64(state) >> _S11) * _INV53
                psi = y_lo + u * (y_hi - y_lo)
                if psi == y_lo and y[order[lo - 1]] == y_lo:
                    # duplicates touch the lower percentile: nudge so they
                    # stay right and the occupancy bound holds exactly
                    psi = np.nextafter(y_lo, np.inf)
                for j in range(n):
                    left_side[j] = 1 if y[j] >= psi else 0
                return feat, coef, psi, left_side, False

    # every attempt degenerate: split the (value, id) order at the median
    m = n // 2
    psi = y[order[m]]
    for j in range(n):
        left_side[j] = 0
    for jj in range(m, n):
        left_side[order[jj]] = 1
    return feat, coef, psi, left_side, True


# --- bulk tree construction --------------------------------------------------

@njit(cache=True, nogil=True)
def _build_tree(X, tree_seed, ratio, capacity, n_dims, max_attempts):
    """Build one tree over all rows of X, equivalent to inserting them one
    at a time in this tree's shuffled order.

    Equivalence holds because a node's split test depends only on its first
    capacity+1 arrivals and its path key, and routing all later arrivals
    through that fixed test preserves their relative order within each child.

    Returns trimmed arrays:
      feat, coef, thresh, left, right, bucket, depth, buckets, bucket_count
    with left/right as tree-local indices.
    """
    n_pts = X.shape[0]
    width = capacity + 1

    ids = _fisher_yates(_derive(tree_seed, _PERM_LABEL), n_pts)
    scratch = np.empty(n_pts, np.int32)

    cap_nodes = 2 * n_pts + 1
    feat = np.zeros((cap_nodes, n_dims), np.int32)
    coef = np.zeros((cap_nodes, n_dims), np.float64)
    thresh = np.zeros(cap_nodes, np.float64)
    left = np.full(cap_nodes, -1, np.int32)
    right = np.full(cap_nodes, -1, np.int32)
    bucket = np.full(cap_nodes, -1, np.int32)
    depth = np.zeros(cap_nodes, np.int32)
    buckets = np.zeros((n_pts + 1, width), np.int32)
    bcount = np.zeros(n_pts + 1, np.int32)

    st_node = np.empty(2 * n_pts + 2, np.int64)
    st_a = np.empty(2 * n_pts + 2, np.int64)
    st_b = np.empty(2 * n_pts + 2, np.int64)
    st_key = np.empty(2 * n_pts + 2, np.uint64)
    st_dep = np.empty(2 * n_pts + 2, np.int32)

    n_nodes = 1
    n_buckets = 0
    sp = 0
    st_node[0] = 0
    st_a[0] = 0
    st_b[0] = n_pts
    st_key[0] = _derive(tree_seed, _ROOT_LABEL)
    st_dep[0] = 0
    sp = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        a = st_a[sp]
        b = st_b[sp]
        key = st_key[sp]
        dep = st_dep[sp]
        n = b - a
        depth[node] = dep

        if n <= capacity:
            brow = n_buckets
            n_buckets += 1
            bcount[brow] = n
            for j in range(n):
                buckets[brow, j] = ids[a + j]
            bucket[node] = brow
            continue

        head = ids[a : a + width]
        f, c, psi, head_side, _fb = _draw_split(
            X, head, ratio, n_dims, key, max_attempts
        )
        for k in range(n_dims):
            feat[node, k] = f[k]
            coef[node, k] = c[k]
        thresh[node] = psi

        # stable two-pass partition: left kept before right, order preserved
        nl = 0
        for j in range(n):
            pid = ids[a + j]
            if j < width:
                go_left = head_side[j] == 1
            else:
                acc = 0.0
                for k in range(n_dims):
                    acc += np.float64(X[pid, f[k]]) * c[k]
                go_left = acc >= psi
            if go_left:
                scratch[a + nl] = pid
                nl += 1
        nr = 0
        for j in range(n):
            pid = ids[a + j]
            if j < width:
                go_left = head_side[j] == 1
            else:
                acc = 0.0
                for k in range(n_dims):
                    acc += np.float64(X[pid, f[k]]) * c[k]
                go_left = acc >= psi
            if not go_left:
                scratch[a + nl + nr] = pid
                nr += 1
        for j in range(n):
            ids[a + j] = scratch[a + j]

        lidx = n_nodes
        ridx = n_nodes + 1
        n_nodes += 2
        left[node] = lidx
        right[node] = ridx
        st_node[sp] = ridx
        st_a[sp] = a + nl
        st_b[sp] = b
        st_key[sp] = _derive(key, _RIGHT_LABEL)
        st_dep[sp] = dep + 1
        sp += 1
        st_node[sp] = lidx
        st_a[sp] = a
        st_b[sp] = a + nl
        st_key[sp] = _derive(key, _LEFT_LABEL)
        st_dep[sp] = dep + 1
        sp += 1

    return (
        feat[:n_nodes].copy(),
        coef[:n_nodes].copy(),
        thresh[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        bucket[:n_nodes].copy(),
        depth[:n_nodes].copy(),
        buckets[:n_buckets].copy(),
        bcount[:n_buckets].copy(),
    )


# --- routing and retrieval ---------------------------------------------------

@njit(cache=True, inline="always")
def _route_from(feat, coef, thresh, left, right, root, q):
    node = root
    while left[node] >= 0:
        acc = 0.0
        for k in range(feat.shape[1]):
            acc += np.float64(q[feat[node, k]]) * coef[node, k]
        if acc >= thresh[node]:
            node = left[node]
        else:
            node = right[node]
    return node


@njit(cache=True, nogil=True)
def _route_batch(feat, coef, thresh, left, right, root, Q):
    out = np.empty(Q.shape[0], np.int64)
    for j in range(Q.shape[0]):
        out[j] = _route_from(feat, coef, thresh, left, right, root, Q[j])
    return out


@njit(cache=True, nogil=True)
def _collect_candidates(
    feat, coef, thresh, left, right, bucket, buckets, bcount, roots, q, n_pts
):
    """Deduplicated union of the leaf buckets q reaches, first-seen order."""
    seen = np.zeros(n_pts, np.uint8)
    cap = roots.shape[0] * buckets.shape[1]
    out = np.empty(cap, np.int32)
    cnt = 0
    for t in range(roots.shape[0]):
        node = _route_from(feat, coef, thresh, left, right, roots[t], q)
        brow = bucket[node]
        for p in range(bcount[brow]):
            pid = buckets[brow, p]
            if seen[pid] == 0:
                seen[pid] = 1
                out[cnt] = pid
                cnt += 1
    return out[:cnt].copy()


@njit(cache=True, nogil=True, parallel=True)
def _exact_topk(X, Q, k, metric):
    """Top-k nearest rows of X per query, ordered by (distance, id)."""
    nq = Q.shape[0]
    n = X.shape[0]
    out_ids = np.full((nq, k), -1, np.int32)
    out_d = np.full((nq, k), np.inf, np.float64)
    for qi in prange(nq):
        q = Q[qi]
        filled = 0
        for i in range(n):
            dd = _dist(X[i], q, metric)
            if filled == k:
                last = filled - 1
                if dd > out_d[qi, last] or (
                    dd == out_d[qi, last] and i > out_ids[qi, last]
                ):
                    continue
            p = filled if filled < k else k - 1
            while p > 0 and (
                out_d[qi, p - 1] > dd
                or (out_d[qi, p - 1] == dd and out_ids[qi, p - 1] > i)
            ):
                out_d[qi, p] = out_d[qi, p - 1]
                out_ids[qi, p] = out_ids[qi, p - 1]
                p -= 1
            out_d[qi, p] = dd
            out_ids[qi, p] = np.int32(i)
            if filled < k:
                filled += 1
    return out_ids, out_d


@njit(cache=True, nogil=True, parallel=True)
def _eval_recall(
    X,
    Q,
    feat,
    coef,
    thresh,
    left,
    right,
    bucket,
    buckets,
    bcount,
    roots,
    metric,
):
    """Stream each query through the forest and keep the best candidate.

    Returns (best_ids, n_candidates) per query; recall is computed by the
    caller against exact ground truth.  Ties go to the smaller id, matching
    the exact scan.
    """
    nq = Q.shape[0]
    n_pts = X.shape[0]
    best_ids = np.full(nq, -1, np.int64)
    counts = np.zeros(nq, np.int64)
    for qi in prange(nq):
        q = Q[qi]
        seen = np.zeros(n_pts, np.uint8)
        best_d = np.inf
        best_i = np.int64(-1)
        cnt = 0
        for t in range(roots.shape[0]):
            node = _route_from(feat, coef, thresh, left, right, roots[t], q)
            brow = bucket[node]
            for p in range(bcount[brow]):
                pid = buckets[brow, p]
                if seen[pid] == 0:
                    seen[pid] = 1
                    cnt += 1
                    dd = _dist(X[pid], q, metric)
                    if dd < best_d or (dd == best_d and pid < best_i):
                        best_d = dd
                        best_i = pid
        best_ids[qi] = best_i
        counts[qi] = cnt
    return best_ids, counts


def warmup() -> None:
    """Force-compile the kernels on a toy problem (cached across sessions)."""
    rng = np.random.default_rng(0)
    X = rng.random((40, 8)).astype(np.float32)
    Q = X[:4]
    f, c, th, lf, rt, bk, dp, bks, bct = _build_tree(
        X, np.uint64(1), 0.3, 6, 2, 8
    )
    roots = np.zeros(1, np.int64)
    for metric in (0, 1):
        _eval_recall(X, Q, f, c, th, lf, rt, bk, bks, bct, roots, metric)
        _exact_topk(X, Q, 2, metric)
        _collect_candidates(f, c, th, lf, rt, bk, bks, bct, roots, Q[0], 40)
        _score_ids(X, np.arange(4, dtype=np.int32), Q[0], metric)
    _route_batch(f, c, th, lf, rt, np.int64(0), Q)
