"""Binary file formats: datasets, saved indexes, and ground-truth tables.

Three formats are defined here, all little-endian except idx which is
big-endian by definition:

  raw vectors   magic "ANNFDATA" | u32 version | u32 n | u32 d | n*d f32
  saved index   magic "ANNFORST" | header | per-tree node arrays + leaf spans
  truth table   magic "ANNTRUTH" | header | (nq, k) int32 ids | (nq, k) f64

The idx reader also accepts gzip-compressed files (sniffed by magic), since
that is how the classic digit datasets ship.
"""

from __future__ import annotations

import gzip
import struct
from hashlib import blake2b

import numpy as np

from .exceptions import FileFormatError, IndexMismatchError
from .rng import derive
from .validation import METRIC_CODES, VALID_METRICS, check_dataset

__all__ = [
    "content_hash",
    "load_idx",
    "load_vectors",
    "save_raw",
    "load_raw",
    "save_index",
    "load_index",
    "save_truth",
    "load_truth",
]

_RAW_MAGIC = b"ANNFDATA"
_INDEX_MAGIC = b"ANNFORST"
_TRUTH_MAGIC = b"ANNTRUTH"
_VERSION = 1

_IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


def content_hash(arr: np.ndarray) -> int:
    """64-bit blake2b digest of an array's dtype, shape, and bytes."""
    arr = np.ascontiguousarray(arr)
    h = blake2b(digest_size=8)
    h.update(str(arr.dtype).encode())
    h.update(np.array(arr.shape, dtype="<i8").tobytes())
    h.update(arr.tobytes())
    return int.from_bytes(h.digest(), "little")


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FileFormatError(f"truncated file while reading {what}")
    return buf


# --- idx ----------------------------------------------------------------------


def load_idx(path) -> np.ndarray:
    """Read an idx file (optionally gzipped) into a native-order array.

    idx layout: two zero bytes, a dtype byte, a rank byte, then rank
    big-endian u32 dimensions, then the elements row-major.
    """
    with _open_maybe_gzip(path) as fh:
        magic = _read_exact(fh, 4, "idx magic")
        if magic[0] != 0 or magic[1] != 0:
            raise FileFormatError(f"bad idx magic {magic!r} in {path}")
        code, ndim = magic[2], magic[3]
        if code not in _IDX_DTYPES:
            raise FileFormatError(f"unknown idx dtype byte 0x{code:02x} in {path}")
        if ndim < 1 or ndim > 8:
            raise FileFormatError(f"unreasonable idx rank {ndim} in {path}")
        shape = struct.unpack(f">{ndim}I", _read_exact(fh, 4 * ndim, "idx dims"))
        dtype = _IDX_DTYPES[code]
        count = int(np.prod(shape, dtype=np.int64))
        data = _read_exact(fh, count * dtype.itemsize, "idx data")
        if fh.read(1):
            raise FileFormatError(f"trailing bytes after idx data in {path}")
    arr = np.frombuffer(data, dtype=dtype).reshape(shape)
    return arr.astype(dtype.newbyteorder("="))


def load_vectors(path, fmt: str = "idx") -> np.ndarray:
    """Load a dataset as (n, d) float32 vectors.

    idx: rank >= 2 arrays are flattened per record; 8-bit integer data
    (classic image bytes) is scaled by 1/255 into [0, 1], other dtypes are
    cast to float32 unscaled.
    raw: the ANNFDATA container, already float32.
    """
    if fmt == "idx":
        arr = load_idx(path)
        if arr.ndim < 2:
            raise FileFormatError(
                f"{path}: idx rank {arr.ndim} cannot be interpreted as vectors"
            )
        arr = arr.reshape(arr.shape[0], -1)
        if arr.dtype.itemsize == 1:
            return np.ascontiguousarray(arr, dtype=np.float32) / np.float32(255.0)
        return np.ascontiguousarray(arr, dtype=np.float32)
    if fmt == "raw":
        return load_raw(path)
    raise FileFormatError(f"unknown dataset format {fmt!r}")


# --- raw float32 vectors --------------------------------------------------------


def save_raw(path, X) -> None:
    X = np.ascontiguousarray(X, dtype=np.float32)
    if X.ndim != 2:
        raise FileFormatError(f"raw format stores 2-D arrays, got shape {X.shape}")
    with open(path, "wb") as fh:
        fh.write(_RAW_MAGIC)
        fh.write(struct.pack("<III", _VERSION, X.shape[0], X.shape[1]))
        fh.write(X.tobytes())


def load_raw(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, "raw magic")
        if magic != _RAW_MAGIC:
            raise FileFormatError(f"bad raw-vector magic {magic!r} in {path}")
        version, n, d = struct.unpack("<III", _read_exact(fh, 12, "raw header"))
        if version != _VERSION:
            raise FileFormatError(f"unsupported raw-vector version {version}")
        if n < 1 or d < 1:
            raise FileFormatError(f"raw vector file declares empty shape {(n, d)}")
        data = _read_exact(fh, 4 * n * d, "raw data")
        if fh.read(1):
            raise FileFormatError(f"trailing bytes after raw data in {path}")
    return np.frombuffer(data, dtype="<f4").reshape(n, d).astype(np.float32)


# --- saved indexes ---------------------------------------------------------------


def save_index(path, forest) -> None:
    """Serialize a fitted forest.

    Nodes are written per tree in breadth-first order with tree-local child
    indices; leaf membership is written as (start, count) spans into the
    tree's id stream, in the same breadth-first order.  Bucket arrival order
    is preserved so inserts after a round-trip behave identically.
    """
    forest._check_fitted()
    metric_code = METRIC_CODES[forest.metric]
    n_nodes_total = forest._n_nodes
    inv = np.zeros(n_nodes_total, dtype=np.int64)

    with open(path, "wb") as fh:
        fh.write(_INDEX_MAGIC)
        fh.write(
            struct.pack(
                "<IIIII",
                _VERSION,
                metric_code,
                forest.n_trees,
                forest.proj_dims,
                forest.leaf_capacity,
            )
        )
        fh.write(struct.pack("<d", float(forest.split_ratio)))
        fh.write(struct.pack("<Q", int(forest.seed) & ((1 << 64) - 1)))
        fh.write(struct.pack("<QI", forest.n_samples_, forest.n_features_in_))
        fh.write(
            struct.pack("<Q", content_hash(forest._X[: forest.n_samples_]))
        )
        for tree in forest.trees_:
            nodes = tree.node_indices()
            inv[nodes] = np.arange(nodes.shape[0], dtype=np.int64)
            left_g = forest._left[nodes]
            right_g = forest._right[nodes]
            left_l = np.where(left_g >= 0, inv[np.maximum(left_g, 0)], -1)
            right_l = np.where(right_g >= 0, inv[np.maximum(right_g, 0)], -1)
            leaf_nodes = nodes[left_g < 0]

            spans = np.empty((leaf_nodes.shape[0], 2), dtype=np.int64)
            chunks = []
            start = 0
            for j, node in enumerate(leaf_nodes):
                row = forest._bucket[node]
                cnt = int(forest._bcount[row])
                spans[j, 0] = start
                spans[j, 1] = cnt
                chunks.append(forest._buckets[row, :cnt])
                start += cnt
            if start != forest.n_samples_:
                raise FileFormatError(
                    f"tree {tree.index} covers {start} of {forest.n_samples_} points"
                )
            ids = np.concatenate(chunks) if chunks else np.empty(0, np.int32)

            fh.write(struct.pack("<II", nodes.shape[0], leaf_nodes.shape[0]))
            fh.write(forest._feat[nodes].astype("<i4").tobytes())
            fh.write(forest._coef[nodes].astype("<f8").tobytes())
            fh.write(forest._thresh[nodes].astype("<f8").tobytes())
            fh.write(left_l.astype("<i4").tobytes())
            fh.write(right_l.astype("<i4").tobytes())
            fh.write(spans.astype("<u4").tobytes())
            fh.write(ids.astype("<i4").tobytes())


def load_index(path, X):
    """Load a saved forest and bind it to its dataset.

    X must be the dataset the index was built on (same values, dtype float32
    after conversion); a content-hash mismatch raises IndexMismatchError.
    """
    from .forest import RandomPartitionForest  # deferred: forest is a heavy import

    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, "index magic")
        if magic != _INDEX_MAGIC:
            raise FileFormatError(f"bad index magic {magic!r} in {path}")
        version, metric_code, n_trees, proj_dims, leaf_capacity = struct.unpack(
            "<IIIII", _read_exact(fh, 20, "index header")
        )
        if version != _VERSION:
            raise FileFormatError(f"unsupported index version {version}")
        if metric_code not in (0, 1):
            raise FileFormatError(f"unknown metric code {metric_code}")
        (split_ratio,) = struct.unpack("<d", _read_exact(fh, 8, "split ratio"))
        (seed,) = struct.unpack("<Q", _read_exact(fh, 8, "seed"))
        n_samples, n_features = struct.unpack(
            "<QI", _read_exact(fh, 12, "dataset shape")
        )
        (x_hash,) = struct.unpack("<Q", _read_exact(fh, 8, "dataset hash"))

        metric = VALID_METRICS[metric_code]
        X = check_dataset(X, metric)
        if X.shape != (n_samples, n_features):
            raise IndexMismatchError(
                f"index was built on shape {(n_samples, n_features)}, "
                f"got {X.shape}"
            )
        if content_hash(X) != x_hash:
            raise IndexMismatchError(
                "dataset content hash does not match the saved index"
            )

        width = leaf_capacity + 1
        per_tree = []
        total_nodes = 0
        total_leaves = 0
        for _t in range(n_trees):
            n_nodes, n_leaves = struct.unpack(
                "<II", _read_exact(fh, 8, "tree header")
            )
            feat = np.frombuffer(
                _read_exact(fh, 4 * n_nodes * proj_dims, "node features"), "<i4"
            ).reshape(n_nodes, proj_dims)
            coef = np.frombuffer(
                _read_exact(fh, 8 * n_nodes * proj_dims, "node coefficients"),
                "<f8",
            ).reshape(n_nodes, proj_dims)
            thresh = np.frombuffer(
                _read_exact(fh, 8 * n_nodes, "node thresholds"), "<f8"
            )
            left = np.frombuffer(_read_exact(fh, 4 * n_nodes, "left children"), "<i4")
            right = np.frombuffer(
                _read_exact(fh, 4 * n_nodes, "right children"), "<i4"
            )
            spans = np.frombuffer(
                _read_exact(fh, 8 * n_leaves, "leaf spans"), "<u4"
            ).reshape(n_leaves, 2)
            n_ids = int(spans[:, 1].sum())
            if n_ids != n_samples:
                raise FileFormatError(
                    f"tree covers {n_ids} of {n_samples} points"
                )
            ids = np.frombuffer(_read_exact(fh, 4 * n_ids, "leaf ids"), "<i4")
            per_tree.append((feat, coef, thresh, left, right, spans, ids))
            total_nodes += n_nodes
            total_leaves += n_leaves
        if fh.read(1):
            raise FileFormatError(f"trailing bytes after index data in {path}")

    forest = RandomPartitionForest(
        n_trees=n_trees,
        split_ratio=split_ratio,
        leaf_capacity=leaf_capacity,
        proj_dims=proj_dims,
        metric=metric,
        seed=seed,
    )
    forest._metric_code = metric_code
    forest._X = X.copy()
    forest.n_samples_ = int(n_samples)
    forest.n_features_in_ = int(n_features)
    forest._tree_seeds = np.array(
        [derive(seed, t) for t in range(n_trees)], dtype=np.uint64
    )

    forest._feat = np.empty((total_nodes, proj_dims), np.int32)
    forest._coef = np.empty((total_nodes, proj_dims), np.float64)
    forest._thresh = np.empty(total_nodes, np.float64)
    forest._left = np.empty(total_nodes, np.int32)
    forest._right = np.empty(total_nodes, np.int32)
    forest._bucket = np.full(total_nodes, -1, np.int32)
    forest._depth = np.zeros(total_nodes, np.int32)
    forest._buckets = np.zeros((total_leaves, width), np.int32)
    forest._bcount = np.zeros(total_leaves, np.int32)
    forest._roots = np.zeros(n_trees, np.int64)

    node_off = 0
    buck_off = 0
    for t, (feat, coef, thresh, left, right, spans, ids) in enumerate(per_tree):
        n_nodes = feat.shape[0]
        sl = slice(node_off, node_off + n_nodes)
        forest._feat[sl] = feat
        forest._coef[sl] = coef
        forest._thresh[sl] = thresh
        forest._left[sl] = np.where(left >= 0, left + node_off, -1)
        forest._right[sl] = np.where(right >= 0, right + node_off, -1)
        forest._roots[t] = node_off

        # rebuild depths and bucket rows by walking the local structure
        depth_l = np.zeros(n_nodes, np.int32)
        for i in range(n_nodes):
            if left[i] >= 0:
                depth_l[left[i]] = depth_l[i] + 1
                depth_l[right[i]] = depth_l[i] + 1
        forest._depth[sl] = depth_l

        leaf_local = np.flatnonzero(left < 0)
        for j, i in enumerate(leaf_local):
            row = buck_off + j
            start, cnt = int(spans[j, 0]), int(spans[j, 1])
            if cnt > width:
                raise FileFormatError(
                    f"leaf span of {cnt} exceeds capacity {leaf_capacity}"
                )
            forest._buckets[row, :cnt] = ids[start : start + cnt]
            forest._bcount[row] = cnt
            forest._bucket[node_off + i] = row
        node_off += n_nodes
        buck_off += leaf_local.shape[0]

    forest._n_nodes = total_nodes
    forest._n_buckets = total_leaves
    leaf_mask = forest._left < 0
    forest.mean_leaf_depth_ = float(np.mean(forest._depth[leaf_mask]))
    return forest


# --- ground truth tables -----------------------------------------------------------


def save_truth(path, ids, distances, metric: str, x_hash: int, q_hash: int) -> None:
    ids = np.ascontiguousarray(ids, dtype=np.int32)
    distances = np.ascontiguousarray(distances, dtype=np.float64)
    if ids.ndim != 2 or ids.shape != distances.shape:
        raise FileFormatError(
            f"truth table needs matching (nq, k) arrays, got {ids.shape} "
            f"and {distances.shape}"
        )
    with open(path, "wb") as fh:
        fh.write(_TRUTH_MAGIC)
        fh.write(
            struct.pack(
                "<IIII", _VERSION, METRIC_CODES[metric], ids.shape[1], ids.shape[0]
            )
        )
        fh.write(struct.pack("<QQ", x_hash, q_hash))
        fh.write(ids.astype("<i4").tobytes())
        fh.write(distances.astype("<f8").tobytes())


def load_truth(path, metric=None, x_hash=None, q_hash=None):
    """Read a truth table; optional arguments are checked when given."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, "truth magic")
        if magic != _TRUTH_MAGIC:
            raise FileFormatError(f"bad truth-table magic {magic!r} in {path}")
        version, metric_code, k, nq = struct.unpack(
            "<IIII", _read_exact(fh, 16, "truth header")
        )
        if version != _VERSION:
            raise FileFormatError(f"unsupported truth-table version {version}")
        fx, fq = struct.unpack("<QQ", _read_exact(fh, 16, "truth hashes"))
        ids = np.frombuffer(_read_exact(fh, 4 * nq * k, "truth ids"), "<i4")
        dists = np.frombuffer(_read_exact(fh, 8 * nq * k, "truth distances"), "<f8")
        if fh.read(1):
            raise FileFormatError(f"trailing bytes after truth data in {path}")
    if metric is not None and METRIC_CODES[metric] != metric_code:
        raise IndexMismatchError(
            f"truth table was computed under metric code {metric_code}"
        )
    if x_hash is not None and x_hash != fx:
        raise IndexMismatchError("truth table dataset hash mismatch")
    if q_hash is not None and q_hash != fq:
        raise IndexMismatchError("truth table query hash mismatch")
    return (
        ids.reshape(nq, k).astype(np.int32),
        dists.reshape(nq, k).astype(np.float64),
    )
