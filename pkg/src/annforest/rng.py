"""Deterministic pseudo-randomness for forest construction.

Everything random in this package flows from a single 64-bit seed through
splitmix64.  Instead of one shared sequential stream, each consumer gets its
own stream derived from a (parent key, label) pair:

    forest seed
      -> tree seed      derive(seed, t)              t = tree index
         -> perm stream derive(tree_seed, PERM)      insertion order shuffle
         -> root key    derive(tree_seed, ROOT)
            -> child keys derive(node_key, LEFT|RIGHT), recursively

A node's key therefore depends only on its path from the root, never on how
many nodes existed when it was created.  That makes the forest identical no
matter whether trees are built one point at a time, in bulk, or on several
threads -- the property the determinism tests lean on.

The mixer is the reference splitmix64 finalizer (Steele, Lea & Flood), also
used as the stream generator: state advances by the golden-gamma constant and
the output is mix(state).
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# Stream / child labels.  Values are arbitrary but frozen: changing them
# changes every forest ever built from a given seed.
PERM_LABEL = 1
ROOT_LABEL = 2
LEFT_LABEL = 3
RIGHT_LABEL = 4


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive(parent: int, label: int) -> int:
    """New stream seed from a parent seed and a small integer label."""
    return mix64((parent ^ mix64(label & MASK64)) & MASK64)


class SplitStream:
    """Sequential splitmix64 stream starting from a derived seed.

    Mirrors the compiled kernels bit for bit; the pure-Python tree oracle in
    the test suite is built on this class.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def next_double(self) -> float:
        # 53-bit mantissa scaled to [0, 1)
        return (self.next_u64() >> 11) * 2.0**-53

    def next_below(self, n: int) -> int:
        """Integer in [0, n) by modulo reduction (bias is irrelevant here)."""
        return self.next_u64() % n


def insertion_order(tree_seed: int, n: int) -> np.ndarray:
    """Per-tree permutation of [0, n) via Fisher-Yates on the perm stream."""
    stream = SplitStream(derive(tree_seed, PERM_LABEL))
    perm = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = stream.next_below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm
