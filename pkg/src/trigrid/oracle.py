"""Sequential ground-truth triangle counters.

Both counters are deliberately disjoint from the distributed engine: no
hashing, no degree reordering, no block structures. ``count_serial`` walks
upper adjacency lists with a sorted merge; ``count_matrix`` evaluates the
masked dense product on tiny graphs as a cross-check of the first.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .graph import EdgeList, canonicalize, split_upper_lower, to_csr


@njit(cache=True, nogil=True)
def _merge_count_all(offsets, neighbors, n):
    total = 0
    for i in range(n):
        for e in range(offsets[i], offsets[i + 1]):
            j = neighbors[e]
            # common k > j in the upper lists of i and j
            a = offsets[i]
            a_end = offsets[i + 1]
            b = offsets[j]
            b_end = offsets[j + 1]
            while a < a_end and neighbors[a] <= j:
                a += 1
            while a < a_end and b < b_end:
                ka = neighbors[a]
                kb = neighbors[b]
                if ka < kb:
                    a += 1
                elif ka > kb:
                    b += 1
                else:
                    total += 1
                    a += 1
                    b += 1
    return total


def count_serial(g: EdgeList) -> int:
    """Exact triangle count by merge intersection over sorted upper
    adjacency lists, enumerating each triangle once as i < j < k."""
    g = canonicalize(g)
    upper, _ = split_upper_lower(to_csr(g), np.arange(g.n, dtype=np.int64))
    return int(_merge_count_all(upper.offsets, upper.neighbors, g.n))


def count_matrix(g: EdgeList) -> int:
    """Exact triangle count on graphs with n <= 64 via the masked matrix
    product: sum over nonzeros of U of (U @ L)."""
    g = canonicalize(g)
    if g.n > 64:
        raise ValueError(f"count_matrix is limited to n <= 64, got n = {g.n}")
    u = np.zeros((g.n, g.n), dtype=np.int64)
    for a, b in g.edges:
        u[a, b] = 1
    l = u.T
    return int(((u @ l) * u).sum())
