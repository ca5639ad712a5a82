"""Global graph representations: edge lists, CSR adjacency, and the
upper/lower triangular split used by the counting phases.

All vertex ids are 0-based integers below 2**48; entry counts are 64-bit.
Values are immutable after construction and safe to hand to rank workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidPermutationError, MalformedInputError

MAX_VERTEX_ID = 1 << 48

_BINARY_MAGIC = b"TGR1"


@dataclass(frozen=True)
class EdgeList:
    """An undirected graph as a list of vertex pairs.

    After :func:`canonicalize` the list holds each undirected edge exactly
    once as ``(min, max)``, sorted lexicographically, with no self-loops.
    """

    n: int
    edges: np.ndarray  # shape (m, 2), int64

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "edges", e)

    @property
    def m(self) -> int:
        return int(self.edges.shape[0])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EdgeList)
            and self.n == other.n
            and self.edges.shape == other.edges.shape
            and bool(np.array_equal(self.edges, other.edges))
        )


@dataclass(frozen=True)
class CsrGraph:
    """Symmetric compressed-row adjacency with sorted neighbor lists.

    Sorted lists are required: the counting kernel's backward traversal and
    binary searches assume ascending order.
    """

    n: int
    offsets: np.ndarray  # length n+1, int64, monotone
    neighbors: np.ndarray  # int64

    def __post_init__(self):
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=np.int64))
        object.__setattr__(self, "neighbors", np.asarray(self.neighbors, dtype=np.int64))

    def degree(self, v: int) -> int:
        return int(self.offsets[v + 1] - self.offsets[v])

    def adjacency(self, v: int) -> np.ndarray:
        return self.neighbors[self.offsets[v] : self.offsets[v + 1]]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)


@dataclass(frozen=True)
class GraphStats:
    """The scalar inputs (n, m, average and maximum degree) of the cost model."""

    n: int
    m: int
    d_avg: float
    d_max: int

    @classmethod
    def from_edge_list(cls, g: EdgeList) -> "GraphStats":
        if g.m == 0:
            return cls(n=g.n, m=0, d_avg=0.0, d_max=0)
        degs = np.bincount(g.edges.ravel(), minlength=g.n)
        return cls(n=g.n, m=g.m, d_avg=2.0 * g.m / g.n, d_max=int(degs.max()))


def canonicalize(raw: EdgeList) -> EdgeList:
    """Reduce to a simple undirected graph: drop self-loops, dedupe, store
    each edge once as (min, max), sorted lexicographically."""
    edges = raw.edges
    if edges.size and (edges.min() < 0 or edges.max() >= raw.n):
        raise MalformedInputError(
            f"edge endpoint out of range [0, {raw.n}): "
            f"min={edges.min()}, max={edges.max()}"
        )
    if raw.n >= MAX_VERTEX_ID:
        raise MalformedInputError(f"vertex count {raw.n} exceeds 2**48 id space")
    if edges.size == 0:
        return EdgeList(raw.n, np.empty((0, 2), dtype=np.int64))
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    keep = lo != hi
    lo, hi = lo[keep], hi[keep]
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return EdgeList(raw.n, pairs)


def to_csr(g: EdgeList) -> CsrGraph:
    """Symmetric CSR from a canonical edge list; each undirected edge
    appears in both endpoint lists, lists sorted ascending."""
    if g.m == 0:
        return CsrGraph(g.n, np.zeros(g.n + 1, dtype=np.int64), np.empty(0, dtype=np.int64))
    src = np.concatenate([g.edges[:, 0], g.edges[:, 1]])
    dst = np.concatenate([g.edges[:, 1], g.edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    counts = np.bincount(src, minlength=g.n)
    offsets = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return CsrGraph(g.n, offsets, dst)


def _check_permutation(position: np.ndarray, n: int) -> np.ndarray:
    position = np.asarray(position, dtype=np.int64)
    if position.shape != (n,):
        raise InvalidPermutationError(f"permutation has shape {position.shape}, expected ({n},)")
    seen = np.zeros(n, dtype=bool)
    if position.size and (position.min() < 0 or position.max() >= n):
        raise InvalidPermutationError("permutation values out of range")
    seen[position] = True
    if not seen.all():
        raise InvalidPermutationError("permutation is not a bijection on [0, n)")
    return position


def split_upper_lower(g: CsrGraph, position: np.ndarray) -> tuple[CsrGraph, CsrGraph]:
    """Split the relabeled adjacency into its upper and lower triangular
    halves.

    ``position`` maps old id -> new id. The result lives in new-id space:
    U stores the directed edges (i, j) with i < j at row i; L is the
    transpose of U. nnz(U) = nnz(L) = m.
    """
    position = _check_permutation(position, g.n)
    src = np.repeat(np.arange(g.n, dtype=np.int64), np.diff(g.offsets))
    new_src = position[src]
    new_dst = position[g.neighbors]
    upper = new_src < new_dst
    u = _directed_csr(g.n, new_src[upper], new_dst[upper])
    l = _directed_csr(g.n, new_dst[upper], new_src[upper])
    return u, l


def _directed_csr(n: int, rows: np.ndarray, cols: np.ndarray) -> CsrGraph:
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
    return CsrGraph(n, offsets, cols)


def load_text(path, n: int | None = None) -> EdgeList:
    """Read a `u v`-per-line edge list; `#` lines are comments. The vertex
    count defaults to max id + 1."""
    pairs = []
    with open(path, "r") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise MalformedInputError(f"bad edge line: {line!r}")
            pairs.append((int(parts[0]), int(parts[1])))
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if n is None:
        n = int(edges.max()) + 1 if edges.size else 0
    return EdgeList(n, edges)


def save_text(g: EdgeList, path) -> None:
    with open(path, "w") as fh:
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")


def load_binary(path) -> EdgeList:
    """Read the `TGR1` binary format: magic, n (u64), m (u64), edge pairs,
    all little-endian."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BINARY_MAGIC:
            raise MalformedInputError(f"bad magic {magic!r}, expected {_BINARY_MAGIC!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise MalformedInputError("truncated binary graph header")
        n, m = struct.unpack("<QQ", header)
        payload = fh.read(16 * m)
        if len(payload) != 16 * m:
            raise MalformedInputError("truncated binary graph payload")
        edges = np.frombuffer(payload, dtype="<u8").astype(np.int64).reshape(m, 2)
    return EdgeList(int(n), edges)


def save_binary(g: EdgeList, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(struct.pack("<QQ", g.n, g.m))
        fh.write(g.edges.astype("<u8").tobytes())


def load_any(path) -> EdgeList:
    """Dispatch on content: binary if the file starts with the TGR1 magic."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == _BINARY_MAGIC:
        return load_binary(path)
    return load_text(path)
