"""Distributed preprocessing: cyclic redistribution, degree relabeling via
distributed counting sort, and 2D cyclic construction of the U, L, and
task blocks.

Each rank starts from a contiguous 1-D slice of the adjacency structure
and ends holding its grid-cell blocks in new (degree-ordered) vertex ids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import COL_MAJOR, ROW_MAJOR, DcsrBlock, blob_decode, blob_encode, build_block
from .errors import MalformedInputError, ProtocolError
from .transport import CommHandle, coord_of


@dataclass(frozen=True)
class LocalSlice:
    """A rank's share of the graph: owned vertex ids and their adjacency
    lists in CSR form. Ids may be old (pre-relabel) or new, depending on
    the pipeline stage."""

    owner: int
    vertices: np.ndarray  # int64
    offsets: np.ndarray  # len(vertices)+1, int64
    neighbors: np.ndarray  # int64

    def adjacency(self, k: int) -> np.ndarray:
        return self.neighbors[self.offsets[k] : self.offsets[k + 1]]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)


@dataclass(frozen=True)
class RelabelMap:
    """Owner shard of the old-id -> new-id permutation. Rank r holds the
    translations for old ids congruent to r mod p."""

    owner: int
    p: int
    old_ids: np.ndarray  # ascending, old_ids % p == owner
    new_ids: np.ndarray

    def translate(self, old: np.ndarray) -> np.ndarray:
        """Translate old ids owned by this rank (old % p == owner)."""
        old = np.asarray(old, dtype=np.int64)
        idx = (old - self.owner) // self.p
        if old.size and (
            np.any(old % self.p != self.owner) or np.any(idx < 0) or np.any(idx >= self.new_ids.size)
        ):
            raise ProtocolError(f"rank {self.owner}: translation query for unowned/unknown old id")
        return self.new_ids[idx]


@dataclass(frozen=True)
class RankBlocks:
    """Preprocessing output for one rank: home operand blocks plus the
    stationary task block."""

    n: int
    grid_side: int
    u_home: DcsrBlock
    l_home: DcsrBlock
    task: DcsrBlock


def _pack_i64(*arrays: np.ndarray) -> bytes:
    """Length-prefixed concatenation of int64 arrays as little-endian u64."""
    parts = []
    for arr in arrays:
        arr = np.asarray(arr, dtype=np.int64)
        parts.append(np.array([arr.size], dtype="<u8").tobytes())
        parts.append(arr.astype("<u8").tobytes())
    return b"".join(parts)


def _unpack_i64(buf: bytes, count: int) -> list[np.ndarray]:
    out = []
    pos = 0
    for _ in range(count):
        size = int(np.frombuffer(buf[pos : pos + 8], dtype="<u8")[0])
        pos += 8
        out.append(np.frombuffer(buf[pos : pos + 8 * size], dtype="<u8").astype(np.int64))
        pos += 8 * size
    if pos != len(buf):
        raise ProtocolError("trailing bytes in packed message")
    return out


def cyclic_redistribute(h: CommHandle, slice_: LocalSlice, n: int) -> LocalSlice:
    """Move vertex v (old id) to rank v mod p, preserving adjacency
    content. The input slices must partition [0, n) contiguously."""
    p = h.p
    verts = slice_.vertices
    if verts.size and np.any(np.diff(verts) != 1):
        raise MalformedInputError(f"rank {h.my_rank}: input slice is not contiguous")
    counts_below = int(h.exscan_sum_vec(np.array([verts.size], dtype=np.int64))[0])
    total = h.allreduce_sum_u64(verts.size)
    start = int(verts[0]) if verts.size else counts_below
    if total != n or start != counts_below:
        raise MalformedInputError(
            f"rank {h.my_rank}: slices do not partition [0, {n}) contiguously"
        )

    degrees = slice_.degrees
    outgoing = []
    for dest in range(p):
        sel = verts % p == dest
        vsel = verts[sel]
        entry_sel = np.repeat(sel, degrees)
        outgoing.append(
            _pack_i64(vsel, degrees[sel], slice_.neighbors[entry_sel])
        )
    incoming = h.alltoallv_bytes(outgoing)

    got_verts, got_degs, got_nbrs = [], [], []
    for buf in incoming:
        v, d, nb = _unpack_i64(buf, 3)
        got_verts.append(v)
        got_degs.append(d)
        got_nbrs.append(nb)
    verts_all = np.concatenate(got_verts) if got_verts else np.empty(0, dtype=np.int64)
    degs_all = np.concatenate(got_degs)
    nbrs_all = np.concatenate(got_nbrs)

    order = np.argsort(verts_all, kind="stable")
    verts_sorted = verts_all[order]
    degs_sorted = degs_all[order]
    # reorder the concatenated adjacency segments to match
    seg_offsets = np.zeros(verts_all.size + 1, dtype=np.int64)
    np.cumsum(degs_all, out=seg_offsets[1:])
    entry_order = np.concatenate(
        [np.arange(seg_offsets[k], seg_offsets[k + 1]) for k in order]
    ) if verts_all.size else np.empty(0, dtype=np.int64)
    offsets = np.zeros(verts_sorted.size + 1, dtype=np.int64)
    np.cumsum(degs_sorted, out=offsets[1:])
    return LocalSlice(h.my_rank, verts_sorted, offsets, nbrs_all[entry_order])


def degree_relabel(h: CommHandle, slice_: LocalSlice) -> RelabelMap:
    """Distributed counting sort on full undirected degree.

    new id of v = (# vertices with smaller degree)
                + (# equal-degree vertices on lower ranks)
                + stable local offset in owned-id order.
    """
    degrees = slice_.degrees
    d_max = int(h.allreduce_max_u64(int(degrees.max()) if degrees.size else 0))
    hist = np.bincount(degrees, minlength=d_max + 1).astype(np.int64)
    lower = h.exscan_sum_vec(hist)
    total = h.allreduce_sum_vec(hist)
    base = np.zeros(d_max + 1, dtype=np.int64)
    np.cumsum(total[:-1], out=base[1:])

    # stable occurrence index among equal-degree owned vertices
    order = np.argsort(degrees, kind="stable")
    sorted_degs = degrees[order]
    first = np.searchsorted(sorted_degs, sorted_degs, side="left")
    occ = np.empty(degrees.size, dtype=np.int64)
    occ[order] = np.arange(degrees.size, dtype=np.int64) - first
    new_ids = base[degrees] + lower[degrees] + occ
    return RelabelMap(h.my_rank, h.p, slice_.vertices, new_ids)


def resolve_neighbor_ids(h: CommHandle, slice_: LocalSlice, rmap: RelabelMap) -> LocalSlice:
    """Translate every adjacency entry and owned vertex id old -> new by
    querying each entry's owner rank (old id mod p)."""
    p = h.p
    nbrs = slice_.neighbors
    owners = nbrs % p
    new_nbrs = np.empty_like(nbrs)

    local_sel = owners == h.my_rank
    new_nbrs[local_sel] = rmap.translate(nbrs[local_sel])

    queries = []
    positions = []
    for dest in range(p):
        if dest == h.my_rank:
            queries.append(_pack_i64(np.empty(0, dtype=np.int64)))
            positions.append(None)
            continue
        sel = owners == dest
        positions.append(sel)
        queries.append(_pack_i64(nbrs[sel]))
    incoming = h.alltoallv_bytes(queries)

    responses = []
    for src, buf in enumerate(incoming):
        (asked,) = _unpack_i64(buf, 1)
        responses.append(_pack_i64(rmap.translate(asked)))
    answered = h.alltoallv_bytes(responses)

    for src, buf in enumerate(answered):
        if src == h.my_rank:
            continue
        (translated,) = _unpack_i64(buf, 1)
        new_nbrs[positions[src]] = translated

    new_verts = rmap.translate(slice_.vertices)
    return LocalSlice(h.my_rank, new_verts, slice_.offsets, new_nbrs)


def build_2d_blocks(
    h: CommHandle,
    slice_: LocalSlice,
    grid_side: int,
    enumeration: str = "jik",
) -> RankBlocks:
    """Route every U and L entry to grid rank (row mod side, col mod side)
    as blob-encoded shards and assemble this rank's blocks.

    The task block mirrors L's nonzeros grouped by row (the ``jik``
    scheme) or U's nonzeros grouped by row (``ijk``); either way it stays
    on this rank while the operand blocks shift.
    """
    side = grid_side
    my_coord = coord_of(h.my_rank, side)
    rows = np.repeat(slice_.vertices, slice_.degrees)
    cols = slice_.neighbors
    upper = cols > rows
    u_rows, u_cols = rows[upper], cols[upper]
    l_rows, l_cols = rows[~upper], cols[~upper]  # L entry (row v, col u<v)

    u_dest = (u_rows % side) * side + u_cols % side
    l_dest = (l_rows % side) * side + l_cols % side
    outgoing = []
    for dest in range(h.p):
        dc = coord_of(dest, side)
        usel = u_dest == dest
        lsel = l_dest == dest
        ub = blob_encode(build_block(side, dc, ROW_MAJOR, u_rows[usel], u_cols[usel]))
        lb = blob_encode(build_block(side, dc, COL_MAJOR, l_cols[lsel], l_rows[lsel]))
        outgoing.append(_pack_bytes(ub, lb))
    incoming = h.alltoallv_bytes(outgoing)

    u_majors, u_minors = [], []
    l_majors, l_minors = [], []
    for buf in incoming:
        ub, lb = _unpack_bytes(buf, 2)
        ushard = blob_decode(ub)
        lshard = blob_decode(lb)
        ue = ushard.entries()
        le = lshard.entries()
        u_majors.append(ue[:, 0])
        u_minors.append(ue[:, 1])
        l_majors.append(le[:, 0])
        l_minors.append(le[:, 1])

    u_major = np.concatenate(u_majors)
    u_minor = np.concatenate(u_minors)
    l_major = np.concatenate(l_majors)  # columns j
    l_minor = np.concatenate(l_minors)  # rows k > j

    u_home = build_block(side, my_coord, ROW_MAJOR, u_major, u_minor)
    l_home = build_block(side, my_coord, COL_MAJOR, l_major, l_minor)
    if enumeration == "jik":
        # tasks are L nonzeros grouped by row: majors = rows k, minors = cols j
        task = build_block(side, my_coord, ROW_MAJOR, l_minor, l_major)
    elif enumeration == "ijk":
        task = u_home
    else:
        raise ValueError(f"unknown enumeration scheme {enumeration!r}")
    n = int(h.allreduce_max_u64(int(slice_.vertices.max()) if slice_.vertices.size else 0)) + 1
    return RankBlocks(n=n, grid_side=side, u_home=u_home, l_home=l_home, task=task)


def _pack_bytes(*bufs: bytes) -> bytes:
    parts = []
    for b in bufs:
        parts.append(np.array([len(b)], dtype="<u8").tobytes())
        parts.append(b)
    return b"".join(parts)


def _unpack_bytes(buf: bytes, count: int) -> list[bytes]:
    out = []
    pos = 0
    for _ in range(count):
        size = int(np.frombuffer(buf[pos : pos + 8], dtype="<u8")[0])
        pos += 8
        out.append(buf[pos : pos + size])
        pos += size
    if pos != len(buf):
        raise ProtocolError("trailing bytes in packed shard message")
    return out


def run_preprocess(
    h: CommHandle,
    slice_: LocalSlice,
    n: int,
    grid_side: int,
    enumeration: str = "jik",
) -> RankBlocks:
    """The full pipeline: redistribute, relabel, translate, build blocks."""
    cyclic = cyclic_redistribute(h, slice_, n)
    rmap = degree_relabel(h, cyclic)
    relabeled = resolve_neighbor_ids(h, cyclic, rmap)
    return build_2d_blocks(h, relabeled, grid_side, enumeration)
