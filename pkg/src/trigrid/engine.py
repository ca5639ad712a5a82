"""The triangle counting kernel: Cannon-style operand alignment and
shifts, with map-based block intersection.

Per shift, each rank hashes the U-operand row matching a task row once
and reuses it for every task in that row, looking candidate vertices up
from the L-operand column traversed backwards so the scan can stop as
soon as candidates drop below the smallest hashed id.

Hashing works on local indices (global id // grid_side): within one
operand block all minors share a residue class, so local indices are
dense and a row whose local span fits the table can be indexed directly,
probe-free. Lookup slot inspections are counted as probes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from .blocks import DcsrBlock, blob_decode, blob_encode
from .errors import InternalInvariantError
from .metrics import RankRecorder, ShiftRecord
from .preprocess import RankBlocks
from .transport import CommHandle, coord_of, grid_side_for, rank_of

_HASH_K = np.int64(-7046029254386353131)  # golden-ratio multiplier, wraps mod 2^64


@dataclass(frozen=True)
class EngineOptions:
    """Optimization toggles. Every combination yields identical counts;
    only probe/task/scan metrics differ."""

    direct_hash: bool = True
    dcsr: bool = True
    prune: bool = True
    enumeration: str = "jik"  # "jik" or "ijk"
    scratch_factor: int = 2  # capacity multiple of the longest hashed row

    def __post_init__(self):
        if self.enumeration not in ("jik", "ijk"):
            raise ValueError(f"unknown enumeration scheme {self.enumeration!r}")
        if self.scratch_factor < 2:
            raise ValueError("scratch_factor must be >= 2 to keep load factor <= 0.5")

    def as_dict(self) -> dict:
        return {
            "direct_hash": self.direct_hash,
            "dcsr": self.dcsr,
            "prune": self.prune,
            "enumeration": self.enumeration,
            "scratch_factor": self.scratch_factor,
        }


def cannon_operand_class(x: int, y: int, z: int, grid_side: int) -> int:
    """The operand residue class rank (x, y) works on at shift z."""
    return (x + y + z) % grid_side


# ---------------------------------------------------------------------------
# hash scratch


@njit(cache=True, nogil=True)
def _slot_of(key, mask, shift):
    return ((key * _HASH_K) >> shift) & mask


@njit(cache=True, nogil=True)
def _scratch_insert(keys, gens, gen, mask, shift, key, direct):
    if direct:
        slot = key & mask
    else:
        slot = _slot_of(key, mask, shift)
        while gens[slot] == gen:
            slot = (slot + 1) & mask
    keys[slot] = key
    gens[slot] = gen


@njit(cache=True, nogil=True)
def _scratch_lookup(keys, gens, gen, mask, shift, key, direct):
    """Returns (hit, slot inspections)."""
    probes = 1
    if direct:
        slot = key & mask
        return (gens[slot] == gen and keys[slot] == key), probes
    slot = _slot_of(key, mask, shift)
    while True:
        if gens[slot] != gen:
            return False, probes
        if keys[slot] == key:
            return True, probes
        slot = (slot + 1) & mask
        probes += 1


class HashScratch:
    """Reusable lookup table with O(1) generation-counter reset.

    Direct-index mode (no probing) is chosen per hashed row when the
    row's local-index span fits the capacity, which makes the bitwise-AND
    slot assignment collision-free by construction.
    """

    def __init__(self, capacity: int):
        if capacity < 2 or capacity & (capacity - 1):
            raise ValueError(f"capacity must be a power of two >= 2, got {capacity}")
        self.capacity = capacity
        self.mask = np.int64(capacity - 1)
        self.shift = np.int64(64 - capacity.bit_length() + 1)
        self.keys = np.zeros(capacity, dtype=np.int64)
        self.gens = np.zeros(capacity, dtype=np.int64)
        self.generation = 0
        self.mode = "open"
        self.min_key = np.int64(np.iinfo(np.int64).max)

    def reset(self) -> None:
        self.generation += 1

    def build(self, local_keys: np.ndarray, direct_allowed: bool = True) -> None:
        """Load a sorted ascending key set, replacing previous contents."""
        self.reset()
        keys = np.asarray(local_keys, dtype=np.int64)
        if keys.size == 0:
            self.mode = "open"
            self.min_key = np.int64(np.iinfo(np.int64).max)
            return
        span = int(keys[-1]) - int(keys[0]) + 1
        direct = bool(direct_allowed and span <= self.capacity)
        self.mode = "direct" if direct else "open"
        self.min_key = np.int64(keys[0])
        gen = np.int64(self.generation)
        for key in keys:
            _scratch_insert(self.keys, self.gens, gen, self.mask, self.shift, np.int64(key), direct)

    def lookup(self, key: int) -> tuple[bool, int]:
        return _scratch_lookup(
            self.keys,
            self.gens,
            np.int64(self.generation),
            self.mask,
            self.shift,
            np.int64(key),
            self.mode == "direct",
        )

    def stored_keys(self) -> np.ndarray:
        return self.keys[self.gens == self.generation]


def scratch_capacity_for(block: DcsrBlock, factor: int = 2) -> int:
    """Next power of two >= factor * longest row of the hashed operand."""
    longest = int(np.diff(block.offsets).max()) if block.present.size else 0
    need = max(2, factor * longest)
    return 1 << (need - 1).bit_length()


# ---------------------------------------------------------------------------
# counting kernel


@njit(cache=True, nogil=True)
def _bsearch(arr, target):
    lo = 0
    hi = arr.size
    while lo < hi:
        mid = (lo + hi) >> 1
        v = arr[mid]
        if v < target:
            lo = mid + 1
        elif v > target:
            hi = mid
        else:
            return mid
    return -1


@njit(cache=True, nogil=True)
def _count_block_kernel(
    t_present,
    t_offsets,
    t_minors,
    u_present,
    u_offsets,
    u_minors,
    l_present,
    l_offsets,
    l_minors,
    grid_side,
    keys,
    gens,
    gen0,
    mask,
    shift,
    direct_hash_on,
    dcsr_on,
    prune_on,
    n_local_majors,
):
    count = np.int64(0)
    probes = np.int64(0)
    tasks = np.int64(0)
    scanned = np.int64(0)
    gen = gen0
    capacity = mask + 1

    limit = t_present.size if dcsr_on else n_local_majors
    for it in range(limit):
        scanned += 1
        if dcsr_on:
            ti = it
        else:
            ti = _bsearch(t_present, it)
            if ti < 0:
                continue
        jl = t_present[ti]
        ui = _bsearch(u_present, jl)
        if ui < 0:
            continue
        us = u_offsets[ui]
        ue = u_offsets[ui + 1]
        lo_local = u_minors[us] // grid_side
        hi_local = u_minors[ue - 1] // grid_side
        direct = direct_hash_on and (hi_local - lo_local + 1) <= capacity
        gen += 1
        for e in range(us, ue):
            _scratch_insert(keys, gens, gen, mask, shift, u_minors[e] // grid_side, direct)
        min_key = lo_local

        for tp in range(t_offsets[ti], t_offsets[ti + 1]):
            il = t_minors[tp] // grid_side
            li = _bsearch(l_present, il)
            if li < 0:
                continue
            tasks += 1
            ls = l_offsets[li]
            for c in range(l_offsets[li + 1] - 1, ls - 1, -1):
                key = l_minors[c] // grid_side
                if prune_on and key < min_key:
                    break
                hit, cost = _scratch_lookup(keys, gens, gen, mask, shift, key, direct)
                probes += cost
                if hit:
                    count += 1
    return count, probes, tasks, scanned, gen


@dataclass
class BlockCounts:
    count: int
    probes: int
    tasks: int
    majors_scanned: int


def count_block(
    task: DcsrBlock,
    u_blk: DcsrBlock,
    l_blk: DcsrBlock,
    scratch: HashScratch,
    options: EngineOptions = EngineOptions(),
    n_local_majors: int | None = None,
) -> BlockCounts:
    """Count the triangles closed by this rank's tasks against one aligned
    (U, L) operand block pair."""
    if u_blk.coord.y != l_blk.coord.x:
        raise InternalInvariantError(
            f"operand misalignment: U column class {u_blk.coord.y} != "
            f"L row class {l_blk.coord.x}"
        )
    if n_local_majors is None:
        n_local_majors = int(task.present[-1]) + 1 if task.present.size else 0
    gen0 = scratch.generation
    count, probes, tasks, scanned, gen = _count_block_kernel(
        task.present,
        task.offsets,
        task.minors,
        u_blk.present,
        u_blk.offsets,
        u_blk.minors,
        l_blk.present,
        l_blk.offsets,
        l_blk.minors,
        np.int64(task.grid_side),
        scratch.keys,
        scratch.gens,
        np.int64(gen0),
        scratch.mask,
        scratch.shift,
        options.direct_hash,
        options.dcsr,
        options.prune,
        np.int64(n_local_majors),
    )
    scratch.generation = int(gen)
    return BlockCounts(int(count), int(probes), int(tasks), int(scanned))


# ---------------------------------------------------------------------------
# Cannon schedule


@dataclass
class ShiftState:
    z: int
    u_block: DcsrBlock
    l_block: DcsrBlock
    local_count: int = 0


def _exchange(h: CommHandle, block: DcsrBlock, dest: int, src: int) -> DcsrBlock:
    if dest == h.my_rank:
        return block
    h.send_bytes(dest, blob_encode(block))
    return blob_decode(h.recv_bytes(src))


def initial_align(h: CommHandle, u_block: DcsrBlock, l_block: DcsrBlock) -> tuple[DcsrBlock, DcsrBlock]:
    """Cannon alignment: after it, rank (x, y) holds U_{x,(x+y)%side} and
    L_{(x+y)%side,y}, the z=0 operand classes."""
    side = grid_side_for(h.p)
    x, y = coord_of(h.my_rank, side)
    u2 = _exchange(
        h,
        u_block,
        rank_of((x, (y - x) % side), side),
        rank_of((x, (y + x) % side), side),
    )
    l2 = _exchange(
        h,
        l_block,
        rank_of(((x - y) % side, y), side),
        rank_of(((x + y) % side, y), side),
    )
    return u2, l2


def shift_step(h: CommHandle, state: ShiftState) -> ShiftState:
    """Send the held U block left and the held L block up; receive the
    neighbors' blocks; advance z. Blocks travel as single blob buffers."""
    side = grid_side_for(h.p)
    x, y = coord_of(h.my_rank, side)
    u2 = _exchange(
        h,
        state.u_block,
        rank_of((x, (y - 1) % side), side),
        rank_of((x, (y + 1) % side), side),
    )
    l2 = _exchange(
        h,
        state.l_block,
        rank_of(((x - 1) % side, y), side),
        rank_of(((x + 1) % side, y), side),
    )
    return ShiftState(state.z + 1, u2, l2, state.local_count)


def count_triangles_distributed(
    h: CommHandle,
    blocks: RankBlocks,
    options: EngineOptions = EngineOptions(),
    recorder: RankRecorder | None = None,
) -> int:
    """Align, run the sqrt(p) count/shift rounds, and reduce the global
    triangle total (returned on every rank)."""
    side = blocks.grid_side
    if side != grid_side_for(h.p):
        raise InternalInvariantError("blocks were built for a different grid")
    x, y = coord_of(h.my_rank, side)
    n_local = (blocks.n + side - 1) // side

    u_blk, l_blk = initial_align(h, blocks.u_home, blocks.l_home)
    state = ShiftState(0, u_blk, l_blk)
    for z in range(side):
        w = cannon_operand_class(x, y, z, side)
        if state.u_block.coord != (x, w) or state.l_block.coord != (w, y):
            raise InternalInvariantError(
                f"rank ({x},{y}) shift {z}: holds U{tuple(state.u_block.coord)} "
                f"L{tuple(state.l_block.coord)}, expected class {w}"
            )
        held_u = (state.u_block.coord.x, state.u_block.coord.y)
        held_l = (state.l_block.coord.x, state.l_block.coord.y)
        scratch = HashScratch(scratch_capacity_for(state.u_block, options.scratch_factor))
        bytes_before = sum(h.bytes_sent.values())
        t0 = time.perf_counter()
        result = count_block(blocks.task, state.u_block, state.l_block, scratch, options, n_local)
        t1 = time.perf_counter()
        state.local_count += result.count
        if z < side - 1:
            state = shift_step(h, state)
        t2 = time.perf_counter()
        if recorder is not None:
            recorder.add_shift(
                ShiftRecord(
                    z=z,
                    operand_class=w,
                    u_coord=held_u,
                    l_coord=held_l,
                    count=result.count,
                    probes=result.probes,
                    tasks=result.tasks,
                    majors_scanned=result.majors_scanned,
                    compute_seconds=t1 - t0,
                    wall_seconds=t2 - t0,
                    bytes_sent=sum(h.bytes_sent.values()) - bytes_before,
                )
            )
    return h.allreduce_sum_u64(state.local_count)
