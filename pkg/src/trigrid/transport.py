"""In-process SPMD transport: p rank workers on threads, FIFO byte
channels between every pair, and collectives composed from point-to-point
sends.

The contract (not the thread mechanism) is normative: an MPI-backed
handle exposing the same operations could be substituted. All payloads
are raw bytes; typed traffic goes through block blob encoding. The
transport counts every sent byte per phase so communication volume can
be reported without wall clocks.
"""

from __future__ import annotations

import functools
import math
import queue
import struct
import threading
import time
from collections import defaultdict
from typing import Callable, Sequence

import numpy as np

from .blocks import GridCoord
from .errors import ConfigError, ProtocolError, TransportAborted

_U64_MAX = (1 << 64) - 1
_POLL_SECONDS = 0.05


def grid_side_for(p: int) -> int:
    """sqrt(p) when p is a perfect square, else a configuration error."""
    side = math.isqrt(p)
    if side * side != p:
        raise ConfigError(f"rank count {p} is not a perfect square")
    return side


def coord_of(rank: int, grid_side: int) -> GridCoord:
    return GridCoord(rank // grid_side, rank % grid_side)


def rank_of(coord: GridCoord, grid_side: int) -> int:
    return coord[0] * grid_side + coord[1]


class _Fabric:
    """Shared state connecting the rank workers of one spmd_run."""

    def __init__(self, p: int):
        self.p = p
        self.queues = {
            (s, d): queue.SimpleQueue() for s in range(p) for d in range(p) if s != d
        }
        self.abort = threading.Event()
        self.failures: dict[int, BaseException] = {}
        self.finished = [False] * p

    def fail(self, rank: int, exc: BaseException) -> None:
        self.failures[rank] = exc
        self.abort.set()


def _timed(method):
    """Accumulate wall time spent in the outermost transport call into
    the handle's per-phase communication clock."""

    @functools.wraps(method)
    def wrapper(self, *args, **kwargs):
        if self._timer_depth:
            return method(self, *args, **kwargs)
        self._timer_depth = 1
        t0 = time.perf_counter()
        try:
            return method(self, *args, **kwargs)
        finally:
            self._timer_depth = 0
            self.comm_seconds[self.phase] += time.perf_counter() - t0

    return wrapper


class CommHandle:
    """One rank's endpoint: point-to-point sends plus the collectives the
    preprocessing and counting phases need.

    Not shareable across threads within a rank; exactly one handle exists
    per rank per run.
    """

    def __init__(self, fabric: _Fabric, rank: int):
        self._fabric = fabric
        self.my_rank = rank
        self.p = fabric.p
        self.phase = "default"
        self.bytes_sent = defaultdict(int)  # phase -> payload bytes
        self.messages_sent = defaultdict(int)
        self.comm_seconds = defaultdict(float)  # phase -> seconds inside transport
        self._timer_depth = 0

    # -- point to point ----------------------------------------------------

    @_timed
    def send_bytes(self, dest: int, payload: bytes) -> None:
        if not 0 <= dest < self.p:
            raise ProtocolError(f"rank {self.my_rank}: bad destination {dest}")
        if dest == self.my_rank:
            raise ProtocolError(f"rank {self.my_rank}: self-send is not allowed")
        self.bytes_sent[self.phase] += len(payload)
        self.messages_sent[self.phase] += 1
        self._fabric.queues[(self.my_rank, dest)].put(payload)

    @_timed
    def recv_bytes(self, src: int) -> bytes:
        if not 0 <= src < self.p or src == self.my_rank:
            raise ProtocolError(f"rank {self.my_rank}: bad source {src}")
        q = self._fabric.queues[(src, self.my_rank)]
        while True:
            try:
                return q.get(timeout=_POLL_SECONDS)
            except queue.Empty:
                if self._fabric.abort.is_set():
                    raise TransportAborted(
                        f"rank {self.my_rank}: peer failure while receiving from {src}"
                    ) from None
                if self._fabric.finished[src]:
                    # the peer ran to completion; nothing more can arrive
                    try:
                        return q.get_nowait()
                    except queue.Empty:
                        raise ProtocolError(
                            f"rank {self.my_rank}: waiting on rank {src}, "
                            "which finished without sending"
                        ) from None

    # -- collectives (all built from point-to-point) -----------------------

    def _gather_to_zero(self, payload: bytes) -> list[bytes] | None:
        if self.my_rank == 0:
            parts = [payload]
            for r in range(1, self.p):
                parts.append(self.recv_bytes(r))
            return parts
        self.send_bytes(0, payload)
        return None

    def _bcast_from_zero(self, payload: bytes | None) -> bytes:
        if self.my_rank == 0:
            assert payload is not None
            for r in range(1, self.p):
                self.send_bytes(r, payload)
            return payload
        return self.recv_bytes(0)

    @_timed
    def allreduce_sum_u64(self, local: int) -> int:
        return self._allreduce_u64(local, "sum")

    @_timed
    def allreduce_max_u64(self, local: int) -> int:
        return self._allreduce_u64(local, "max")

    def _allreduce_u64(self, local: int, op: str) -> int:
        if not 0 <= local <= _U64_MAX:
            raise OverflowError(f"local value {local} outside u64 range")
        parts = self._gather_to_zero(struct.pack("<Q", local))
        if self.my_rank == 0:
            values = [struct.unpack("<Q", b)[0] for b in parts]
            result = sum(values) if op == "sum" else max(values)
            if result > _U64_MAX:
                raise OverflowError(f"allreduce sum {result} exceeds u64 range")
            out = struct.pack("<Q", result)
        else:
            out = None
        return struct.unpack("<Q", self._bcast_from_zero(out))[0]

    @_timed
    def allreduce_sum_vec(self, local: np.ndarray) -> np.ndarray:
        """Elementwise u64 vector sum delivered to every rank."""
        parts = self._gather_to_zero(self._pack_vec(local))
        if self.my_rank == 0:
            vecs = [self._unpack_vec(b, len(local)) for b in parts]
            out = self._pack_vec(np.sum(vecs, axis=0, dtype=np.uint64))
        else:
            out = None
        return self._unpack_vec(self._bcast_from_zero(out), len(local))

    @_timed
    def exscan_sum_vec(self, local: np.ndarray) -> np.ndarray:
        """Rank r receives the elementwise sum of the vectors supplied by
        ranks 0..r-1 (zeros on rank 0)."""
        parts = self._gather_to_zero(self._pack_vec(local))
        if self.my_rank == 0:
            vecs = [self._unpack_vec(b, len(local)) for b in parts]
            running = np.zeros(len(local), dtype=np.uint64)
            for r in range(1, self.p):
                running = running + vecs[r - 1]
                self.send_bytes(r, self._pack_vec(running))
            return np.zeros(len(local), dtype=np.int64)
        return self._unpack_vec(self.recv_bytes(0), len(local))

    @_timed
    def alltoallv_bytes(self, outgoing: Sequence[bytes]) -> list[bytes]:
        """Personalized exchange: incoming[j] here equals outgoing[me] on
        rank j. Destinations are staggered (me + step) mod p to avoid
        hot-spotting a single receiver."""
        if len(outgoing) != self.p:
            raise ProtocolError(
                f"rank {self.my_rank}: alltoallv needs {self.p} buffers, got {len(outgoing)}"
            )
        incoming: list[bytes | None] = [None] * self.p
        incoming[self.my_rank] = outgoing[self.my_rank]
        for step in range(1, self.p):
            self.send_bytes((self.my_rank + step) % self.p, outgoing[(self.my_rank + step) % self.p])
        for step in range(1, self.p):
            src = (self.my_rank - step) % self.p
            incoming[src] = self.recv_bytes(src)
        return incoming  # type: ignore[return-value]

    @_timed
    def barrier(self) -> None:
        self.allreduce_sum_u64(0)

    @staticmethod
    def _pack_vec(vec: np.ndarray) -> bytes:
        return np.asarray(vec, dtype=np.uint64).astype("<u8").tobytes()

    def _unpack_vec(self, buf: bytes, expected_len: int) -> np.ndarray:
        vec = np.frombuffer(buf, dtype="<u8").astype(np.int64)
        if vec.size != expected_len:
            raise ProtocolError(
                f"rank {self.my_rank}: vector length mismatch "
                f"({vec.size} received, {expected_len} supplied locally)"
            )
        return vec


def spmd_run(p: int, program: Callable[[CommHandle], object], require_grid: bool = False) -> list:
    """Run ``program`` on p logical ranks to completion and collect each
    rank's return value, ordered by rank.

    Ranks execute as threads inside this process. A failure on any rank
    aborts the others' pending receives; the lowest failing rank's
    exception is re-raised. Unconsumed messages at shutdown are a protocol
    error.
    """
    if p < 1:
        raise ConfigError(f"rank count must be >= 1, got {p}")
    if require_grid:
        grid_side_for(p)
    fabric = _Fabric(p)
    results: list = [None] * p

    def worker(rank: int) -> None:
        handle = CommHandle(fabric, rank)
        try:
            results[rank] = program(handle)
        except BaseException as exc:  # noqa: BLE001 - must abort peers on any failure
            fabric.fail(rank, exc)
        finally:
            fabric.finished[rank] = True

    threads = [threading.Thread(target=worker, args=(r,), name=f"rank-{r}") for r in range(p)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    if fabric.failures:
        first_rank = min(fabric.failures)
        primary = fabric.failures[first_rank]
        if isinstance(primary, TransportAborted):
            # Prefer the root cause over a secondary abort.
            for r in sorted(fabric.failures):
                if not isinstance(fabric.failures[r], TransportAborted):
                    primary = fabric.failures[r]
                    break
        raise primary

    stranded = [(s, d) for (s, d), q in fabric.queues.items() if not q.empty()]
    if stranded:
        raise ProtocolError(f"unmatched messages at shutdown on channels {sorted(stranded)}")
    return results
