"""Doubly-sparse blocks of the triangular matrices, 2D-cyclic addressing,
and the single-buffer byte encoding the blocks travel in during shifts.

A block stores only its non-empty major indices (rows for row-major U
blocks, columns for column-major L blocks). Major indices are local
(``global // grid_side``); minors are global vertex ids sorted ascending
within each major.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DecodeError

ROW_MAJOR = 0
COL_MAJOR = 1

_BLOB_MAGIC = 0x31525343444752  # b"RGDCSR1" little-endian, version 1
_HEADER_WORDS = 7
_WORD = 8
HEADER_BYTES = _HEADER_WORDS * _WORD


class GridCoord(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True, eq=False)
class DcsrBlock:
    """One rank's share of U, L, or the task matrix.

    For a row-major block at coord (x, w): stored rows satisfy
    ``row % grid_side == x`` and columns ``col % grid_side == w``.
    Column-major blocks swap the roles (majors are columns). The coord is
    the block's home position and rides along when the block is shifted.
    """

    grid_side: int
    coord: GridCoord
    orientation: int  # ROW_MAJOR or COL_MAJOR
    present: np.ndarray  # local major indices, strictly increasing, int64
    offsets: np.ndarray  # length len(present)+1, int64
    minors: np.ndarray  # global ids, sorted ascending per major, int64

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DcsrBlock)
            and self.grid_side == other.grid_side
            and self.coord == other.coord
            and self.orientation == other.orientation
            and bool(np.array_equal(self.present, other.present))
            and bool(np.array_equal(self.offsets, other.offsets))
            and bool(np.array_equal(self.minors, other.minors))
        )

    def __post_init__(self):
        object.__setattr__(self, "coord", GridCoord(*self.coord))
        object.__setattr__(self, "present", np.asarray(self.present, dtype=np.int64))
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=np.int64))
        object.__setattr__(self, "minors", np.asarray(self.minors, dtype=np.int64))

    @property
    def nnz(self) -> int:
        return int(self.minors.size)

    @property
    def major_residue(self) -> int:
        """Residue class (mod grid_side) of every stored global major."""
        return self.coord.x if self.orientation == ROW_MAJOR else self.coord.y

    @property
    def minor_residue(self) -> int:
        return self.coord.y if self.orientation == ROW_MAJOR else self.coord.x

    def global_majors(self) -> np.ndarray:
        return self.present * self.grid_side + self.major_residue

    def entries(self) -> np.ndarray:
        """All (global major, global minor) pairs, one row per entry."""
        majors = np.repeat(self.global_majors(), np.diff(self.offsets))
        return np.stack([majors, self.minors], axis=1)

    def validate(self, minors_above_major: bool | None = None) -> None:
        """Structural and residue checks; raises on violation.

        ``minors_above_major`` asserts the triangular direction: True for
        U operand and L operand blocks (every stored minor id exceeds its
        major id), False for the L-based task block (minors are the
        smaller endpoints), None to skip the check.
        """
        side = self.grid_side
        if self.offsets.size != self.present.size + 1 or self.offsets[0] != 0:
            raise ValueError("offsets array inconsistent with present majors")
        if self.offsets[-1] != self.minors.size:
            raise ValueError("offsets do not cover the minors array")
        if np.any(np.diff(self.present) <= 0):
            raise ValueError("present majors not strictly increasing")
        if np.any(np.diff(self.offsets) < 1):
            raise ValueError("a present major has an empty list")
        if self.minors.size and np.any(self.minors % side != self.minor_residue):
            raise ValueError("minor residue violated")
        for k in range(self.present.size):
            seg = self.minors[self.offsets[k] : self.offsets[k + 1]]
            if np.any(np.diff(seg) <= 0):
                raise ValueError("minors not strictly increasing within a major")
        if minors_above_major is not None:
            majors = np.repeat(self.global_majors(), np.diff(self.offsets))
            if minors_above_major and np.any(self.minors <= majors):
                raise ValueError("triangularity violated: minor <= major")
            if not minors_above_major and np.any(self.minors >= majors):
                raise ValueError("triangularity violated: minor >= major")


def empty_block(grid_side: int, coord: GridCoord, orientation: int) -> DcsrBlock:
    z = np.empty(0, dtype=np.int64)
    return DcsrBlock(grid_side, coord, orientation, z, np.zeros(1, dtype=np.int64), z)


def build_block(
    grid_side: int,
    coord: GridCoord,
    orientation: int,
    majors: np.ndarray,
    minors: np.ndarray,
) -> DcsrBlock:
    """Assemble a block from parallel (global major, global minor) arrays.

    Entries may arrive in any order; they are grouped by major and sorted.
    """
    majors = np.asarray(majors, dtype=np.int64)
    minors = np.asarray(minors, dtype=np.int64)
    if majors.size == 0:
        return empty_block(grid_side, coord, orientation)
    order = np.lexsort((minors, majors))
    majors, minors = majors[order], minors[order]
    uniq, counts = np.unique(majors, return_counts=True)
    offsets = np.zeros(uniq.size + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return DcsrBlock(grid_side, coord, orientation, uniq // grid_side, offsets, minors)


def blob_encode(block: DcsrBlock) -> bytes:
    """Pack a block into one contiguous little-endian buffer: fixed-width
    header, then present / offsets / minors arrays back-to-back."""
    header = np.array(
        [
            _BLOB_MAGIC,
            block.grid_side,
            block.coord.x,
            block.coord.y,
            block.orientation,
            block.present.size,
            block.minors.size,
        ],
        dtype="<u8",
    )
    return b"".join(
        [
            header.tobytes(),
            block.present.astype("<u8").tobytes(),
            block.offsets.astype("<u8").tobytes(),
            block.minors.astype("<u8").tobytes(),
        ]
    )


def blob_decode(buf: bytes) -> DcsrBlock:
    if len(buf) < HEADER_BYTES:
        raise DecodeError(f"buffer too short for header: {len(buf)} bytes")
    header = np.frombuffer(buf[:HEADER_BYTES], dtype="<u8").astype(np.int64)
    if header[0] != _BLOB_MAGIC:
        raise DecodeError(f"bad blob magic {header[0]:#x}")
    grid_side, cx, cy, orientation, n_present, n_entries = (int(v) for v in header[1:])
    if orientation not in (ROW_MAJOR, COL_MAJOR):
        raise DecodeError(f"bad orientation {orientation}")
    expected = HEADER_BYTES + (2 * n_present + 1 + n_entries) * _WORD
    if len(buf) != expected:
        raise DecodeError(f"buffer length {len(buf)}, expected {expected}")
    body = np.frombuffer(buf[HEADER_BYTES:], dtype="<u8").astype(np.int64)
    present = body[:n_present]
    offsets = body[n_present : 2 * n_present + 1]
    minors = body[2 * n_present + 1 :]
    if offsets[0] != 0 or offsets[-1] != n_entries or np.any(np.diff(offsets) < 0):
        raise DecodeError("corrupt offsets array")
    return DcsrBlock(grid_side, GridCoord(cx, cy), orientation, present, offsets, minors)
