import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_block
from trigrid.blocks import (
    HEADER_BYTES,
    ROW_MAJOR,
    DcsrBlock,
    GridCoord,
    blob_decode,
    blob_encode,
    build_block,
    empty_block,
)
from trigrid.errors import DecodeError


def test_empty_block_round_trip():
    blk = empty_block(3, GridCoord(1, 2), ROW_MAJOR)
    buf = blob_encode(blk)
    assert len(buf) == HEADER_BYTES + 8  # just the offsets sentinel
    back = blob_decode(buf)
    assert back == blk


def _blocks_equal(a: DcsrBlock, b: DcsrBlock) -> bool:
    return (
        a.grid_side == b.grid_side
        and a.coord == b.coord
        and a.orientation == b.orientation
        and np.array_equal(a.present, b.present)
        and np.array_equal(a.offsets, b.offsets)
        and np.array_equal(a.minors, b.minors)
    )


def test_buffer_length_formula():
    # 3 present majors with 7 entries total: header + (3 + 4 + 7) words
    blk = DcsrBlock(
        2,
        GridCoord(0, 1),
        ROW_MAJOR,
        np.array([0, 2, 5]),
        np.array([0, 2, 4, 7]),
        np.array([1, 3, 5, 7, 9, 11, 13]),
    )
    assert len(blob_encode(blk)) == HEADER_BYTES + (3 + 4 + 7) * 8


def test_round_trip_random(rng):
    for _ in range(200):
        blk = random_block(rng)
        assert _blocks_equal(blob_decode(blob_encode(blk)), blk)


@settings(max_examples=120, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_round_trip_property(seed):
    blk = random_block(np.random.default_rng(seed))
    back = blob_decode(blob_encode(blk))
    assert _blocks_equal(back, blk)


def test_decode_truncated(rng):
    buf = blob_encode(random_block(rng))
    with pytest.raises(DecodeError):
        blob_decode(buf[: len(buf) - 3])
    with pytest.raises(DecodeError):
        blob_decode(buf[: HEADER_BYTES - 1])


def test_decode_bad_magic(rng):
    buf = bytearray(blob_encode(random_block(rng)))
    buf[0] ^= 0xFF
    with pytest.raises(DecodeError):
        blob_decode(bytes(buf))


def test_decode_bad_orientation():
    blk = empty_block(2, GridCoord(0, 0), ROW_MAJOR)
    buf = bytearray(blob_encode(blk))
    buf[4 * 8] = 9  # orientation word
    with pytest.raises(DecodeError):
        blob_decode(bytes(buf))


def test_build_block_groups_and_sorts():
    # entries arriving out of order for a 2x2 grid cell (0, 1)
    majors = np.array([4, 0, 4, 2])
    minors = np.array([7, 5, 5, 3])
    blk = build_block(2, GridCoord(0, 1), ROW_MAJOR, majors, minors)
    assert blk.present.tolist() == [0, 1, 2]  # local = global // 2
    assert blk.offsets.tolist() == [0, 1, 2, 4]
    assert blk.minors.tolist() == [5, 3, 5, 7]
    blk.validate(minors_above_major=True)


def test_validate_catches_residue_violation():
    blk = DcsrBlock(
        2,
        GridCoord(0, 1),
        ROW_MAJOR,
        np.array([0]),
        np.array([0, 1]),
        np.array([4]),  # 4 % 2 == 0, but minor residue must be 1
    )
    with pytest.raises(ValueError):
        blk.validate()


def test_validate_catches_empty_major():
    blk = DcsrBlock(
        2,
        GridCoord(0, 1),
        ROW_MAJOR,
        np.array([0, 1]),
        np.array([0, 1, 1]),
        np.array([3]),
    )
    with pytest.raises(ValueError):
        blk.validate()


def test_entries_round_trip(rng):
    blk = random_block(rng, grid_side=3)
    pairs = blk.entries()
    rebuilt = build_block(3, blk.coord, blk.orientation, pairs[:, 0], pairs[:, 1])
    assert _blocks_equal(rebuilt, blk)
