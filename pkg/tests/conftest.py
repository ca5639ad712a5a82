"""Shared graph builders and random-block helpers."""

import itertools

import numpy as np
import pytest

from trigrid.blocks import ROW_MAJOR, DcsrBlock, GridCoord
from trigrid.graph import EdgeList, canonicalize


def complete_graph(n: int) -> EdgeList:
    return EdgeList(n, np.array(list(itertools.combinations(range(n), 2)), dtype=np.int64))


def cycle_graph(n: int) -> EdgeList:
    return EdgeList(n, np.array([(i, (i + 1) % n) for i in range(n)], dtype=np.int64))


def star_graph(leaves: int) -> EdgeList:
    return EdgeList(leaves + 1, np.array([(0, i) for i in range(1, leaves + 1)], dtype=np.int64))


def path_graph(n: int) -> EdgeList:
    return EdgeList(n, np.array([(i, i + 1) for i in range(n - 1)], dtype=np.int64))


def bipartite_graph(a: int, b: int) -> EdgeList:
    edges = [(i, a + j) for i in range(a) for j in range(b)]
    return EdgeList(a + b, np.array(edges, dtype=np.int64))


def disjoint_triangles(k: int) -> EdgeList:
    edges = []
    for t in range(k):
        base = 3 * t
        edges += [(base, base + 1), (base, base + 2), (base + 1, base + 2)]
    return EdgeList(3 * k, np.array(edges, dtype=np.int64))


def random_graph(n: int, m: int, rng: np.random.Generator) -> EdgeList:
    pairs = rng.integers(0, n, size=(m, 2))
    return canonicalize(EdgeList(n, pairs.astype(np.int64)))


def structured_suite() -> list[tuple[str, EdgeList]]:
    """The fixed verification graphs: complete, cycles, stars, bipartite,
    disjoint triangles."""
    graphs = []
    for n in range(3, 13):
        graphs.append((f"K{n}", complete_graph(n)))
    for n in (3, 4, 5, 8, 17):
        graphs.append((f"C{n}", cycle_graph(n)))
    for leaves in (3, 7, 16):
        graphs.append((f"S{leaves}", star_graph(leaves)))
    for a, b in ((2, 3), (4, 4), (3, 7)):
        graphs.append((f"K{a},{b}", bipartite_graph(a, b)))
    for k in (1, 2, 5):
        graphs.append((f"{k}xK3", disjoint_triangles(k)))
    graphs.append(("P6", path_graph(6)))
    return graphs


def random_block(rng: np.random.Generator, grid_side: int | None = None) -> DcsrBlock:
    """A structurally valid random block (majors grouped, minors sorted)."""
    side = grid_side or int(rng.integers(1, 6))
    coord = GridCoord(int(rng.integers(0, side)), int(rng.integers(0, side)))
    orientation = int(rng.integers(0, 2))
    n_major = int(rng.integers(0, 9))
    residue = coord.x if orientation == ROW_MAJOR else coord.y
    minor_residue = coord.y if orientation == ROW_MAJOR else coord.x
    majors, offsets, minors = [], [0], []
    local_pool = rng.choice(2048, size=n_major, replace=False) if n_major else []
    for lm in sorted(int(v) for v in local_pool):
        deg = int(rng.integers(1, 7))
        candidates = rng.choice(4096, size=deg, replace=False)
        row = np.unique(candidates * side + minor_residue)
        majors.append(lm)
        minors.extend(int(v) for v in row)
        offsets.append(len(minors))
    return DcsrBlock(
        side,
        coord,
        orientation,
        np.array(majors, dtype=np.int64),
        np.array(offsets, dtype=np.int64),
        np.array(minors, dtype=np.int64),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0xA11CE)
