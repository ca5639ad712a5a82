import numpy as np
import pytest

from conftest import complete_graph, cycle_graph, random_graph, star_graph
from trigrid.blocks import COL_MAJOR, ROW_MAJOR
from trigrid.driver import block_slices
from trigrid.errors import MalformedInputError, ProtocolError
from trigrid.graph import EdgeList, canonicalize, to_csr
from trigrid.preprocess import (
    LocalSlice,
    build_2d_blocks,
    cyclic_redistribute,
    degree_relabel,
    resolve_neighbor_ids,
    run_preprocess,
)
from trigrid.rmat import RmatParams, generate
from trigrid.transport import grid_side_for, spmd_run


def stage_runner(graph, p, stage, enumeration="jik"):
    """Run the preprocessing pipeline up to a named stage on p ranks."""
    canonical = canonicalize(graph)
    slices = block_slices(canonical, p)

    def program(h):
        cyc = cyclic_redistribute(h, slices[h.my_rank], canonical.n)
        if stage == "cyclic":
            return cyc
        rmap = degree_relabel(h, cyc)
        if stage == "relabel":
            return cyc, rmap
        relabeled = resolve_neighbor_ids(h, cyc, rmap)
        if stage == "resolve":
            return relabeled, rmap
        blocks = build_2d_blocks(h, relabeled, grid_side_for(p), enumeration)
        return blocks, rmap

    return spmd_run(p, program)


class TestCyclicRedistribute:
    def test_six_vertices_two_ranks(self):
        g = cycle_graph(6)
        out = stage_runner(g, 2, "cyclic")
        assert out[0].vertices.tolist() == [0, 2, 4]
        assert out[1].vertices.tolist() == [1, 3, 5]

    def test_single_rank_identity(self):
        g = cycle_graph(5)
        out = stage_runner(g, 1, "cyclic")
        csr = to_csr(canonicalize(g))
        assert out[0].vertices.tolist() == list(range(5))
        assert np.array_equal(out[0].neighbors, csr.neighbors)

    def test_adjacency_preserved(self, rng):
        g = random_graph(40, 200, rng)
        csr = to_csr(g)
        out = stage_runner(g, 4, "cyclic")
        for sl in out:
            for k, v in enumerate(sl.vertices):
                assert v % 4 == sl.owner
                assert np.array_equal(sl.adjacency(k), csr.adjacency(int(v)))

    def test_star_entry_spread(self):
        g = star_graph(40)  # center 0, d_max = 40
        out = stage_runner(g, 4, "cyclic")
        entry_counts = [sl.neighbors.size for sl in out]
        assert max(entry_counts) - min(entry_counts) <= 40

    def test_gap_detected(self):
        # two ranks, vertex 2 missing from both slices
        def program(h):
            if h.my_rank == 0:
                sl = LocalSlice(0, np.array([0, 1]), np.array([0, 0, 0]), np.empty(0, dtype=np.int64))
            else:
                sl = LocalSlice(1, np.array([3]), np.array([0, 0]), np.empty(0, dtype=np.int64))
            return cyclic_redistribute(h, sl, 4)

        with pytest.raises(MalformedInputError):
            spmd_run(2, program)


class TestDegreeRelabel:
    def test_stable_counting_sort(self):
        # degrees by vertex: [2, 1, 1, 2]
        g = EdgeList(4, np.array([[0, 1], [0, 3], [2, 3]]))
        _, rmap = stage_runner(g, 1, "relabel")[0]
        assert rmap.new_ids.tolist() == [2, 0, 1, 3]

    def test_regular_graph_rank_order(self):
        g = cycle_graph(6)  # all degrees 2
        results = stage_runner(g, 2, "relabel")
        _, rmap0 = results[0]
        _, rmap1 = results[1]
        assert rmap0.old_ids.tolist() == [0, 2, 4]
        assert rmap0.new_ids.tolist() == [0, 1, 2]
        assert rmap1.new_ids.tolist() == [3, 4, 5]

    def test_bijection_and_monotone_degrees(self):
        g = generate(RmatParams(scale=10, edge_factor=8, seed=9))
        results = stage_runner(g, 4, "relabel")
        new_by_old = np.full(g.n, -1, dtype=np.int64)
        deg_by_new = np.zeros(g.n, dtype=np.int64)
        for cyc, rmap in results:
            new_by_old[rmap.old_ids] = rmap.new_ids
            deg_by_new[rmap.new_ids] = cyc.degrees
        assert np.array_equal(np.sort(new_by_old), np.arange(g.n))
        assert np.all(np.diff(deg_by_new) >= 0)


class TestResolveNeighborIds:
    def test_single_rank_local(self):
        g = cycle_graph(4)  # regular: relabel is identity-ordered by owner
        relabeled, rmap = stage_runner(g, 1, "resolve")[0]
        assert np.array_equal(relabeled.vertices, rmap.new_ids)

    def test_two_rank_edge(self):
        # one edge (0, 1); degree relabel maps 0 -> 0 (rank 0), 1 -> 1
        g = EdgeList(2, np.array([[0, 1]]))
        results = stage_runner(g, 2, "resolve")
        relabeled0, _ = results[0]
        assert relabeled0.vertices.tolist() == [0]
        assert relabeled0.neighbors.tolist() == [1]

    def test_translation_consistent(self, rng):
        g = random_graph(30, 150, rng)
        results = stage_runner(g, 4, "resolve")
        new_by_old = np.full(g.n, -1, dtype=np.int64)
        for _, rmap in results:
            new_by_old[rmap.old_ids] = rmap.new_ids
        csr = to_csr(g)
        for relabeled, rmap in results:
            for k, old in enumerate(rmap.old_ids):
                expected = np.sort(new_by_old[csr.adjacency(int(old))])
                assert np.array_equal(np.sort(relabeled.adjacency(k)), expected)

    def test_query_volume_equals_remote_entries(self, rng):
        """Each adjacency entry with a remote owner is one query id on the
        wire, with no deduplication."""
        g = random_graph(24, 120, rng)
        p = 4
        canonical = canonicalize(g)
        slices = block_slices(canonical, p)

        def program(h):
            cyc = cyclic_redistribute(h, slices[h.my_rank], canonical.n)
            rmap = degree_relabel(h, cyc)
            h.phase = "resolve"
            resolve_neighbor_ids(h, cyc, rmap)
            remote_entries = int(np.sum(cyc.neighbors % p != h.my_rank))
            return h.bytes_sent["resolve"], remote_entries

        results = spmd_run(p, program)
        total_sent = sum(sent for sent, _ in results)
        total_remote = sum(remote for _, remote in results)
        # one query id and one response id per remote entry (8 bytes each,
        # no dedup), plus a length prefix per wired buffer: p-1 buffers per
        # rank per direction
        assert total_sent == 2 * (8 * total_remote + 8 * p * (p - 1))

    def test_unknown_id_is_protocol_error(self):
        def program(h):
            sl = LocalSlice(
                h.my_rank,
                np.array([h.my_rank]),
                np.array([0, 1]),
                np.array([7]),  # vertex 7 does not exist for n=2
            )
            rmap = degree_relabel(h, sl)
            return resolve_neighbor_ids(h, sl, rmap)

        with pytest.raises(ProtocolError):
            spmd_run(2, program)


class TestBuild2dBlocks:
    def test_triangle_tasks_single_rank(self):
        blocks, _ = stage_runner(complete_graph(3), 1, "blocks")[0]
        task_pairs = blocks.task.entries().tolist()
        assert task_pairs == [[1, 0], [2, 0], [2, 1]]

    def test_k4_residue_pigeonhole(self):
        results = stage_runner(complete_graph(4), 4, "blocks")
        total_u = 0
        for rank, (blocks, _) in enumerate(results):
            x, y = divmod(rank, 2)
            ue = blocks.u_home.entries()
            assert np.all(ue[:, 0] % 2 == x)
            assert np.all(ue[:, 1] % 2 == y)
            total_u += blocks.u_home.nnz
        assert total_u == 6

    def test_rmat_task_balance(self):
        g = generate(RmatParams(scale=10, edge_factor=16, seed=2))
        results = stage_runner(g, 9, "blocks")
        counts = np.array([blocks.task.nnz for blocks, _ in results], dtype=float)
        assert counts.max() / counts.mean() <= 1.15

    def test_edge_multiset_preserved(self, rng):
        """Composition of redistribute + relabel + 2D routing keeps the
        exact edge multiset (mapped through the permutation)."""
        g = random_graph(50, 260, rng)
        p = 9
        results = stage_runner(g, p, "blocks")
        new_by_old = np.full(g.n, -1, dtype=np.int64)
        for _, rmap in results:
            new_by_old[rmap.old_ids] = rmap.new_ids
        u_pairs = np.vstack([blocks.u_home.entries() for blocks, _ in results])
        got = {(int(a), int(b)) for a, b in u_pairs}
        expected = set()
        for a, b in g.edges:
            na, nb = int(new_by_old[a]), int(new_by_old[b])
            expected.add((min(na, nb), max(na, nb)))
        assert got == expected
        assert len(got) == g.m

    def test_block_invariants(self, rng):
        g = random_graph(60, 400, rng)
        for p in (1, 4, 9):
            for blocks, _ in stage_runner(g, p, "blocks"):
                blocks.u_home.validate(minors_above_major=True)
                blocks.l_home.validate(minors_above_major=True)
                blocks.task.validate(minors_above_major=False)
                assert blocks.u_home.orientation == ROW_MAJOR
                assert blocks.l_home.orientation == COL_MAJOR

    def test_task_totals(self, rng):
        g = random_graph(60, 400, rng)
        for enum in ("jik", "ijk"):
            results = stage_runner(g, 4, "blocks", enumeration=enum)
            assert sum(blocks.task.nnz for blocks, _ in results) == g.m

    def test_u_l_mirror(self, rng):
        g = random_graph(40, 220, rng)
        results = stage_runner(g, 4, "blocks")
        u_pairs = np.vstack([b.u_home.entries() for b, _ in results])
        l_pairs = np.vstack([b.l_home.entries() for b, _ in results])
        u_set = {(int(r), int(c)) for r, c in u_pairs}
        # l entries are (major=col j, minor=row k): same undirected pairs
        l_set = {(int(j), int(k)) for j, k in l_pairs}
        assert u_set == l_set

    def test_ijk_task_is_u_home(self, rng):
        g = random_graph(30, 150, rng)
        for blocks, _ in stage_runner(g, 4, "blocks", enumeration="ijk"):
            assert blocks.task == blocks.u_home


def test_run_preprocess_end_to_end(rng):
    g = random_graph(45, 300, rng)
    slices = block_slices(g, 4)

    def program(h):
        return run_preprocess(h, slices[h.my_rank], g.n, 2)

    results = spmd_run(4, program)
    assert sum(b.task.nnz for b in results) == g.m
    assert results[0].n == g.n
