"""Tree sampling, canonicalization, and serialization tests."""

import itertools

import numpy as np
import pytest

from lorentzgen import trees as tr
from lorentzgen.trees import TreeGraph


class TestTreeGraph:
    def test_children_in_insertion_order(self):
        t = TreeGraph((-1, 0, 0, 1))
        assert t.children[0] == (1, 2)
        assert t.children[1] == (3,)
        assert t.neighbors() == [[1, 2], [0, 3], [0], [1]]

    def test_degrees(self):
        t = TreeGraph((-1, 0, 0, 0))  # star, center 0
        np.testing.assert_array_equal(t.degrees(), [3, 1, 1, 1])

    def test_rejects_bad_parent_arrays(self):
        with pytest.raises(ValueError):
            TreeGraph((0, -1))
        with pytest.raises(ValueError):
            TreeGraph((-1, 2, 1))  # 1 <-> 2 cycle, disconnected from root


class TestPrueferDecoding:
    def test_single_entry_gives_star(self):
        t = tr.decode_pruefer([0])
        assert t.node_count == 3
        assert sorted(t.edges()) == [(0, 1), (0, 2)]

    def test_every_output_is_a_spanning_tree(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            n = int(rng.integers(3, 40))
            t = tr.decode_pruefer(rng.integers(0, n, size=n - 2))
            assert t.node_count == n
            assert len(t.edges()) == n - 1  # connectivity enforced by TreeGraph

    def test_bijection_on_four_nodes(self):
        # 4^2 = 16 sequences must produce 16 distinct labeled trees
        seen = set()
        for seq in itertools.product(range(4), repeat=2):
            t = tr.decode_pruefer(seq)
            seen.add(tuple(sorted(tuple(sorted(e)) for e in t.edges())))
        assert len(seen) == 16

    def test_uniformity_over_labeled_trees(self):
        # frequency of each of the 16 labeled trees on 4 nodes: 1/16 +- 3 sigma
        rng = np.random.default_rng(1)
        samples = 100_000
        counts: dict = {}
        for _ in range(samples):
            t = tr.random_tree(rng, 4, 4)
            key = tuple(sorted(tuple(sorted(e)) for e in t.edges()))
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 16
        p = 1.0 / 16.0
        bound = 3.0 * np.sqrt(p * (1 - p) / samples)
        for c in counts.values():
            assert abs(c / samples - p) <= bound


class TestRandomTree:
    def test_size_range_and_validity(self):
        rng = np.random.default_rng(2)
        sizes = set()
        for _ in range(200):
            t = tr.random_tree(rng, 5, 9)
            sizes.add(t.node_count)
            assert 5 <= t.node_count <= 9
        assert sizes == {5, 6, 7, 8, 9}

    def test_tiny_trees(self):
        rng = np.random.default_rng(3)
        assert tr.random_tree(rng, 1, 1).node_count == 1
        t2 = tr.random_tree(rng, 2, 2)
        assert t2.parent == (-1, 0)

    def test_bad_range_rejected(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError):
            tr.random_tree(rng, 0, 5)
        with pytest.raises(ValueError):
            tr.random_tree(rng, 6, 5)


class TestCenters:
    def test_path_center(self):
        # path 0-1-2-3-4 has single center 2
        t = TreeGraph((-1, 0, 1, 2, 3))
        assert tr.tree_centers(t) == [2]

    def test_even_path_two_centers(self):
        t = TreeGraph((-1, 0, 1, 2))
        assert tr.tree_centers(t) == [1, 2]

    def test_star_center(self):
        t = TreeGraph((-1, 0, 0, 0, 0))
        assert tr.tree_centers(t) == [0]


class TestCanonicalForm:
    def _relabel(self, tree: TreeGraph, rng) -> TreeGraph:
        n = tree.node_count
        perm = rng.permutation(n)
        edges = [(int(perm[u]), int(perm[v])) for u, v in tree.edges()]
        root = int(np.argwhere(perm == 0)[0][0]) if False else 0
        # re-root at whichever node got label 0
        return TreeGraph.from_edges(n, edges)

    def test_isomorphic_relabelings_collapse(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            t = tr.random_tree(rng, 3, 25)
            canon = tr.canonical_form(t)
            for _ in range(3):
                alt = self._relabel(t, rng)
                assert tr.canonical_form(alt).parent == canon.parent

    def test_idempotent(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            c = tr.canonical_form(tr.random_tree(rng, 3, 30))
            assert tr.canonical_form(c).parent == c.parent

    def test_preserves_degree_multiset(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            t = tr.random_tree(rng, 4, 30)
            c = tr.canonical_form(t)
            assert sorted(t.degrees()) == sorted(c.degrees())


class TestDfsActions:
    def test_length_and_counts(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            t = tr.random_tree(rng, 1, 30)
            acts = tr.dfs_actions(t)
            n = t.node_count
            assert len(acts) == 2 * n - 1
            assert sum(a for _, a in acts) == n - 1  # one expansion per non-root

    def test_replay_reconstructs_tree(self):
        # replay assigns labels in visit order, so it reproduces the parent
        # array exactly for preorder-labeled trees (canonical form is one)
        rng = np.random.default_rng(9)
        for _ in range(100):
            t = tr.canonical_form(tr.random_tree(rng, 1, 25))
            parent = [-1]
            cur = 0
            for node, bit in tr.dfs_actions(t):
                assert node == cur
                if bit == 1:
                    parent.append(cur)
                    cur = len(parent) - 1
                else:
                    cur = parent[cur] if parent[cur] >= 0 else cur
            rebuilt = TreeGraph(tuple(parent))
            assert rebuilt.parent == t.parent

    def test_hand_sequence_for_small_tree(self):
        t = TreeGraph((-1, 0, 0))
        assert tr.dfs_actions(t) == [(0, 1), (1, 0), (0, 1), (2, 0), (0, 0)]


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(10)
        trees = [tr.random_tree(rng, 1, 40) for _ in range(50)]
        path = tmp_path / "trees.txt"
        tr.save_trees(path, trees)
        loaded = tr.load_trees(path)
        assert [t.parent for t in loaded] == [t.parent for t in trees]

    def test_line_format(self):
        t = TreeGraph((-1, 0, 1, 1))
        assert t.to_line() == "4 0 1 1"
        assert TreeGraph.from_line("4 0 1 1").parent == t.parent
        assert TreeGraph.from_line("1").node_count == 1

    def test_malformed_line_rejected(self):
        with pytest.raises(ValueError):
            TreeGraph.from_line("3 0")
