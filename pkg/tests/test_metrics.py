"""Metric tests, including brute-force oracles for the centralities."""

import itertools

import numpy as np
import pytest

from lorentzgen import metrics as mt
from lorentzgen import trees as tr
from lorentzgen.trees import TreeGraph

PATH3 = TreeGraph((-1, 0, 1))
STAR4 = TreeGraph((-1, 0, 0, 0))


def brute_betweenness(tree: TreeGraph) -> np.ndarray:
    """All-pairs check: v lies on the unique s-t path iff the distances add."""
    n = tree.node_count
    dist = np.zeros((n, n), dtype=np.int64)
    for v in range(n):
        _, d, _, _ = mt._bfs(tree, v)
        dist[v] = d
    scores = np.zeros(n)
    for v in range(n):
        for s in range(n):
            for t in range(s + 1, n):
                if s != v and t != v and dist[s, v] + dist[v, t] == dist[s, t]:
                    scores[v] += 1.0
    if n > 2:
        scores /= (n - 1) * (n - 2) / 2.0
    return scores


def brute_closeness(tree: TreeGraph) -> np.ndarray:
    n = tree.node_count
    if n == 1:
        return np.zeros(1)
    out = np.zeros(n)
    for v in range(n):
        _, d, _, _ = mt._bfs(tree, v)
        out[v] = (n - 1) / float(d.sum())
    return out


class TestDegreeHistogram:
    def test_path3(self):
        np.testing.assert_allclose(mt.degree_histogram(PATH3), [0.0, 2 / 3, 1 / 3])

    def test_star(self):
        h = mt.degree_histogram(STAR4)
        np.testing.assert_allclose(h, [0.0, 3 / 4, 0.0, 1 / 4])

    def test_sums_to_one_exactly(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            h = mt.degree_histogram(tr.random_tree(rng, 1, 40))
            assert h.sum() == pytest.approx(1.0, abs=1e-15)


class TestMmd:
    def test_identical_sets_score_zero(self):
        rng = np.random.default_rng(1)
        hists = [mt.degree_histogram(tr.random_tree(rng, 5, 20)) for _ in range(10)]
        assert mt.mmd(hists, list(hists)) <= 1e-12

    def test_singleton_sets_expand_by_hand(self):
        p = np.array([0.0, 0.5, 0.5])
        q = np.array([0.0, 1.0])
        w = mt.wasserstein1(p, q)
        expected = 2.0 - 2.0 * np.exp(-(w**2) / 2.0)
        assert mt.mmd([p], [q]) == pytest.approx(expected, rel=1e-12)

    def test_symmetry_and_order_invariance(self):
        rng = np.random.default_rng(2)
        a = [mt.degree_histogram(tr.random_tree(rng, 4, 15)) for _ in range(6)]
        b = [mt.degree_histogram(tr.random_tree(rng, 4, 15)) for _ in range(6)]
        assert mt.mmd(a, b) == pytest.approx(mt.mmd(b, a), rel=1e-12)
        assert mt.mmd(a, b) == pytest.approx(mt.mmd(a[::-1], b[::-1]), rel=1e-12)

    def test_matching_the_odd_element_never_increases_mmd(self):
        # brute-force on 3-element sets: when B already matches A except in
        # one slot, setting that slot equal too cannot increase the MMD
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = [mt.degree_histogram(tr.random_tree(rng, 3, 12)) for _ in range(3)]
            for j in range(3):
                b = list(a)
                b[j] = mt.degree_histogram(tr.random_tree(rng, 3, 12))
                mismatched = mt.mmd(a, b)
                b[j] = a[j]
                matched = mt.mmd(a, b)
                assert matched <= mismatched + 1e-12

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            mt.mmd([], [np.array([1.0])])


class TestCentralities:
    def test_path3_betweenness(self):
        scores = mt.betweenness_centrality(PATH3)
        np.testing.assert_allclose(scores, [0.0, 1.0, 0.0])
        assert scores.mean() == pytest.approx(1 / 3)

    def test_star4_closeness_center(self):
        scores = mt.closeness_centrality(STAR4)
        assert scores[0] == pytest.approx(1.0)
        np.testing.assert_allclose(scores[1:], 3.0 / 5.0)

    def test_singleton(self):
        single = TreeGraph((-1,))
        assert mt.closeness_centrality(single)[0] == 0.0
        assert mt.betweenness_centrality(single)[0] == 0.0

    def test_brandes_matches_brute_force_exhaustively(self):
        # every labeled tree with up to 7 nodes, via Prufer enumeration
        for n in range(3, 7):
            for seq in itertools.product(range(n), repeat=n - 2):
                t = tr.decode_pruefer(seq)
                np.testing.assert_allclose(
                    mt.betweenness_centrality(t), brute_betweenness(t), atol=1e-12
                )

    @pytest.mark.slow
    def test_brandes_matches_brute_force_larger(self):
        for n in (7, 8):
            for seq in itertools.product(range(n), repeat=n - 2):
                t = tr.decode_pruefer(seq)
                np.testing.assert_allclose(
                    mt.betweenness_centrality(t), brute_betweenness(t), atol=1e-12
                )

    def test_closeness_matches_brute_force_random(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            t = tr.random_tree(rng, 2, 25)
            np.testing.assert_allclose(mt.closeness_centrality(t), brute_closeness(t), atol=1e-12)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            mt.centrality_avg_diff([PATH3], [PATH3], "eigenvector")


class TestReport:
    def test_identical_sets_give_zero_metrics(self):
        rng = np.random.default_rng(5)
        trees = [tr.random_tree(rng, 5, 20) for _ in range(8)]
        report = mt.evaluate_tree_sets(trees, list(trees))
        assert report.degree_mmd <= 1e-12
        assert report.betweenness_avg_diff == 0.0
        assert report.closeness_avg_diff == 0.0

    def test_all_values_finite_nonnegative(self):
        rng = np.random.default_rng(6)
        a = [tr.random_tree(rng, 5, 20) for _ in range(8)]
        b = [tr.random_tree(rng, 20, 40) for _ in range(8)]
        report = mt.evaluate_tree_sets(a, b)
        for _, value in report.rows():
            assert np.isfinite(value) and value >= 0

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            mt.MetricsReport(np.nan, 0.0, 0.0, 1, 1, 1.0)
