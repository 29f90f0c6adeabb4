"""Evaluation metrics for sets of trees: degree-distribution MMD and
average differences of exact centralities.

The MMD kernel is a Gaussian over the first-Wasserstein distance between
degree histograms (the GraphRNN-lineage convention); the statistic is the
biased V-estimate, so identical sets score exactly zero.  Centralities use
normalized definitions so trees of different sizes are comparable.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from lorentzgen.trees import TreeGraph


def degree_histogram(tree: TreeGraph) -> np.ndarray:
    """Fraction of nodes at each degree (index = degree); sums to one."""
    deg = tree.degrees()
    hist = np.bincount(deg, minlength=int(deg.max()) + 1).astype(np.float64)
    return hist / tree.node_count


def wasserstein1(p: np.ndarray, q: np.ndarray) -> float:
    """First Wasserstein distance between histograms on the integer line."""
    width = max(p.shape[0], q.shape[0])
    pp = np.zeros(width)
    qq = np.zeros(width)
    pp[: p.shape[0]] = p
    qq[: q.shape[0]] = q
    return float(np.abs(np.cumsum(pp - qq)).sum())


def mmd(set_a, set_b, sigma: float = 1.0) -> float:
    """Squared MMD (V-statistic) with kernel exp(-W1(p,q)^2 / (2 sigma^2))."""
    if not set_a or not set_b:
        raise ValueError("MMD needs nonempty histogram sets")

    def mean_kernel(xs, ys):
        total = 0.0
        for p in xs:
            for q in ys:
                w = wasserstein1(p, q)
                total += np.exp(-(w * w) / (2.0 * sigma * sigma))
        return total / (len(xs) * len(ys))

    value = mean_kernel(set_a, set_a) + mean_kernel(set_b, set_b) - 2.0 * mean_kernel(set_a, set_b)
    return max(float(value), 0.0) if value > -1e-12 else float(value)


def _bfs(tree: TreeGraph, source: int):
    n = tree.node_count
    adj = tree.neighbors()
    dist = np.full(n, -1, dtype=np.int64)
    sigma = np.zeros(n)
    preds: list[list[int]] = [[] for _ in range(n)]
    dist[source] = 0
    sigma[source] = 1.0
    order = []
    queue = deque([source])
    while queue:
        v = queue.popleft()
        order.append(v)
        for u in adj[v]:
            if dist[u] < 0:
                dist[u] = dist[v] + 1
                queue.append(u)
            if dist[u] == dist[v] + 1:
                sigma[u] += sigma[v]
                preds[u].append(v)
    return order, dist, sigma, preds


def betweenness_centrality(tree: TreeGraph, normalized: bool = True) -> np.ndarray:
    """Exact betweenness by dependency accumulation (unique paths on trees)."""
    n = tree.node_count
    scores = np.zeros(n)
    for s in range(n):
        order, _, sigma, preds = _bfs(tree, s)
        delta = np.zeros(n)
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                scores[w] += delta[w]
    scores /= 2.0  # each unordered pair counted from both endpoints
    if normalized and n > 2:
        scores /= (n - 1) * (n - 2) / 2.0
    return scores


def closeness_centrality(tree: TreeGraph, normalized: bool = True) -> np.ndarray:
    """(n-1) / sum of distances; zero for a singleton."""
    n = tree.node_count
    if n == 1:
        return np.zeros(1)
    out = np.zeros(n)
    for v in range(n):
        _, dist, _, _ = _bfs(tree, v)
        total = float(dist.sum())
        out[v] = (n - 1) / total if normalized else 1.0 / total
    return out


def centrality_avg_diff(set_a, set_b, kind: str) -> float:
    """|mean over trees of per-tree average centrality, set A vs set B|."""
    fn = {"betweenness": betweenness_centrality, "closeness": closeness_centrality}.get(kind)
    if fn is None:
        raise ValueError(f"unknown centrality kind {kind!r}")
    mean_a = float(np.mean([fn(t).mean() for t in set_a]))
    mean_b = float(np.mean([fn(t).mean() for t in set_b]))
    return abs(mean_a - mean_b)


@dataclass(frozen=True)
class MetricsReport:
    degree_mmd: float
    betweenness_avg_diff: float
    closeness_avg_diff: float
    generated_size: int
    reference_size: int
    kernel_sigma: float

    def __post_init__(self) -> None:
        values = (self.degree_mmd, self.betweenness_avg_diff, self.closeness_avg_diff)
        if not all(np.isfinite(v) and v >= 0 for v in values):
            raise ValueError(f"metric values must be finite and nonnegative, got {values}")

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("degree_mmd", self.degree_mmd),
            ("betweenness_avg_diff", self.betweenness_avg_diff),
            ("closeness_avg_diff", self.closeness_avg_diff),
            ("generated_size", float(self.generated_size)),
            ("reference_size", float(self.reference_size)),
            ("kernel_sigma", self.kernel_sigma),
        ]


def evaluate_tree_sets(generated, reference, sigma: float = 1.0) -> MetricsReport:
    hists_g = [degree_histogram(t) for t in generated]
    hists_r = [degree_histogram(t) for t in reference]
    return MetricsReport(
        degree_mmd=mmd(hists_g, hists_r, sigma),
        betweenness_avg_diff=centrality_avg_diff(generated, reference, "betweenness"),
        closeness_avg_diff=centrality_avg_diff(generated, reference, "closeness"),
        generated_size=len(generated),
        reference_size=len(reference),
        kernel_sigma=sigma,
    )
