"""Rooted unlabeled trees: uniform sampling, canonical form, traversal.

Trees are stored as a parent array (node 0 is the root, parents precede
children in the traversal sense but labels are arbitrary) plus derived
children lists in insertion order, which fixes the traversal order used
everywhere else.

Uniform random trees come from uniform Prufer sequences, which are in
bijection with labeled trees on n >= 3 nodes; n = 1 and n = 2 are handled
directly.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TreeGraph:
    parent: tuple  # parent[i] for each node, -1 for the root (node 0)
    children: tuple = field(init=False, repr=False)

    def __post_init__(self) -> None:
        parent = tuple(int(p) for p in self.parent)
        object.__setattr__(self, "parent", parent)
        n = len(parent)
        if n == 0 or parent[0] != -1:
            raise ValueError("node 0 must be the root (parent -1)")
        kids: list[list[int]] = [[] for _ in range(n)]
        for i in range(1, n):
            p = parent[i]
            if not 0 <= p < n or p == i:
                raise ValueError(f"node {i} has invalid parent {p}")
            kids[p].append(i)
        # reject cycles / disconnection: every node must reach the root
        for i in range(n):
            v, hops = i, 0
            while v != 0:
                v = parent[v]
                hops += 1
                if hops > n:
                    raise ValueError("parent array contains a cycle")
        object.__setattr__(self, "children", tuple(tuple(c) for c in kids))

    @property
    def node_count(self) -> int:
        return len(self.parent)

    def edges(self) -> list[tuple[int, int]]:
        return [(self.parent[i], i) for i in range(1, self.node_count)]

    def neighbors(self) -> list[list[int]]:
        """Adjacency lists, parent first then children in insertion order."""
        out = []
        for v in range(self.node_count):
            nbrs = [] if v == 0 else [self.parent[v]]
            nbrs.extend(self.children[v])
            out.append(nbrs)
        return out

    def degrees(self) -> np.ndarray:
        deg = np.array([len(c) for c in self.children], dtype=np.int64)
        deg[1:] += 1
        return deg

    def to_line(self) -> str:
        return " ".join([str(self.node_count)] + [str(p) for p in self.parent[1:]])

    @classmethod
    def from_line(cls, line: str) -> "TreeGraph":
        fields = line.split()
        n = int(fields[0])
        if len(fields) != n:
            raise ValueError(f"expected {n - 1} parents, got {len(fields) - 1}")
        return cls((-1,) + tuple(int(p) for p in fields[1:]))

    @classmethod
    def from_edges(cls, n: int, edges) -> "TreeGraph":
        """Root an undirected edge list at node 0 (children sorted by label)."""
        adj: list[list[int]] = [[] for _ in range(n)]
        for u, v in edges:
            adj[u].append(v)
            adj[v].append(u)
        parent = [-2] * n
        parent[0] = -1
        stack = [0]
        seen = {0}
        while stack:
            v = stack.pop()
            for u in sorted(adj[v], reverse=True):
                if u not in seen:
                    seen.add(u)
                    parent[u] = v
                    stack.append(u)
        if len(seen) != n:
            raise ValueError("edge list is not a connected tree")
        return cls(tuple(parent))


def decode_pruefer(seq) -> TreeGraph:
    """Standard decoding: repeatedly attach the smallest current leaf."""
    seq = [int(v) for v in seq]
    n = len(seq) + 2
    if any(not 0 <= v < n for v in seq):
        raise ValueError("sequence entries must index the node set")
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    leaves = [v for v in range(n) if degree[v] == 1]
    heapq.heapify(leaves)
    edges = []
    for v in seq:
        u = heapq.heappop(leaves)
        edges.append((u, v))
        degree[v] -= 1
        if degree[v] == 1:
            heapq.heappush(leaves, v)
    u, w = heapq.heappop(leaves), heapq.heappop(leaves)
    edges.append((u, w))
    return TreeGraph.from_edges(n, edges)


def random_tree(rng: np.random.Generator, min_nodes: int, max_nodes: int) -> TreeGraph:
    """A uniformly random labeled tree with node count uniform on the range."""
    if min_nodes < 1 or min_nodes > max_nodes:
        raise ValueError(f"need 1 <= min_nodes <= max_nodes, got [{min_nodes}, {max_nodes}]")
    n = int(rng.integers(min_nodes, max_nodes + 1))
    if n == 1:
        return TreeGraph((-1,))
    if n == 2:
        return TreeGraph((-1, 0))
    seq = rng.integers(0, n, size=n - 2)
    return decode_pruefer(seq)


def _subtree_code(tree: TreeGraph, root: int, blocked: int) -> tuple:
    # AHU canonical encoding of the subtree at `root` with `blocked` removed,
    # iterative to survive path graphs of any length
    order = []
    stack = [(root, blocked)]
    kids: dict[int, list[int]] = {}
    while stack:
        v, parent = stack.pop()
        order.append((v, parent))
        nbrs = ([] if v == 0 else [tree.parent[v]]) + list(tree.children[v])
        kids[v] = [u for u in nbrs if u != parent]
        for u in kids[v]:
            stack.append((u, v))
    codes: dict[int, tuple] = {}
    for v, parent in reversed(order):
        codes[v] = tuple(sorted(codes[u] for u in kids[v]))
    return codes[root]


def tree_centers(tree: TreeGraph) -> list[int]:
    """The one or two middle nodes found by repeatedly peeling leaves."""
    n = tree.node_count
    if n <= 2:
        return list(range(n))
    adj = {v: set(nb) for v, nb in enumerate(tree.neighbors())}
    remaining = set(range(n))
    layer = [v for v in remaining if len(adj[v]) == 1]
    while len(remaining) > 2:
        nxt = []
        for v in layer:
            remaining.discard(v)
            for u in adj[v]:
                adj[u].discard(v)
                if u in remaining and len(adj[u]) == 1:
                    nxt.append(u)
            adj[v].clear()
        layer = nxt
    return sorted(remaining)


def canonical_form(tree: TreeGraph) -> TreeGraph:
    """Isomorphism-invariant relabeling: root at the canonical center, order
    children by their subtree codes, relabel in preorder.

    Isomorphic trees map to the identical parent array, which makes the
    traversal decision sequence a function of the tree's shape alone.
    """
    centers = tree_centers(tree)
    root = min(centers, key=lambda c: _subtree_code(tree, c, -1))

    nbrs = tree.neighbors()
    parent_of = {root: -1}
    order = [root]
    for v in order:
        for u in nbrs[v]:
            if u != parent_of[v]:
                parent_of[u] = v
                order.append(u)
    kids = {v: [u for u in nbrs[v] if u != parent_of[v]] for v in order}
    codes: dict[int, tuple] = {}
    for v in reversed(order):
        codes[v] = tuple(sorted(codes[u] for u in kids[v]))

    new_parent: list[int] = []
    stack = [(root, -1)]
    while stack:
        v, pid = stack.pop()
        my_id = len(new_parent)
        new_parent.append(pid)
        for u in sorted(kids[v], key=lambda u: codes[u], reverse=True):
            stack.append((u, my_id))
    return TreeGraph(tuple(new_parent))


def dfs_actions(tree: TreeGraph) -> list[tuple[int, int]]:
    """(node, decision) pairs of the depth-first construction.

    decision 1 = generate the next child, 0 = backtrack (stop at the root).
    A tree with n nodes yields exactly 2n - 1 decisions: one expansion per
    non-root node and one backtrack per node.
    """
    actions: list[tuple[int, int]] = []
    stack: list[tuple[int, int]] = [(0, 0)]  # (node, next child slot)
    while stack:
        v, slot = stack.pop()
        if slot < len(tree.children[v]):
            actions.append((v, 1))
            stack.append((v, slot + 1))
            stack.append((tree.children[v][slot], 0))
        else:
            actions.append((v, 0))
    return actions


def save_trees(path, trees) -> None:
    with open(path, "w") as fh:
        for t in trees:
            fh.write(t.to_line() + "\n")


def load_trees(path) -> list[TreeGraph]:
    with open(path) as fh:
        return [TreeGraph.from_line(line) for line in fh if line.strip()]
