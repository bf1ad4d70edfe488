"""Brute-force references for differential tests and audits.

Everything here recomputes from scratch on every call.
"""

from __future__ import annotations

from collections import deque
from typing import Iterable

from .errors import DuplicateEdge, MissingEdge, SelfLoop, VertexRangeError
from .graph_model import PRIMARY, edge_key


def _bfs_labels(n: int, adj: list[list[int]]) -> list[int]:
    label = [-1] * n
    for s in range(n):
        if label[s] >= 0:
            continue
        label[s] = s
        q = deque([s])
        while q:
            x = q.popleft()
            for y in adj[x]:
                if label[y] < 0:
                    label[y] = s
                    q.append(y)
    return label


def components(n: int, edges: Iterable[tuple[int, int]]) -> list[int]:
    """Component label of every vertex (the smallest vertex of its component), by BFS."""
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    return _bfs_labels(n, adj)


def uf_components(n: int, edges: Iterable[tuple[int, int]]) -> list[int]:
    """Same labelling as :func:`components`, computed by union-find."""
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        a, b = find(u), find(v)
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
    return [find(x) for x in range(n)]


class OracleGraph:
    """Plain edge set with an optional depth per edge."""

    def __init__(self, n: int) -> None:
        self.n = n
        self.depth: dict[tuple[int, int], int] = {}

    def _check(self, u: int, v: int) -> tuple[int, int]:
        for x in (u, v):
            if not 0 <= x < self.n:
                raise VertexRangeError(f"vertex {x} outside [0, {self.n})")
        if u == v:
            raise SelfLoop(f"self-loop at {u}")
        return edge_key(u, v)

    def add_edge(self, u: int, v: int, depth: int = 1) -> None:
        k = self._check(u, v)
        if k in self.depth:
            raise DuplicateEdge(f"edge {k} already present")
        self.depth[k] = depth

    def remove_edge(self, u: int, v: int) -> None:
        k = self._check(u, v)
        if k not in self.depth:
            raise MissingEdge(f"edge {k} not present")
        del self.depth[k]

    def set_depth(self, u: int, v: int, depth: int) -> None:
        k = self._check(u, v)
        if k not in self.depth:
            raise MissingEdge(f"edge {k} not present")
        self.depth[k] = depth

    def has_edge(self, u: int, v: int) -> bool:
        return edge_key(u, v) in self.depth

    def edges(self) -> list[tuple[int, int]]:
        return sorted(self.depth)

    def o_connected(self, u: int, v: int) -> bool:
        if u == v:
            return True
        lab = components(self.n, self.depth)
        return lab[u] == lab[v]

    def o_components_at_depth(self, i: int) -> list[int]:
        """Components of the subgraph of edges with depth at least ``i + 1``."""
        return components(self.n, (k for k, d in self.depth.items() if d > i))

    def o_max_spanning_forest_check(self, forest: Iterable[tuple[int, int]]) -> bool:
        return o_max_spanning_forest_check(self.n, forest, self.depth)


def o_max_spanning_forest_check(n: int, forest: Iterable[tuple[int, int]], depths: dict[tuple[int, int], int]) -> bool:
    """``forest`` spans every component and every other edge's forest path is at least as deep as the edge."""
    f = {edge_key(u, v) for u, v in forest}
    if not f <= set(depths):
        return False
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for u, v in f:
        d = depths[(u, v)]
        adj[u].append((v, d))
        adj[v].append((u, d))
    # a forest has n - (number of trees) edges
    if len(f) != n - len(set(components(n, f))):
        return False
    if components(n, f) != components(n, depths):
        return False
    for (u, v), d in depths.items():
        if (u, v) in f:
            continue
        # min depth on the forest path from u to v
        best = {u: 1 << 30}
        q = deque([u])
        while q:
            x = q.popleft()
            for y, dd in adj[x]:
                if y not in best:
                    best[y] = min(best[x], dd)
                    q.append(y)
        if best.get(v, -1) < d:
            return False
    return True


def o_exact_primary_count(h, node, i: int) -> int:
    """Depth-``i`` primary endpoints at the vertices below hierarchy ``node``."""
    total = 0
    stack = [node]
    while stack:
        x = stack.pop()
        if x.vertex >= 0:
            total += h.store.size(x.vertex, i, PRIMARY)
        else:
            stack.extend(h.children(x))
    return total
