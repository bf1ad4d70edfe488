from __future__ import annotations

import random

from dynconn.counters import CounterLayout
from dynconn.graph_model import PRIMARY, SECONDARY, WITNESS, EdgeRecord
from dynconn.hierarchy import Hierarchy
from dynconn.local_trees import LocalTreeConfig

# acceptance verdicts, printed once at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")


# small thresholds push the local trees through bottom, middle and top layers
TINY_LOCAL = LocalTreeConfig(buffer_limit=2, top_limit=2)


def random_hierarchy(n: int, rng: random.Random, local: LocalTreeConfig | None = None,
                     layout: CounterLayout | None = None) -> Hierarchy:
    """One root over all vertices, then random sibling merges at every depth (respecting weights)."""
    h = Hierarchy(n, local_config=local, layout=layout)
    for v in range(n):
        h.node_for(v)
    a = h.root_of(0)
    for v in range(1, n):
        a = h.merge_roots(a, h.root_of(v))
    for depth in range(1, h.d_max):
        cap = n // 2 ** depth
        for x in [y for y in h.all_nodes() if y.key == depth - 1]:
            kids = sorted(h.children(x), key=lambda c: min_vertex(h, c))
            rng.shuffle(kids)
            group, w = [], 0
            for c in kids:
                if w + c.weight > cap or (group and rng.random() < 0.3):
                    if len(group) > 1:
                        h.h_merge_promote(group)
                    group, w = [], 0
                group.append(c)
                w += c.weight
            if len(group) > 1 and w <= cap:
                h.h_merge_promote(group)
    return h


def min_vertex(h: Hierarchy, x) -> int:
    if x.vertex >= 0:
        return x.vertex
    return min(min_vertex(h, c) for c in h.children(x))


def random_edge(h: Hierarchy, rng: random.Random, used: set) -> EdgeRecord | None:
    for _ in range(20):
        u, v = rng.sample(range(h.n), 2)
        key = (min(u, v), max(u, v))
        if key in used:
            continue
        used.add(key)
        i = rng.randint(1, h.d_max)
        if rng.random() < 0.3:
            return EdgeRecord(u, v, i, WITNESS, WITNESS)
        return EdgeRecord(u, v, i, rng.choice((PRIMARY, SECONDARY)), rng.choice((PRIMARY, SECONDARY)))
    return None


def populate(h: Hierarchy, rng: random.Random, m: int) -> list[EdgeRecord]:
    used: set = set()
    out = []
    for _ in range(m):
        e = random_edge(h, rng, used)
        if e is not None:
            h.h_add_edge(e)
            out.append(e)
    return out


def engine_with_depths(n: int, witness: dict, others: dict | None = None, **kw):
    """Engine whose witness edges and non-witness edges sit at the given depths.

    Witness edges are inserted first and lifted level by level by merging the
    depth-k nodes of every component of deeper witness edges; non-witness edges
    are then inserted and moved to their depth directly.
    """
    from dynconn.connectivity import Engine, EngineConfig
    from dynconn.graph_model import SECONDARY
    from dynconn.oracle import components

    eng = Engine(n, kw.pop("seed", 0), EngineConfig(**kw))
    h = eng.h
    for u, v in witness:
        eng.insert(u, v)
    for k in range(1, h.d_max):
        lab = components(n, [e for e, d in witness.items() if d > k])
        groups: dict[int, list[int]] = {}
        for v in range(n):
            groups.setdefault(lab[v], []).append(v)
        for vs in groups.values():
            nodes = []
            for v in vs:
                x = h.ancestor(h.node_for(v), k)
                if all(x is not y for y in nodes):
                    nodes.append(x)
            if len(nodes) > 1:
                h.h_merge_promote(nodes)
    for (u, v), d in (others or {}).items():
        eng.insert(u, v)
        h.set_edge_class(eng.edge(u, v), d, SECONDARY, SECONDARY)
    for (u, v), d in witness.items():
        assert eng.edge(u, v).depth == d, (u, v)
        eng.edge(u, v).promotions = 0
    return eng


# A 15-vertex graph with maximum depth 3: two halves joined at depth 1, each
# alternating depth-2 and depth-3 witness edges, plus a few non-witness edges.
LAYERED_WITNESS = {
    (0, 1): 3, (1, 2): 2, (2, 4): 2, (3, 4): 3, (4, 5): 2, (5, 6): 3,
    (0, 7): 1, (7, 14): 1,
    (7, 8): 3, (8, 9): 2, (9, 10): 3, (10, 11): 2, (11, 12): 3, (12, 13): 2,
}
LAYERED_OTHERS = {(2, 3): 2, (0, 5): 1, (8, 14): 1, (9, 12): 1, (4, 6): 2}
