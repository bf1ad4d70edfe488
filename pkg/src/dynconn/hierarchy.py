"""The component hierarchy.

Depth-``i`` nodes are the connected components of the subgraph of edges with
depth ``> i``; roots (depth 0) are whole components and the depth-``d_max``
nodes are the vertices.  A node reaches its children through its local tree,
and a child finds its parent by climbing out of that local tree.

A vertex that has never had an edge has no nodes at all; its chain of
single-child ancestors is built on first use.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Iterator

from .counters import CounterLayout, decode, depth_bound, log_log
from .errors import ContractError, CorruptionError, InvariantViolation
from .graph_model import (
    PRIMARY, SECONDARY, WITNESS, EdgeRecord, Endpoint, EndpointType, LeafStore, iter_bits, pair_index,
)
from .it_forests import ForestOps, definitional_status
from .local_trees import LocalContext, LocalTree, LocalTreeConfig
from .shortcuts import ShortcutSpace, crosses, lsb_index


# failures starting with this depend on the tunable precision constant c_h
PRECISION_PREFIX = "counter precision:"


class HNode:
    __slots__ = ("key", "weight", "leaf", "lt", "is_node", "is_branching", "sc", "cnt", "vertex", "torn", "mark")

    def __init__(self, depth: int, vertex: int = -1) -> None:
        self.key = depth
        self.weight = 1
        self.leaf = None
        self.lt: LocalTree | None = None
        self.is_node = 0
        self.is_branching = 0
        self.sc = None
        self.cnt = 0
        self.vertex = vertex
        self.torn = False
        self.mark = 0

    @property
    def depth(self) -> int:
        return self.key

    def __repr__(self) -> str:
        if self.vertex >= 0:
            return f"HNode(vertex {self.vertex})"
        return f"HNode(depth {self.key}, w={self.weight})"


class Hierarchy(ForestOps):
    """Hierarchy plus forests, counters and shortcuts for ``n`` vertices."""

    def __init__(self, n: int, store: LeafStore | None = None, local_config: LocalTreeConfig | None = None,
                 layout: CounterLayout | None = None) -> None:
        if n < 1:
            raise ContractError("n must be positive")
        self.n = n
        self.d_max = depth_bound(n)
        self.loglog = log_log(n)
        self.pairs = 3 * self.d_max
        self.store = store or LeafStore(n)
        self.layout = layout or CounterLayout.for_n(n)
        self.sp = ShortcutSpace(self.pairs, self.loglog)
        self.lctx = LocalContext(self.layout, self.pairs, self.loglog, local_config or LocalTreeConfig.for_n(n))
        self.depth_mask = [sum(1 << p for p in range(min(3 * k, self.pairs))) for k in range(self.d_max + 1)]
        self.root_mask = [0] + [0b111 << (3 * (k - 1)) for k in range(1, self.d_max + 1)]
        self.vnodes: list[HNode | None] = [None] * n
        self.roots: set[HNode] = set()
        self.torn_nodes: list[HNode] = []
        self.stats: Counter[str] = Counter()
        self._epoch = 0

    # ------------------------------------------------------------- basics
    def new_epoch(self) -> int:
        self._epoch += 1
        return self._epoch

    def node_for(self, v: int) -> HNode:
        """Vertex node of ``v``, building its singleton chain on first use."""
        x = self.vnodes[v]
        if x is not None:
            return x
        self.store.check_vertex(v)
        chain = [HNode(k) for k in range(self.d_max)] + [HNode(self.d_max, v)]
        for k in range(self.d_max):
            up = chain[k]
            up.lt = LocalTree(self.lctx, up)
            up.lt.add_child(chain[k + 1])
        self.roots.add(chain[0])
        self.vnodes[v] = chain[-1]
        self.stats["chains"] += 1
        return chain[-1]

    def ancestor(self, x: HNode, depth: int) -> HNode:
        while x.key > depth:
            x = self.parent(x)
        return x

    def path_to_root(self, x: HNode) -> list[HNode]:
        """``x`` and its ancestors, root first."""
        out = [x]
        while True:
            q = self.parent(out[-1])
            if q is None:
                break
            out.append(q)
        out.reverse()
        return out

    def root_of(self, v: int) -> HNode:
        return self.ancestor(self.node_for(v), 0)

    def children(self, x: HNode) -> list[HNode]:
        return [leaf.child for leaf in x.lt.leaves()] if x.lt is not None else []

    # --------------------------------------------------------- endpoints
    def add_endpoint(self, h: Endpoint) -> None:
        """Store ``h`` and update leaf status and counters."""
        x = self.node_for(h.vertex)
        p = h.pair
        had = x.is_node & (1 << p)
        self.store.insert_handle(h)
        if p % 3 == 1:
            i = p // 3 + 1
            size = len(self.store.lists(h.vertex)[p])
            if had:
                self.set_leaf_count(x, i, size)
                return
            x.cnt = self.layout.set_count(x.cnt, i, size)
        if not had:
            self.add_leaf(x, p)

    def remove_endpoint(self, h: Endpoint) -> None:
        x = self.vnodes[h.vertex]
        p = h.pair
        self.store.remove(h)
        d = self.store.lists(h.vertex)
        size = len(d.get(p, ()))
        if size == 0:
            self.remove_leaf(x, p)
        elif p % 3 == 1:
            self.set_leaf_count(x, p // 3 + 1, size)

    def retag(self, h: Endpoint, i: int, t: EndpointType) -> None:
        self.remove_endpoint(h)
        h.pair = pair_index(i, t)
        self.add_endpoint(h)

    def h_add_edge(self, e: EdgeRecord) -> None:
        if e.end_u is not None:
            raise ContractError(f"edge {e.key} is already in the hierarchy")
        e.end_u = Endpoint(e, e.u, pair_index(e.depth, e.type_u))
        e.end_v = Endpoint(e, e.v, pair_index(e.depth, e.type_v))
        self.add_endpoint(e.end_u)
        self.add_endpoint(e.end_v)

    def h_remove_edge(self, e: EdgeRecord) -> None:
        if e.end_u is None:
            raise ContractError(f"edge {e.key} is not in the hierarchy")
        self.remove_endpoint(e.end_u)
        self.remove_endpoint(e.end_v)
        e.end_u = e.end_v = None

    def set_edge_class(self, e: EdgeRecord, depth: int, type_u: EndpointType, type_v: EndpointType) -> None:
        """Move both endpoints of ``e`` to a new depth/type combination."""
        if e.type_u != type_u or e.depth != depth:
            self.retag(e.end_u, depth, type_u)
        if e.type_v != type_v or e.depth != depth:
            self.retag(e.end_v, depth, type_v)
        e.depth, e.type_u, e.type_v = depth, type_u, type_v

    # ------------------------------------------------ forest and edge operations
    def h_enumerate(self, v: HNode, i: int, t: EndpointType) -> list[Endpoint]:
        return list(self.iter_endpoints(v, i, t))

    def iter_endpoints(self, v: HNode, i: int, t: EndpointType) -> Iterator[Endpoint]:
        p = pair_index(i, t)
        bit = 1 << p
        if v.key < i:
            raise ContractError(f"node at depth {v.key} cannot hold depth-{i} endpoints")
        if not v.is_node & bit:
            v = self.forest_entry(v, p)
            if v is None:
                return
        lists = self.store.lists
        for x in self.forest_leaves(v, p):
            yield from list(lists(x.vertex).get(p, ()))

    def forest_entry(self, v: HNode, p: int) -> HNode | None:
        """Topmost explicit forest node at or below ``v`` for pair ``p``, or None outside the forest."""
        bit = 1 << p
        if v.is_node & bit:
            return v
        if self.sp.get_down(v, p) is not None or (v.lt is not None and v.lt.status & bit):
            return self.descend(v, p)
        # v may sit in the middle of a chain: find the chain's top and follow it
        depth = p // 3 + 1
        a = self.parent(v) if v.key > depth else None
        while a is not None and not a.is_node & bit:
            a = self.parent(a) if a.key > depth else None
        if a is None:
            return None
        for w in self.forest_children(a, p):
            if self.ancestor(w, v.key) is v:
                return w
        return None

    def h_primary_count(self, v: HNode, i: int):
        p = pair_index(i, PRIMARY)
        if not v.is_node & (1 << p):
            v = self.forest_entry(v, p)
            if v is None:
                return self.layout.get(0, i)
        return self.layout.get(v.cnt, i)

    def h_parent(self, v: HNode) -> HNode:
        from .errors import NoParent
        q = self.parent(v)
        if q is None:
            raise NoParent(f"{v!r} is a root")
        return q

    def h_upgrade_secondary(self, u: HNode, i: int) -> int:
        """All depth-``i`` secondary endpoints below ``u`` become primary."""
        ends = self.h_enumerate(u, i, SECONDARY)
        for h in ends:
            e = h.edge
            self.retag(h, i, PRIMARY)
            if h is e.end_u:
                e.type_u = PRIMARY
            else:
                e.type_v = PRIMARY
            e.upgrades += 1
        self.stats["upgrades"] += len(ends)
        self.rebuild_counters(u, i)
        return len(ends)

    def h_promote_primary(self, u: HNode, i: int, edges: Iterable[EdgeRecord]) -> int:
        """Promote whole primary edges (both endpoints below ``u``) to depth ``i+1`` secondary."""
        count = 0
        for e in edges:
            if e.depth != i or e.type_u != PRIMARY or e.type_v != PRIMARY:
                raise ContractError(f"{e!r} is not a depth-{i} primary edge")
            if i >= self.d_max:
                raise ContractError("edges at the deepest level cannot be promoted")
            self.set_edge_class(e, i + 1, SECONDARY, SECONDARY)
            e.promotions += 1
            count += 1
        self.stats["promotions"] += count
        self.rebuild_counters(u, i)
        return count

    def h_promote_witness(self, u: HNode, i: int) -> int:
        """Every depth-``i`` witness edge inside ``u`` moves to depth ``i+1``."""
        seen = set()
        edges = []
        for h in self.h_enumerate(u, i, WITNESS):
            e = h.edge
            if id(e) in seen:
                edges.append(e)
            else:
                seen.add(id(e))
        for e in edges:
            self.set_edge_class(e, i + 1, WITNESS, WITNESS)
            e.promotions += 1
        self.stats["promotions"] += len(edges)
        return len(edges)

    def h_convert_to_witness(self, e: EdgeRecord) -> None:
        if e.is_witness:
            raise ContractError(f"{e!r} is already a witness edge")
        self.set_edge_class(e, e.depth, WITNESS, WITNESS)

    # ------------------------------------------------------ structural ops
    def merge_roots(self, a: HNode, b: HNode) -> HNode:
        """Merge two roots (no forest statuses live at depth 0)."""
        if a is b:
            return a
        if a.key != 0 or b.key != 0:
            raise ContractError("merge_roots needs two roots")
        if len(b.lt.leaves()) > len(a.lt.leaves()):
            a, b = b, a
        a.lt.merge(b.lt)
        a.weight += b.weight
        self.roots.discard(b)
        b.lt = None
        b.weight = 0
        return a

    def tear(self, x: HNode) -> None:
        """Replace every shortcut chain leaving ``x`` by local status on its children."""
        if x.torn:
            return
        sp = self.sp
        layout = self.layout
        prim = self.lctx.prim_bits
        if x.sc is not None and x.sc.down_bits:
            lt = x.lt

            def release(s) -> None:
                c = s.bottom
                bits = s.members
                for p in iter_bits(bits & prim & ~c.is_node):
                    w = sp.traverse_down(c, p)
                    i = p // 3 + 1
                    c.cnt = layout.set(c.cnt, i, layout.get(w.cnt, i))
                sp.clear_membership(s, bits)
                lt.add_status(c.leaf, bits, c.cnt)

            sp.dismantle(x, release)
        x.torn = True
        if x.lt is not None:
            self.sync_torn_counters(x)
        self.torn_nodes.append(x)

    def tear_path(self, x: HNode) -> list[HNode]:
        """Tear ``x`` and all its ancestors (top-down); returns them root first."""
        path = self.path_to_root(x)
        for y in path:
            self.tear(y)
        return path

    def merge_siblings(self, a: HNode, b: HNode) -> HNode:
        """Merge ``b`` into ``a``; both are children of the same torn node and ``a`` is torn."""
        par = self.parent(a)
        if par is None or self.parent(b) is not par:
            raise ContractError("merge_siblings needs two children of one node")
        if not a.torn or not par.torn:
            raise ContractError("merge_siblings needs a torn survivor under a torn parent")
        self.tear(b)
        lta, ltb = a.lt, b.lt
        sta, stb = lta.status, ltb.status
        both = sta & stb
        uniq = []
        for p in iter_bits(both & ~a.is_branching):
            uniq.append((lta.unique_status_leaf(p), p))
        for p in iter_bits(both & ~b.is_branching):
            uniq.append((ltb.unique_status_leaf(p), p))
        lp = par.lt
        lp.delete_child(a.leaf)
        lp.delete_child(b.leaf)
        lta.merge(ltb)
        a.weight += b.weight
        a.is_branching |= b.is_branching | both
        for c, p in uniq:
            c.is_node |= 1 << p
        self.sync_torn_counters(a)
        lp.add_child(a, lta.status & self.depth_mask[par.key], a.cnt)
        self.retally(par, both)
        a.is_node = lta.status & (a.is_branching | self.root_mask[a.key] | par.is_branching)
        self.fix_node_bits(par, both)
        self.refresh_torn_up(par)
        b.lt = None
        b.weight = 0
        b.torn = False
        b.is_node = b.is_branching = 0
        self.stats["merges"] += 1
        return a

    def split(self, par: HNode, s: HNode) -> HNode:
        """Move child ``s`` of torn ``par`` under a fresh torn sibling of ``par``; returns it."""
        if self.parent(s) is not par or not par.torn or not s.torn:
            raise ContractError("split needs a torn child of a torn node")
        lp = par.lt
        st = s.leaf.status
        lp.delete_child(s.leaf)
        n_node = HNode(par.key)
        n_node.weight = s.weight
        n_node.torn = True
        n_node.lt = LocalTree(self.lctx, n_node)
        n_node.lt.add_child(s, st, s.cnt)
        par.weight -= s.weight
        s.is_node = (s.is_node & ~st) | (st & (s.is_branching | self.leaf_bits(s)))
        self.retally(par, st)
        self.sync_torn_counters(n_node)
        self.torn_nodes.append(n_node)
        self.stats["splits"] += 1
        g = self.parent(par)
        if g is None:
            self.roots.add(n_node)
            return n_node
        lg = g.lt
        lg.reinsert(par.leaf, lp.status & self.depth_mask[g.key], par.cnt)
        lg.add_child(n_node, st & self.depth_mask[g.key], n_node.cnt)
        self.retally(g, st)
        # g may have started or stopped branching for some of these pairs
        self.fix_node_bits(g, st)
        n_node.is_node = st & (self.root_mask[n_node.key] | g.is_branching)
        self.fix_node_bits(par, st)
        self.refresh_torn_up(g)
        return n_node

    def rebuild(self, paths: Iterable[list[HNode]]) -> None:
        """Turn every torn node back into the shortcut representation, deepest first."""
        sp = self.sp
        seen = set()
        nodes = []
        for x in self.torn_nodes:
            if x.torn and id(x) not in seen:
                seen.add(id(x))
                nodes.append(x)
        nodes.sort(key=lambda y: -y.key)
        for x in nodes:
            lt = x.lt
            if lt is not None:
                single = lt.status & ~x.is_branching
                groups: dict[int, list] = {}
                for p in iter_bits(single):
                    c = lt.unique_status_leaf(p)
                    g = groups.get(id(c))
                    if g is None:
                        groups[id(c)] = [c, 1 << p]
                    else:
                        g[1] |= 1 << p
                for c, bits in groups.values():
                    lt.remove_status(c.leaf, bits)
                    sp.set_membership(sp.get_or_create(x, c), bits)
            x.torn = False
        self.torn_nodes.clear()
        for path in paths:
            sp.cover_path(path)

    # ------------------------------------------------- bracketed public ops
    def h_merge_promote(self, group: list[HNode]) -> HNode:
        """Merge sibling nodes (or roots) into ``group[0]`` and promote the witness edges inside."""
        if not group:
            raise ContractError("nothing to merge")
        a = group[0]
        if a.key == 0:
            for b in group[1:]:
                a = self.merge_roots(a, b)
            return a
        i = a.key
        for x in group:
            self.tear_path(x)
        for b in group[1:]:
            self.merge_siblings(a, b)
        self.h_promote_witness(a, i)
        self.rebuild([self.path_to_root(a)])
        return a

    def h_split(self, par: HNode, child: HNode) -> tuple[HNode, HNode]:
        """Give ``child`` a fresh parent beside ``par``; returns (new node, ``par``)."""
        if self.parent(child) is not par:
            raise ContractError(f"{child!r} is not a child of {par!r}")
        self.tear_path(child)
        fresh = self.split(par, child)
        self.rebuild([self.path_to_root(child), self.path_to_root(par)])
        return fresh, par

    def h_batch_sampling_test(self, v: HNode, i: int, k: int, rng):
        from .sampling import batch_sampling_test
        return [(o.endpoint, o.is_replacement) for o in batch_sampling_test(self, v, i, k, rng)]

    # ------------------------------------------------------------- audits
    def all_nodes(self) -> list[HNode]:
        """Every materialized node, parents before children."""
        out = []
        stack = sorted(self.roots, key=lambda r: self._min_vertex(r))
        stack.reverse()
        while stack:
            x = stack.pop()
            out.append(x)
            stack.extend(self.children(x))
        return out

    def _min_vertex(self, x: HNode) -> int:
        while x.vertex < 0:
            x = min(self.children(x), key=lambda c: c.weight)
        return x.vertex

    def audit(self, components_at, c_h: int = 4, snapshot: dict | None = None, allow_torn: bool = False) -> None:
        """Full audit of the hierarchy; raises InvariantViolation with the first failure.

        ``components_at(i)`` must return a vertex -> component-id mapping for the
        subgraph of edges with depth ``> i``.
        """
        try:
            self._audit(components_at, c_h, snapshot, allow_torn)
        except AssertionError as exc:
            raise InvariantViolation(str(exc)) from exc
        except CorruptionError as exc:
            raise InvariantViolation(f"corruption: {exc}") from exc

    def _audit(self, components_at, c_h, snapshot, allow_torn) -> None:
        sp = self.sp
        layout = self.layout
        nodes = self.all_nodes()
        kids: dict[int, list[HNode]] = {id(x): self.children(x) for x in nodes}
        parent: dict[int, HNode] = {}
        verts: dict[int, list[int]] = {}
        for x in reversed(nodes):
            ks = kids[id(x)]
            if x.vertex >= 0:
                if x.key != self.d_max or ks or x.lt is not None:
                    raise AssertionError(f"vertex node {x!r} is malformed")
                if self.vnodes[x.vertex] is not x:
                    raise AssertionError(f"vertex table does not point at {x!r}")
                verts[id(x)] = [x.vertex]
                if x.weight != 1:
                    raise AssertionError(f"vertex {x.vertex} has weight {x.weight}")
            else:
                if not ks or x.key >= self.d_max:
                    raise AssertionError(f"internal node {x!r} has no children or sits too deep")
                vs = []
                for c in ks:
                    if c.key != x.key + 1:
                        raise AssertionError(f"child {c!r} of {x!r} has the wrong depth")
                    parent[id(c)] = x
                    vs.extend(verts[id(c)])
                verts[id(x)] = vs
                if x.weight != sum(c.weight for c in ks):
                    raise AssertionError(f"weight of {x!r} is not the sum of its children")
                if x.lt.owner is not x:
                    raise AssertionError("local tree owner link broken")
            if x.weight > self.n / 2 ** x.key:
                raise AssertionError(f"weight property fails at {x!r}")
            if x.torn and not allow_torn:
                raise AssertionError(f"{x!r} is still torn")
        for r in self.roots:
            if r.key != 0 or r.leaf is not None:
                raise AssertionError("root registry holds a non-root")
        materialized = sum(1 for v in self.vnodes if v is not None)
        if sum(len(verts[id(r)]) for r in self.roots) != materialized:
            raise AssertionError("some vertex chains are not reachable from the roots")

        # components
        for i in range(self.d_max + 1 if components_at is not None else 0):
            comp = components_at(i)
            groups: dict[object, set[int]] = {}
            for v in range(self.n):
                groups.setdefault(comp[v], set()).add(v)
            for x in nodes:
                if x.key != i:
                    continue
                vs = verts[id(x)]
                if set(vs) != groups[comp[vs[0]]]:
                    raise AssertionError(f"depth-{i} node {x!r} does not match a component")
            for v in range(self.n):
                if self.vnodes[v] is None and len(groups[comp[v]]) != 1:
                    raise AssertionError(f"vertex {v} has edges but no chain")

        # local trees
        for x in nodes:
            if x.lt is not None:
                x.lt.audit(snapshot)

        # statuses
        truth = definitional_status(nodes, lambda y: kids[id(y)], self.leaf_bits, self.depth_mask, self.root_mask)
        for x in nodes:
            t, node, br = truth[id(x)]
            if x.is_node != node:
                raise AssertionError(f"node bits of {x!r}: {x.is_node:#x} != {node:#x}")
            if x.is_branching != br:
                raise AssertionError(f"branching bits of {x!r}: {x.is_branching:#x} != {br:#x}")
            for c in kids[id(x)]:
                tc = truth[id(c)][0] & self.depth_mask[x.key]
                want = tc if x.torn else tc & br
                if c.leaf.status != want:
                    raise AssertionError(f"local status of {c!r} under {x!r}: {c.leaf.status:#x} != {want:#x}")

        # chains and shortcuts
        live = set()
        for x in nodes:
            if x.torn:
                if x.sc is not None and not x.sc.empty():
                    raise AssertionError(f"torn {x!r} holds shortcuts")
                continue
            t = truth[id(x)][0]
            single = x.is_node & ~x.is_branching & ~self.leaf_bits(x)
            par = parent.get(id(x))
            if par is not None and par.torn:
                # implicit forest children of torn nodes keep their chains
                single |= t & self.depth_mask[par.key] & ~x.is_node
            for p in iter_bits(single):
                bit = 1 << p
                want = x
                while True:
                    nxt = [c for c in kids[id(want)] if truth[id(c)][0] & bit]
                    if len(nxt) != 1:
                        raise AssertionError(f"single-child walk from {x!r} for pair {p} is not unique")
                    want = nxt[0]
                    if want.is_node & bit:
                        break
                ch = sp.chain(x, p)
                pos = x
                for s in ch:
                    if s.top is not pos:
                        raise AssertionError("chain is not contiguous")
                    y = s.bottom
                    while y is not s.top:
                        if not truth[id(y)][0] & bit:
                            raise AssertionError("chain leaves the forest")
                        if y is not s.bottom and y.is_node & bit:
                            raise AssertionError("chain skips over a forest node")
                        y = parent.get(id(y))
                        if y is None:
                            raise AssertionError("chain shortcut does not join an ancestor")
                    live.add((id(s), p))
                    pos = s.bottom
                if pos is not want:
                    raise AssertionError(f"chain from {x!r} for pair {p} ends at {pos!r}, expected {want!r}")
                if p % 3 == 1:
                    i = p // 3 + 1
                    if layout.get(x.cnt, i) != layout.get(want.cnt, i):
                        raise AssertionError(f"single-child counter of {x!r} differs from its forest child")
        for x in nodes:
            sp.audit_node(x)
            for s in sp.down_shortcuts(x):
                for p in iter_bits(s.members):
                    if (id(s), p) not in live:
                        raise AssertionError(f"stray membership of pair {p} on {s!r}")
                for k in range(s.top.key + 1, s.bottom.key):
                    if lsb_index(k + 1) >= s.power:
                        raise AssertionError(f"{s!r} spans a node with a larger power")
        sp.audit_refs(nodes)
        for x in nodes:
            if x.vertex < 0:
                continue
            path = []
            y = x
            while y is not None:
                path.append(y)
                y = parent.get(id(y))
            on_path = {id(y) for y in path}
            scs = []
            for y in path:
                for s in sp.up_shortcuts(y):
                    if id(s.top) in on_path:
                        scs.append((s.top.key, s.bottom.key))
            for a in range(len(scs)):
                for b in range(a + 1, len(scs)):
                    if crosses(scs[a], scs[b]):
                        raise AssertionError(f"shortcuts {scs[a]} and {scs[b]} cross")

        # counters
        lg = math.log2(self.n) if self.n > 1 else 1.0
        factor = 1.0 - lg ** -2 if lg > 1 else 0.0
        exact: dict[int, list[int]] = {}
        for x in reversed(nodes):
            if x.vertex >= 0:
                exact[id(x)] = [self.store.size(x.vertex, i, PRIMARY) for i in range(1, self.d_max + 1)]
            else:
                acc = [0] * self.d_max
                for c in kids[id(x)]:
                    for k, val in enumerate(exact[id(c)]):
                        acc[k] += val
                exact[id(x)] = acc
        for x in nodes:
            valid = x.is_node
            par = parent.get(id(x))
            if par is not None and par.torn:
                valid |= truth[id(x)][0]
            for p in iter_bits(valid & self.lctx.prim_bits):
                i = p // 3 + 1
                c_true = exact[id(x)][i - 1]
                c_hat = decode(layout.get(x.cnt, i))
                h_val = (self.d_max - x.key) * c_h * self.loglog + int(math.floor(math.log2(x.weight)))
                if c_hat > c_true:
                    raise AssertionError(f"counter {i} of {x!r} is {c_hat}, above the exact {c_true}")
                if c_hat < factor ** (h_val + 1) * c_true - 1e-9:
                    raise AssertionError(
                        f"{PRECISION_PREFIX} counter {i} of {x!r} is {c_hat}, exact {c_true}, "
                        f"bound exponent {h_val + 1}")
                if x.is_branching & (1 << p) or (x.torn and x.lt is not None):
                    if layout.get(x.lt.cnt, i) != layout.get(x.cnt, i):
                        raise AssertionError(f"counter {i} of {x!r} differs from its local root")
            for c in kids[id(x)]:
                mask = self.lctx.cnt_mask(c.leaf.status)
                if c.leaf.cnt != c.cnt & mask:
                    raise AssertionError(f"local leaf counters of {c!r} are stale")
