"""Per-(depth, type) forests overlaid on the hierarchy.

For a pair ``p = (i, t)`` the forest ``T_p`` consists of the hierarchy nodes at
depth ``>= i`` that have an ``(i, t)``-leaf below them; a leaf is a vertex whose
endpoint store for ``p`` is nonempty.  Its explicit nodes are the leaves, the
depth-``i`` roots, nodes with two or more forest children (branching) and the
children of branching nodes.

Representation, per pair:

* ``is_node`` / ``is_branching`` bitmaps on every hierarchy node, kept equal to
  the definition above;
* a branching node's forest children carry the pair as *local status* on their
  leaf in the node's local tree;
* a non-branching node reaches its unique forest child through a chain of
  shortcuts (see :mod:`dynconn.shortcuts`).

During a deletion cascade some nodes are *torn*: they hold no shortcuts and
represent every forest child by local status instead.  Torn nodes always form
an ancestor-closed set, and a forest child of a torn node keeps valid counters
even when it is not an explicit node.

Counter lane ``i`` of a node is valid when the node is an ``(i, primary)``-node
(or a forest child of a torn node).  A branching or torn node copies the lane
from its local-tree root; a single-child node copies it from its forest child.
"""

from __future__ import annotations

from .errors import ContractError, CorruptionError, NoParent
from .graph_model import EndpointType, iter_bits, pair_index
from .local_trees import LocalTree


class ForestOps:
    """Forest maintenance shared by :class:`dynconn.hierarchy.Hierarchy`.

    Expects ``sp`` (hierarchy shortcut space), ``layout``, ``store`` (a LeafStore),
    ``depth_mask`` and ``root_mask`` on the instance.
    """

    # ---------------------------------------------------------- navigation
    @staticmethod
    def parent(x):
        """Hierarchy parent through the local tree, or None for a root."""
        leaf = x.leaf
        if leaf is None:
            return None
        return LocalTree.leaf_tree(leaf).owner

    def leaf_bits(self, x) -> int:
        return self.store.status_bits(x.vertex) if x.vertex >= 0 else 0

    def lane(self, x, i: int):
        return self.layout.get(x.cnt, i)

    def _copy_lane(self, dst, src, i: int) -> None:
        dst.cnt = self.layout.set(dst.cnt, i, self.layout.get(src.cnt, i))

    def descend(self, c, p: int):
        """First forest node at or below ``c``, which must lie in ``T_p``."""
        bit = 1 << p
        sp = self.sp
        while True:
            if c.is_node & bit:
                return c
            if sp.get_down(c, p) is not None:
                return sp.traverse_down(c, p)
            lt = c.lt
            if lt is None or not lt.status & bit:
                raise CorruptionError(f"{c!r} is outside the forest for pair {p}")
            nxt = lt.unique_status_leaf(p)
            if nxt is None:
                raise CorruptionError(f"implicit {c!r} has several forest children")
            c = nxt

    def forest_parent(self, v, p: int):
        """Nearest forest-node ancestor of ``v`` for pair ``p``."""
        depth = p // 3 + 1
        if v.key <= depth:
            raise NoParent(f"{v!r} is a root of the forest for pair {p}")
        bit = 1 << p
        sp = self.sp
        y = v
        while True:
            s = sp.get_up(y, p)
            if s is not None:
                y = s.top
            else:
                y = self.parent(y)
                if y is None:
                    raise CorruptionError("forest parent climb fell off the hierarchy")
            if y.is_node & bit:
                return y

    def forest_children(self, v, p: int) -> list:
        bit = 1 << p
        lt = v.lt
        if lt is not None and lt.status & bit:
            return [self.descend(c, p) for c in lt.enumerate_status(p)]
        if self.sp.get_down(v, p) is not None:
            return [self.sp.traverse_down(v, p)]
        return []

    def forest_root(self, x, p: int):
        """Depth-``i`` ancestor of forest node ``x`` via forest-parent hops."""
        depth = p // 3 + 1
        while x.key > depth:
            x = self.forest_parent(x, p)
        return x

    def forest_leaves(self, v, p: int):
        """Vertices below ``v`` holding endpoints of pair ``p`` (``v`` must be a forest node)."""
        bit = 1 << p
        if not v.is_node & bit:
            return
        stack = [v]
        while stack:
            x = stack.pop()
            if x.vertex >= 0:
                yield x
                continue
            stack.extend(self.forest_children(x, p))

    # ------------------------------------------------------------ counters
    def refresh_up(self, y, p: int) -> None:
        """Lane of ``y`` has changed; push it upward until nothing changes."""
        depth = p // 3 + 1
        i = depth
        bit = 1 << p
        sp = self.sp
        layout = self.layout
        while y.key > depth:
            s = sp.get_up(y, p)
            if s is not None:
                z = s.top
                while not z.is_node & bit:
                    s = sp.get_up(z, p)
                    if s is None:
                        # chain starts at an implicit child of a torn node
                        break
                    z = s.top
                old = layout.get(z.cnt, i)
                new = layout.get(y.cnt, i)
                if old == new:
                    return
                z.cnt = layout.set(z.cnt, i, new)
                y = z
                continue
            q = self.parent(y)
            lt = q.lt
            lt.set_counters(y.leaf, y.cnt)
            old = layout.get(q.cnt, i)
            new = layout.get(lt.cnt, i)
            if old == new:
                return
            q.cnt = layout.set(q.cnt, i, new)
            y = q

    def set_leaf_count(self, x, i: int, count: int) -> None:
        """Exact primary endpoint count of vertex node ``x`` changed (structure unchanged)."""
        layout = self.layout
        old = layout.get(x.cnt, i)
        x.cnt = layout.set_count(x.cnt, i, count)
        if layout.get(x.cnt, i) != old and count:
            self.refresh_up(x, pair_index(i, EndpointType.PRIMARY))

    def rebuild_counters(self, root, i: int) -> None:
        """Recompute every lane-``i`` counter of the primary forest below ``root`` from exact counts."""
        p = pair_index(i, EndpointType.PRIMARY)
        bit = 1 << p
        layout = self.layout
        if not root.is_node & bit:
            return
        # post-order over forest positions: (node, expanded?)
        stack = [(root, False)]
        while stack:
            x, done = stack.pop()
            if x.vertex >= 0:
                x.cnt = layout.set_count(x.cnt, i, self.store.size(x.vertex, i, EndpointType.PRIMARY))
                continue
            lt = x.lt
            local = lt is not None and lt.status & bit
            if not done:
                stack.append((x, True))
                if local:
                    for c in lt.enumerate_status(p):
                        stack.append((c, False))
                else:
                    stack.append((self._chain_child(x, p), False))
                continue
            if local:
                for c in lt.enumerate_status(p):
                    lt.set_counters(c.leaf, c.cnt)
                x.cnt = layout.set(x.cnt, i, layout.get(lt.cnt, i))
            else:
                x.cnt = layout.set(x.cnt, i, layout.get(self._chain_child(x, p).cnt, i))

    def _chain_child(self, x, p: int):
        if self.sp.get_down(x, p) is None:
            raise CorruptionError(f"{x!r} has no forest child for pair {p}")
        return self.sp.traverse_down(x, p)

    # ----------------------------------------------------------- add leaf
    def add_leaf(self, x, p: int) -> None:
        """Give vertex node ``x`` leaf status for pair ``p`` (its store just became nonempty)."""
        bit = 1 << p
        depth = p // 3 + 1
        prim = p % 3 == 1
        i = depth
        sp = self.sp
        layout = self.layout
        if x.is_node & bit:
            raise ContractError(f"{x!r} already is a leaf for pair {p}")
        x.is_node |= bit
        if x.key == depth:
            return
        path = [x]
        y = x
        mode = "root"
        while True:
            q = self.parent(y)
            path.append(q)
            if q.torn:
                if q.lt.status & bit:
                    mode = "local"
                    break
            elif sp.get_down(q, p) is not None:
                mode = "search"
                break
            elif q.is_node & bit:
                mode = "local"
                break
            if q.key == depth:
                break
            y = q
        top = path[-1]
        rec = {n.key: n for n in path}
        lane_x = layout.get(x.cnt, i) if prim else None

        if mode == "search":
            s = sp.get_down(top, p)
            while True:
                if rec.get(s.bottom.key) is s.bottom:
                    raise CorruptionError("branch search met a chain that stays on the path")
                if s.covered is None:
                    break
                a, b2 = sp.uncover(s, p)
                s = b2 if rec.get(a.bottom.key) is a.bottom else a
            b = s.top
            c = s.bottom
            if prim and not c.is_node & bit:
                w = sp.traverse_down(c, p)
                c.cnt = layout.set(c.cnt, i, layout.get(w.cnt, i))
            sp.clear_membership(s, bit)
            c.is_node |= bit
            b.lt.add_status(c.leaf, bit, c.cnt)
            top = b
            mode = "local"
        elif mode == "local" and top.torn and not top.is_branching & bit:
            only = top.lt.unique_status_leaf(p)
            if only is not None:
                only.is_node |= bit

        # walk the new chain from the top down to x
        below = [n for n in path if n.key > top.key]
        below.reverse()
        parent = top
        for k, c in enumerate(below):
            if prim and c is not x:
                c.cnt = layout.set(c.cnt, i, lane_x)
            if parent is top and mode == "local":
                c.is_node |= bit
                parent.lt.add_status(c.leaf, bit, c.cnt)
                parent.is_node |= bit
                parent.is_branching |= bit
            elif parent.torn:
                parent.lt.add_status(c.leaf, bit, c.cnt)
            else:
                sp.set_membership(sp.get_or_create(parent, c), bit)
            parent = c
        if mode == "root":
            top.is_node |= bit
        # cover the fresh clean part of the chain
        clean = [n for n in [top] + below if not n.torn]
        if len(clean) >= 3:
            sp.cover_path(clean)
        if prim:
            if top.torn or top.is_branching & bit:
                top.cnt = layout.set(top.cnt, i, layout.get(top.lt.cnt, i))
            else:
                top.cnt = layout.set(top.cnt, i, lane_x)
            self.refresh_up(top, p)

    # -------------------------------------------------------- remove leaf
    def remove_leaf(self, x, p: int) -> None:
        """Drop leaf status ``p`` from vertex node ``x`` (its store just became empty)."""
        bit = 1 << p
        depth = p // 3 + 1
        prim = p % 3 == 1
        i = depth
        sp = self.sp
        layout = self.layout
        if not x.is_node & bit:
            raise ContractError(f"{x!r} is not a leaf for pair {p}")
        y = x
        while True:
            y.is_node &= ~bit
            y.is_branching &= ~bit
            if prim:
                y.cnt = layout.set_count(y.cnt, i, 0)
            if y.key == depth:
                return
            s = sp.get_up(y, p)
            if s is not None:
                while True:
                    z = s.top
                    sp.clear_membership(s, bit)
                    if z.is_node & bit:
                        break
                    s = sp.get_up(z, p)
                    if s is None:
                        break
                y = z
                continue
            q = self.parent(y)
            lt = q.lt
            if not y.leaf.status & bit:
                raise CorruptionError(f"{y!r} is neither on a chain nor a local status child")
            lt.remove_status(y.leaf, bit)
            if not lt.status & bit:
                y = q
                continue
            c = lt.unique_status_leaf(p)
            if c is None:
                if prim:
                    q.cnt = layout.set(q.cnt, i, layout.get(lt.cnt, i))
                    self.refresh_up(q, p)
                return
            q.is_branching &= ~bit
            if not (c.is_branching & bit or self.leaf_bits(c) & bit):
                c.is_node &= ~bit
            if not q.torn:
                lt.remove_status(c.leaf, bit)
                sp.set_membership(sp.get_or_create(q, c), bit)
            if q.key > depth:
                if sp.get_up(q, p) is not None:
                    q.is_node &= ~bit
                else:
                    gp = self.parent(q)
                    if not gp.is_branching & bit:
                        q.is_node &= ~bit
            if prim:
                q.cnt = layout.set(q.cnt, i, layout.get(c.cnt, i))
                self.refresh_up(q, p)
            return

    # ------------------------------------------------------------ torn nodes
    def retally(self, x, pairs: int) -> None:
        """Recompute branching bits of torn ``x`` for ``pairs`` and fix its children's node bits."""
        lt = x.lt
        old = x.is_branching
        for p in iter_bits(pairs & self.depth_mask[x.key]):
            bit = 1 << p
            if not lt.status & bit:
                x.is_branching &= ~bit
                x.is_node &= ~bit
                continue
            u = lt.unique_status_leaf(p)
            if u is None:
                if not old & bit:
                    x.is_branching |= bit
                    for c in lt.enumerate_status(p):
                        c.is_node |= bit
            elif old & bit:
                x.is_branching &= ~bit
                if not (u.is_branching & bit or self.leaf_bits(u) & bit):
                    u.is_node &= ~bit
        self.sync_torn_counters(x)

    def sync_torn_counters(self, x) -> None:
        lt = x.lt
        mask = lt.ctx.cnt_mask(lt.status)
        x.cnt = (x.cnt & ~mask) | (lt.cnt & mask)

    def fix_node_bits(self, x, pairs: int) -> None:
        """Set the node bits of torn ``x`` for ``pairs`` from the definition."""
        lt = x.lt
        pairs &= self.depth_mask[x.key]
        in_t = lt.status & pairs
        node = in_t & (x.is_branching | self.root_mask[x.key])
        rest = in_t & ~node
        if rest:
            par = self.parent(x)
            if par is not None:
                node |= rest & par.is_branching
        x.is_node = (x.is_node & ~pairs) | node

    def refresh_torn_up(self, x) -> None:
        """Re-read counters of the torn ancestors of ``x`` (which is torn) after a local-tree change."""
        layout = self.layout
        self.sync_torn_counters(x)
        while x.leaf is not None:
            q = self.parent(x)
            lt = q.lt
            before = q.cnt
            lt.set_counters(x.leaf, x.cnt)
            self.sync_torn_counters(q)
            if q.cnt == before and q.torn:
                return
            x = q
        return


# ---------------------------------------------------------------- public API
def itf_parent(h, v, i: int, t: EndpointType):
    return h.forest_parent(v, pair_index(i, t))


def itf_children(h, v, i: int, t: EndpointType) -> list:
    return h.forest_children(v, pair_index(i, t))


def itf_add_leaf(h, x, i: int, t: EndpointType) -> None:
    h.add_leaf(x, pair_index(i, t))


def itf_remove_leaf(h, x, i: int, t: EndpointType) -> None:
    h.remove_leaf(x, pair_index(i, t))


def itf_bulk_retag(h, root, s_minus, s_plus, i: int, t: EndpointType, i2: int, t2: EndpointType) -> None:
    """Leaves in ``s_plus`` gain ``(i2, t2)`` status, leaves in ``s_minus`` lose ``(i, t)`` status.

    Additions run first, in depth-first order of the current forest, so that
    consecutive insertions share most of their climb.
    """
    if i2 not in (i, i + 1):
        raise ContractError(f"retag target depth {i2} must be {i} or {i + 1}")
    p = pair_index(i, t)
    p2 = pair_index(i2, t2)
    order = {id(x): k for k, x in enumerate(h.forest_leaves(root, p))}
    for x in sorted(s_plus, key=lambda n: order.get(id(n), len(order))):
        if not x.is_node & (1 << p2):
            h.add_leaf(x, p2)
    for x in s_minus:
        if x.is_node & (1 << p):
            h.remove_leaf(x, p)


def definitional_status(nodes, children_of, leaf_bits_of, depth_mask, root_mask):
    """Brute-force forest membership, node and branching bits for every node.

    ``nodes`` must be listed parents-before-children.  Returns a dict
    ``id(node) -> (in_forest, is_node, is_branching)``.
    """
    in_t: dict[int, int] = {}
    for x in reversed(nodes):
        kids = children_of(x)
        bits = leaf_bits_of(x)
        for c in kids:
            bits |= in_t[id(c)]
        in_t[id(x)] = bits & depth_mask[x.key]
    out = {}
    par_branch: dict[int, int] = {}
    for x in nodes:
        kids = children_of(x)
        seen = 0
        branch = 0
        for c in kids:
            b = in_t[id(c)] & depth_mask[x.key]
            branch |= seen & b
            seen |= b
        t = in_t[id(x)]
        pb = par_branch.get(id(x), 0)
        node = t & (branch | leaf_bits_of(x) | root_mask[x.key] | pb)
        out[id(x)] = (t, node, branch & t)
        for c in kids:
            par_branch[id(c)] = branch
    return out
