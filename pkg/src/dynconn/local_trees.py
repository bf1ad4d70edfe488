"""Local trees: the binary structure that connects a hierarchy node to its children.

Four layers, from the children upward:

* buffer tree: a mergeable binary leaf tree that takes new leaves;
* bottom trees: frozen buffers (shape fixed, leaves may only leave);
* middle trees: bottom roots joined pairwise by rank ``floor(log2 weight)``;
* top tree: a small binary tree over the middle roots.

Buffer, bottom and top nodes keep the union of their leaves' local status bits
and the lane-wise ``boxplus`` of their children's counters.  Middle nodes instead
keep node/branching bitmaps and local shortcut chains, the same scheme the
hierarchy uses, so a middle tree is walked in time proportional to the number of
branching nodes rather than to its height.

A counter lane of a buffer, bottom or top node is nonzero only when the node has
the matching local primary status, so adding two children's packed arrays always
yields the right value for every lane at once.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .counters import CounterLayout, packed_add
from .errors import ContractError, CorruptionError, EmptyPool, InvariantViolation
from .shortcuts import ShortcutSpace


@dataclass(frozen=True)
class LocalTreeConfig:
    """Size thresholds.  ``buffer_limit``: leaves that freeze a buffer into a bottom tree.
    ``top_limit``: middle roots that trigger joining."""

    buffer_limit: int
    top_limit: int

    @classmethod
    def for_n(cls, n: int, alpha: int = 5) -> LocalTreeConfig:
        lg = max(1.0, math.log2(max(n, 2)))
        return cls(buffer_limit=max(1, math.ceil(lg ** alpha)), top_limit=max(2, math.ceil(2 * lg)))


class LLeaf:
    """Local leaf for one hierarchy child."""

    __slots__ = ("child", "parent", "status", "cnt", "weight")

    def __init__(self, child, weight: int) -> None:
        self.child = child
        self.parent = None
        self.status = 0
        self.cnt = 0
        self.weight = weight

    def __repr__(self) -> str:
        return f"LLeaf({self.child!r})"


class BufNode:
    """Internal node of a buffer tree or of the top tree."""

    __slots__ = ("parent", "left", "right", "status", "cnt", "size", "h")

    def __init__(self, left, right) -> None:
        self.parent = None
        self.left = left
        self.right = right
        left.parent = self
        right.parent = self
        self.status = 0
        self.cnt = 0
        self.size = 0
        self.h = 0


class BotNode:
    """Bottom-tree node.  A bottom root is also a middle leaf and then uses ``key``/``sc``."""

    __slots__ = ("parent", "left", "right", "status", "cnt", "weight", "is_root", "key", "sc")

    is_branching = 0

    def __init__(self) -> None:
        self.parent = None
        self.left = None
        self.right = None
        self.status = 0
        self.cnt = 0
        self.weight = 0
        self.is_root = False
        self.key = 0
        self.sc = None

    @property
    def is_node(self) -> int:
        # a bottom root with some status is always a local node
        return self.status

    def __repr__(self) -> str:
        return f"BotNode(w={self.weight}, rank={self.key})"


class MidNode:
    __slots__ = ("parent", "left", "right", "key", "sc", "is_node", "is_branching", "cnt", "weight")

    def __init__(self, left, right, rank: int) -> None:
        self.parent = None
        self.left = left
        self.right = right
        left.parent = self
        right.parent = self
        self.key = rank
        self.sc = None
        self.is_node = 0
        self.is_branching = 0
        self.cnt = 0
        self.weight = left.weight + right.weight

    @property
    def status(self) -> int:
        # only meaningful at a middle root, where every pair in the tree is a node
        return self.is_node

    def __repr__(self) -> str:
        return f"MidNode(w={self.weight}, rank={self.key})"


def _rank(w: int) -> int:
    return max(0, w.bit_length() - 1)


def _size(x) -> int:
    return x.size if isinstance(x, BufNode) else 1


def _height(x) -> int:
    return x.h if isinstance(x, BufNode) else 0


class LocalContext:
    """Parameters shared by every local tree of one engine."""

    def __init__(self, layout: CounterLayout, pairs: int, loglog: int, config: LocalTreeConfig) -> None:
        self.layout = layout
        self.config = config
        self.space = ShortcutSpace(pairs, loglog)
        self.slots = layout.slots
        self.all_bits = (1 << (pairs + 1)) - 1
        self.prim_bits = sum(1 << (3 * (i - 1) + 1) for i in range(1, layout.slots + 1))
        self._mask_cache: dict[int, int] = {}
        self.hops = 0

    def cnt_mask(self, status: int) -> int:
        """Counter lanes matching the primary pairs present in ``status``."""
        key = status & self.prim_bits
        m = self._mask_cache.get(key)
        if m is None:
            slots = 0
            x = key
            while x:
                low = x & -x
                slots |= 1 << ((low.bit_length() - 1) // 3)
                x ^= low
            m = self.layout.mask_for_slots(slots)
            if len(self._mask_cache) < 1 << 16:
                self._mask_cache[key] = m
        return m


class LocalTree:
    """The local tree of one hierarchy node (``owner``)."""

    __slots__ = ("ctx", "owner", "buf", "top", "status", "cnt", "nbuf", "ntop")

    def __init__(self, ctx: LocalContext, owner) -> None:
        self.ctx = ctx
        self.owner = owner
        self.buf = None
        self.top = None
        self.status = 0
        self.cnt = 0
        self.nbuf = 0
        self.ntop = 0

    # ------------------------------------------------------------- plumbing
    def _pull_root(self) -> None:
        st = 0
        c = 0
        if self.buf is not None:
            st = self.buf.status
            c = self.buf.cnt
        if self.top is not None:
            st |= self.top.status
            c = packed_add(c, self.top.cnt, self.ctx.layout)
        self.status = st
        self.cnt = c

    def _pull_up(self, x) -> None:
        """Recompute status/counters/sizes of buffer, top or bottom ancestors of ``x``."""
        layout = self.ctx.layout
        while True:
            if x is self:
                self._pull_root()
                return
            if isinstance(x, BufNode):
                l, r = x.left, x.right
                x.status = l.status | r.status
                x.cnt = packed_add(l.cnt, r.cnt, layout)
                x.size = _size(l) + _size(r)
                x.h = 1 + max(_height(l), _height(r))
            elif isinstance(x, BotNode):
                l, r = x.left, x.right
                st = 0
                c = 0
                w = 0
                for k in (l, r):
                    if k is not None:
                        st |= k.status
                        c = packed_add(c, k.cnt, layout)
                        w += k.weight
                x.status = st
                x.cnt = c
                x.weight = w
                if x.is_root:
                    return
            elif isinstance(x, MidNode):
                return
            x = x.parent

    @staticmethod
    def _replace_child(parent, old, new) -> None:
        if parent.left is old:
            parent.left = new
        elif parent.right is old:
            parent.right = new
        else:
            raise CorruptionError("child link missing")
        if new is not None:
            new.parent = parent

    # --------------------------------------------------------- buffer layer
    def _attach_sub(self, root_attr: str, sub, sub_size: int):
        """Attach subtree ``sub`` into the buffer or top tree by size-guided descent."""
        cur = getattr(self, root_attr)
        if cur is None:
            setattr(self, root_attr, sub)
            sub.parent = self
            return sub.parent
        x = cur
        while isinstance(x, BufNode) and x.size > sub_size:
            x = x.left if _size(x.left) <= _size(x.right) else x.right
        par = x.parent
        node = BufNode(x, sub)
        if par is self:
            setattr(self, root_attr, node)
            node.parent = self
        else:
            self._replace_child(par, x, node)
        return node

    def _detach_sub(self, root_attr: str, x) -> None:
        par = x.parent
        x.parent = None
        if par is self:
            setattr(self, root_attr, None)
            self._pull_root()
            return
        gp = par.parent
        sib = par.left if par.right is x else par.right
        if gp is self:
            setattr(self, root_attr, sib)
            sib.parent = self
            self._pull_root()
        else:
            self._replace_child(gp, par, sib)
            self._pull_up(gp)

    def _buffer_insert(self, leaf: LLeaf) -> None:
        node = self._attach_sub("buf", leaf, 1)
        self.nbuf += 1
        self._pull_up(node)
        b = self.buf
        if isinstance(b, BufNode) and b.h > 2 * b.size.bit_length() + 2:
            self._rebuild_buffer()
        if self.nbuf >= self.ctx.config.buffer_limit:
            self._freeze_buffer()

    def _collect(self, x, out: list) -> list:
        stack = [x]
        while stack:
            y = stack.pop()
            if isinstance(y, BufNode):
                stack.append(y.right)
                stack.append(y.left)
            else:
                out.append(y)
        return out

    def _balanced(self, items: list):
        if len(items) == 1:
            return items[0]
        mid = len(items) // 2
        node = BufNode(self._balanced(items[:mid]), self._balanced(items[mid:]))
        l, r = node.left, node.right
        node.status = l.status | r.status
        node.cnt = packed_add(l.cnt, r.cnt, self.ctx.layout)
        node.size = _size(l) + _size(r)
        node.h = 1 + max(_height(l), _height(r))
        return node

    def _rebuild_buffer(self) -> None:
        leaves = self._collect(self.buf, [])
        self.buf = self._balanced(leaves)
        self.buf.parent = self
        self._pull_root()

    def _freeze_buffer(self) -> None:
        """Turn the whole buffer into a bottom tree and hand its root to the top tree."""
        leaves = self._collect(self.buf, [])
        self.buf = None
        self.nbuf = 0
        root = self._build_bottom(leaves)
        root.is_root = True
        root.key = _rank(root.weight)
        self._pull_root()
        self._top_insert(root)

    def _build_bottom(self, leaves: list) -> BotNode:
        layout = self.ctx.layout
        node = BotNode()
        if len(leaves) == 1:
            kids = [leaves[0], None]
        else:
            mid = len(leaves) // 2
            kids = [self._build_bottom(leaves[:mid]) if mid > 1 else leaves[0],
                    self._build_bottom(leaves[mid:]) if len(leaves) - mid > 1 else leaves[mid]]
        node.left, node.right = kids
        st = 0
        c = 0
        w = 0
        for k in kids:
            if k is not None:
                k.parent = node
                st |= k.status
                c = packed_add(c, k.cnt, layout)
                w += k.weight
        node.status = st
        node.cnt = c
        node.weight = w
        return node

    # ------------------------------------------------------------ top layer
    def _top_insert(self, root) -> None:
        node = self._attach_sub("top", root, 1)
        self.ntop += 1
        self._pull_up(node if node is not self else self)
        if self.ntop >= self.ctx.config.top_limit:
            self._join_middle()

    def _top_remove(self, root) -> None:
        self._detach_sub("top", root)
        self.ntop -= 1

    def middle_roots(self) -> list:
        return self._collect(self.top, []) if self.top is not None else []

    def _join_middle(self) -> None:
        roots = self.middle_roots()
        by_rank: dict[int, list] = {}
        for r in roots:
            by_rank.setdefault(r.key, []).append(r)
        out = []
        rank = min(by_rank) if by_rank else 0
        top_rank = max(by_rank) if by_rank else 0
        while rank <= top_rank or rank in by_rank:
            group = by_rank.pop(rank, [])
            while len(group) >= 2:
                a = group.pop()
                b = group.pop()
                by_rank.setdefault(rank + 1, []).append(self._mid_join(a, b))
                top_rank = max(top_rank, rank + 1)
            out.extend(group)
            rank += 1
        for r in out:
            r.parent = None
        self.top = self._balanced(out) if out else None
        if self.top is not None:
            self.top.parent = self
        self.ntop = len(out)
        self._pull_root()

    def _mid_join(self, a, b) -> MidNode:
        sp = self.ctx.space
        layout = self.ctx.layout
        m = MidNode(a, b, a.key + 1)
        ta = a.status
        tb = b.status
        m.is_node = ta | tb
        m.is_branching = ta & tb
        m.cnt = packed_add(a.cnt & self.ctx.cnt_mask(ta), b.cnt & self.ctx.cnt_mask(tb), layout)
        for child, only in ((a, ta & ~tb), (b, tb & ~ta)):
            if only:
                s = sp.get_or_create(m, child)
                sp.set_membership(s, only)
                if isinstance(child, MidNode):
                    gone = only & ~child.is_branching
                    if gone:
                        child.is_node &= ~gone
                        child.cnt &= ~self.ctx.cnt_mask(gone)
        return m

    # --------------------------------------------------------- middle layer
    def _is_mid_root(self, x) -> bool:
        p = x.parent
        return not isinstance(p, MidNode)

    def _top_refresh(self, middle_root) -> None:
        self._pull_up(middle_root.parent)

    def _mid_counters_up(self, x, slot_bits: int) -> None:
        """Recompute counters of local primary nodes above ``x`` for the given slots, then the top path."""
        sp = self.ctx.space
        layout = self.ctx.layout
        slots = []
        s = slot_bits
        while s:
            low = s & -s
            slots.append(low.bit_length())
            s ^= low
        z = x
        while isinstance(z.parent, MidNode):
            z = z.parent
            for i in slots:
                p = 3 * (i - 1) + 1
                bit = 1 << p
                if z.is_branching & bit:
                    val = layout.get_value(z.left.cnt, i) + layout.get_value(z.right.cnt, i)
                    z.cnt = layout.set_count(z.cnt, i, val)
                elif z.is_node & bit:
                    c = sp.traverse_down(z, p)
                    z.cnt = layout.set(z.cnt, i, layout.get(c.cnt, i))
        self._top_refresh(z)

    def _mid_detach(self, x, p: int) -> None:
        """Local node ``x`` has no status ``p`` left below it; repair the middle tree."""
        sp = self.ctx.space
        layout = self.ctx.layout
        bit = 1 << p
        prim = p % 3 == 1
        slot = p // 3 + 1
        while True:
            if isinstance(x, MidNode):
                x.is_node &= ~bit
                x.is_branching &= ~bit
                if prim:
                    x.cnt = layout.set_count(x.cnt, slot, 0)
            if self._is_mid_root(x):
                self._top_refresh(x)
                return
            s = sp.get_up(x, p)
            if s is not None:
                while True:
                    z = s.top
                    sp.clear_membership(s, bit)
                    if z.is_node & bit:
                        break
                    s = sp.get_up(z, p)
                    if s is None:
                        raise CorruptionError("broken local chain while removing status")
                x = z
                continue
            q = x.parent
            if not q.is_branching & bit:
                raise CorruptionError("local status child of a non-branching middle node")
            q.is_branching &= ~bit
            c = q.right if q.left is x else q.left
            s2 = sp.get_or_create(q, c)
            sp.set_membership(s2, bit)
            val = layout.get(c.cnt, slot) if prim else None
            if isinstance(c, MidNode) and not c.is_branching & bit:
                c.is_node &= ~bit
                if prim:
                    c.cnt = layout.set_count(c.cnt, slot, 0)
            if self._is_mid_root(q) or q.parent.is_branching & bit:
                if prim:
                    q.cnt = layout.set(q.cnt, slot, val)
            else:
                q.is_node &= ~bit
                if prim:
                    q.cnt = layout.set_count(q.cnt, slot, 0)
            if prim:
                self._mid_counters_up(q, 1 << (slot - 1))
            else:
                z = q
                while isinstance(z.parent, MidNode):
                    z = z.parent
                self._top_refresh(z)
            return

    def _remove_middle_path(self, xb: BotNode) -> None:
        """Take apart the middle path above ``xb``; surviving subtrees become middle roots."""
        sp = self.ctx.space
        layout = self.ctx.layout
        path = [xb]
        while isinstance(path[-1].parent, MidNode):
            path.append(path[-1].parent)
        root = path[-1]
        self._top_remove(root)
        for x in reversed(path):
            sp.dismantle(x, lambda s: sp.clear_membership(s, s.members))
        new_roots = []
        for x in path[1:]:
            for k in (x.left, x.right):
                if k is not None and k not in path:
                    new_roots.append(k)
        for r in new_roots:
            r.parent = None
            if isinstance(r, MidNode):
                gained = sp.has_down(r, ~r.is_node & self.ctx.all_bits)
                if gained:
                    r.is_node |= gained
                    g = gained & self.ctx.prim_bits
                    while g:
                        low = g & -g
                        p = low.bit_length() - 1
                        c = sp.traverse_down(r, p)
                        r.cnt = layout.set(r.cnt, p // 3 + 1, layout.get(c.cnt, p // 3 + 1))
                        g ^= low
        if xb.sc is not None and not xb.sc.empty():
            raise CorruptionError("bottom root kept shortcuts after path removal")
        xb.sc = None
        xb.parent = None
        if xb.left is not None or xb.right is not None:
            xb.key = _rank(xb.weight)
            new_roots.append(xb)
        for r in new_roots:
            self._top_insert(r)

    # --------------------------------------------------------- bottom layer
    def _bottom_root(self, x) -> BotNode:
        while not (isinstance(x, BotNode) and x.is_root):
            x = x.parent
        return x

    def _bottom_changed(self, start, xb: BotNode, old_status: int, old_cnt: int, old_rank: int) -> None:
        """After a decrease inside the bottom tree of ``xb``, repair the middle and top layers."""
        self._pull_up(start)
        z = xb
        while isinstance(z.parent, MidNode):
            z = z.parent
            z.weight = z.left.weight + z.right.weight
        if xb.left is None and xb.right is None or _rank(xb.weight) != old_rank:
            self._remove_middle_path(xb)
            return
        lost = old_status & ~xb.status
        if self._is_mid_root(xb):
            self._top_refresh(xb)
            return
        for p in _iter(lost):
            self._mid_detach(xb, p)
        if xb.cnt != old_cnt:
            changed = 0
            layout = self.ctx.layout
            for i in range(1, layout.slots + 1):
                if layout.get(xb.cnt, i) != layout.get(old_cnt, i):
                    changed |= 1 << (i - 1)
            if changed:
                self._mid_counters_up(xb, changed)
                return
        if not lost:
            z = xb
            while isinstance(z.parent, MidNode):
                z = z.parent
            self._top_refresh(z)

    def _bottom_remove_leaf(self, leaf: LLeaf) -> None:
        p = leaf.parent
        xb = self._bottom_root(p)
        old = (xb.status, xb.cnt, _rank(xb.weight))
        leaf.parent = None
        if p.is_root:
            if p.left is leaf:
                p.left, p.right = p.right, None
            else:
                p.right = None
            start = p
        else:
            sib = p.left if p.right is leaf else p.right
            gp = p.parent
            self._replace_child(gp, p, sib)
            start = gp
        self._bottom_changed(start, xb, *old)

    def _bottom_update_leaf(self, leaf: LLeaf) -> None:
        p = leaf.parent
        xb = self._bottom_root(p)
        old = (xb.status, xb.cnt, _rank(xb.weight))
        self._bottom_changed(p, xb, *old)

    # ------------------------------------------------------------ interface
    @staticmethod
    def in_bottom(leaf: LLeaf) -> bool:
        return isinstance(leaf.parent, BotNode)

    def add_child(self, child, status: int = 0, cnt: int = 0) -> LLeaf:
        leaf = LLeaf(child, child.weight)
        leaf.status = status
        leaf.cnt = cnt & self.ctx.cnt_mask(status)
        child.leaf = leaf
        self._buffer_insert(leaf)
        return leaf

    def _unlink(self, leaf: LLeaf) -> None:
        if self.in_bottom(leaf):
            self._bottom_remove_leaf(leaf)
        else:
            self._detach_sub("buf", leaf)
            self.nbuf -= 1

    def delete_child(self, leaf: LLeaf) -> None:
        if self.leaf_tree(leaf) is not self:
            raise ContractError("leaf does not belong to this local tree")
        self._unlink(leaf)
        leaf.child.leaf = None

    def reinsert(self, leaf: LLeaf, status: int | None = None, cnt: int | None = None) -> None:
        """Move ``leaf`` into the buffer, optionally with new status/counters and current weight."""
        self._unlink(leaf)
        leaf.weight = leaf.child.weight
        if status is not None:
            leaf.status = status
        if cnt is not None:
            leaf.cnt = cnt
        leaf.cnt &= self.ctx.cnt_mask(leaf.status)
        self._buffer_insert(leaf)

    def add_status(self, leaf: LLeaf, bits: int, cnt: int | None = None) -> None:
        new_status = leaf.status | bits
        new_cnt = leaf.cnt if cnt is None else cnt
        new_cnt &= self.ctx.cnt_mask(new_status)
        if new_status == leaf.status and new_cnt == leaf.cnt:
            return
        if self.in_bottom(leaf):
            if new_status != leaf.status or self.ctx.layout.any_increase(leaf.cnt, new_cnt):
                self.reinsert(leaf, new_status, new_cnt)
                return
            leaf.cnt = new_cnt
            self._bottom_update_leaf(leaf)
            return
        leaf.status = new_status
        leaf.cnt = new_cnt
        self._pull_up(leaf.parent)

    def remove_status(self, leaf: LLeaf, bits: int) -> None:
        if bits & ~leaf.status:
            raise ContractError("removing a local status the leaf does not have")
        leaf.status &= ~bits
        leaf.cnt &= self.ctx.cnt_mask(leaf.status)
        if self.in_bottom(leaf):
            self._bottom_update_leaf(leaf)
        else:
            self._pull_up(leaf.parent)

    def set_status(self, leaf: LLeaf, status: int, cnt: int) -> None:
        """Overwrite a leaf's status and counters, taking the cheapest legal route."""
        cnt &= self.ctx.cnt_mask(status)
        if status == leaf.status and cnt == leaf.cnt:
            return
        if self.in_bottom(leaf) and (status & ~leaf.status or self.ctx.layout.any_increase(leaf.cnt, cnt)):
            self.reinsert(leaf, status, cnt)
            return
        leaf.status = status
        leaf.cnt = cnt
        if self.in_bottom(leaf):
            self._bottom_update_leaf(leaf)
        else:
            self._pull_up(leaf.parent)

    def set_counters(self, leaf: LLeaf, cnt: int) -> None:
        self.set_status(leaf, leaf.status, cnt)

    def update_counters_path(self, leaf: LLeaf, cnt: int) -> None:
        """Lower a leaf's counters inside its current layer; an increase under a bottom root is refused."""
        cnt &= self.ctx.cnt_mask(leaf.status)
        if self.in_bottom(leaf) and self.ctx.layout.any_increase(leaf.cnt, cnt):
            raise InvariantViolation("counter increase below a bottom root")
        if cnt == leaf.cnt:
            return
        leaf.cnt = cnt
        if self.in_bottom(leaf):
            self._bottom_update_leaf(leaf)
        else:
            self._pull_up(leaf.parent)

    def merge(self, other: LocalTree) -> None:
        """Absorb ``other``'s leaves (``other`` must not be used afterwards)."""
        if other is self:
            raise ContractError("cannot merge a local tree with itself")
        if other.buf is not None:
            ob = other.buf
            ob.parent = None
            if self.buf is not None and other.nbuf > self.nbuf:
                mine = self.buf
                mine.parent = None
                self.buf = ob
                ob.parent = self
                ob, n_small = mine, self.nbuf
            else:
                n_small = other.nbuf
            node = self._attach_sub("buf", ob, n_small)
            self.nbuf += other.nbuf
            self._pull_up(node)
            b = self.buf
            if isinstance(b, BufNode) and b.h > 2 * b.size.bit_length() + 2:
                self._rebuild_buffer()
        roots = other.middle_roots()
        other.buf = other.top = None
        for r in roots:
            r.parent = None
        for r in roots:
            node = self._attach_sub("top", r, 1)
            self.ntop += 1
            self._pull_up(node)
        if self.ntop >= self.ctx.config.top_limit:
            self._join_middle()
        if self.nbuf >= self.ctx.config.buffer_limit:
            self._freeze_buffer()
        self._pull_root()

    @staticmethod
    def leaf_tree(leaf: LLeaf) -> LocalTree:
        x = leaf.parent
        while not isinstance(x, LocalTree):
            if x is None:
                raise ContractError("detached local leaf")
            x = x.parent
        return x

    def leaves(self) -> list[LLeaf]:
        out: list[LLeaf] = []
        if self.buf is not None:
            self._collect(self.buf, out)
        for r in self.middle_roots():
            stack = [r]
            while stack:
                y = stack.pop()
                if isinstance(y, LLeaf):
                    out.append(y)
                elif y is not None:
                    stack.append(y.right)
                    stack.append(y.left)
        return out

    def __len__(self) -> int:
        return len(self.leaves())

    # ----------------------------------------------------------- searching
    def _descend_mid(self, z, p: int, out: list | None) -> LLeaf | None:
        """From a local node ``z`` for pair ``p``, collect (or find the unique) status leaf."""
        sp = self.ctx.space
        bit = 1 << p
        stack = [z]
        while stack:
            y = stack.pop()
            if isinstance(y, MidNode):
                if y.is_branching & bit:
                    if out is None:
                        return None
                    stack.append(y.right)
                    stack.append(y.left)
                else:
                    stack.append(sp.traverse_down(y, p))
                continue
            if isinstance(y, LLeaf):
                if out is None:
                    return y
                out.append(y)
                continue
            l, r = y.left, y.right
            lh = l is not None and l.status & bit
            rh = r is not None and r.status & bit
            if out is None and lh and rh:
                return None
            if rh:
                stack.append(r)
            if lh:
                stack.append(l)
        return None

    def enumerate_status(self, p: int) -> list:
        bit = 1 << p
        out: list[LLeaf] = []
        if not self.status & bit:
            return []
        for part in (self.buf, self.top):
            if part is not None and part.status & bit:
                self._walk(part, p, out)
        return [leaf.child for leaf in out]

    def _walk(self, x, p: int, out: list) -> None:
        bit = 1 << p
        stack = [x]
        while stack:
            y = stack.pop()
            if isinstance(y, LLeaf):
                out.append(y)
            elif isinstance(y, MidNode):
                self._descend_mid(y, p, out)
            else:
                for k in (y.right, y.left):
                    if k is not None and k.status & bit:
                        stack.append(k)

    def unique_status_leaf(self, p: int):
        bit = 1 << p
        if not self.status & bit:
            return None
        b = self.buf
        t = self.top
        inb = b is not None and b.status & bit
        intop = t is not None and t.status & bit
        if inb and intop:
            return None
        x = b if inb else t
        while True:
            if isinstance(x, LLeaf):
                return x.child
            if isinstance(x, MidNode):
                leaf = self._descend_mid(x, p, None)
                return leaf.child if leaf is not None else None
            l, r = x.left, x.right
            lh = l is not None and l.status & bit
            rh = r is not None and r.status & bit
            if lh and rh:
                return None
            x = l if lh else r

    def sample_primary_child(self, i: int, rng: random.Random):
        """Walk down choosing children in proportion to their slot-``i`` counters."""
        layout = self.ctx.layout
        sp = self.ctx.space
        p = 3 * (i - 1) + 1
        bit = 1 << p
        gv = layout.get_value
        x = self
        parts = (self.buf, self.top)
        vals = [gv(k.cnt, i) if k is not None else 0 for k in parts]
        if not vals[0] + vals[1]:
            raise EmptyPool("no primary counter mass in this local tree")
        x = parts[0] if rng.random() * (vals[0] + vals[1]) < vals[0] else parts[1]
        while True:
            if isinstance(x, LLeaf):
                return x.child
            if isinstance(x, MidNode) and not x.is_branching & bit:
                if not x.is_node & bit:
                    raise CorruptionError("sampling walk reached a middle node outside the tree")
                x = sp.traverse_down(x, p)
                continue
            l, r = x.left, x.right
            a = gv(l.cnt, i) if l is not None else 0
            b = gv(r.cnt, i) if r is not None else 0
            if a + b == 0:
                raise EmptyPool("sampling walk reached zero counter mass")
            x = l if rng.random() * (a + b) < a else r

    def child_probability(self, child, i: int) -> float:
        """Exact probability that ``sample_primary_child`` returns ``child`` (test helper)."""
        layout = self.ctx.layout
        gv = layout.get_value
        leaf = child.leaf
        prob = 1.0
        x = leaf
        while not isinstance(x, LocalTree):
            par = x.parent
            if isinstance(par, LocalTree):
                total = sum(gv(k.cnt, i) for k in (par.buf, par.top) if k is not None)
            elif isinstance(par, MidNode) and not par.is_branching & (1 << (3 * (i - 1) + 1)):
                x = par
                continue
            else:
                total = sum(gv(k.cnt, i) for k in (par.left, par.right) if k is not None)
            if total == 0:
                return 0.0
            prob *= gv(x.cnt, i) / total
            x = par
        return prob

    # ---------------------------------------------------------------- audits
    def parent_hops(self, leaf: LLeaf) -> int:
        hops = 0
        x = leaf.parent
        while not isinstance(x, LocalTree):
            x = x.parent
            hops += 1
        return hops + 1

    def audit(self, snapshot: dict | None = None) -> None:
        """Structural audit of this local tree; raises AssertionError on failure.

        ``snapshot`` maps ``id(bottom node)`` to ``(node, status, counters)`` from the
        previous audit and is updated in place, which checks that bottom nodes never
        gain status and never see a counter grow.
        """
        ctx = self.ctx
        layout = ctx.layout
        sp = ctx.space
        weight = 0
        nbuf = 0
        cfg = ctx.config

        def pull_check(x, kids) -> tuple[int, int, int]:
            st = 0
            c = 0
            w = 0
            for k in kids:
                if k is None:
                    continue
                if k.parent is not x:
                    raise AssertionError(f"broken parent link under {x!r}")
                st |= k.status
                c = packed_add(c, k.cnt, layout)
                w += getattr(k, "weight", 0)
            return st, c, w

        def check_leaf(leaf: LLeaf) -> None:
            if leaf.child.leaf is not leaf:
                raise AssertionError("child does not point back to its local leaf")
            if leaf.weight != leaf.child.weight:
                raise AssertionError("local leaf weight is stale")
            if leaf.cnt & ~ctx.cnt_mask(leaf.status):
                raise AssertionError("leaf counter lane set without primary status")

        def check_buf(x, depth: int) -> int:
            nonlocal nbuf, weight
            if isinstance(x, LLeaf):
                check_leaf(x)
                nbuf += 1
                weight += x.weight
                return 0
            if not isinstance(x, BufNode):
                raise AssertionError("foreign node inside a buffer tree")
            hl = check_buf(x.left, depth + 1)
            hr = check_buf(x.right, depth + 1)
            st, c, _ = pull_check(x, (x.left, x.right))
            if st != x.status or c != x.cnt:
                raise AssertionError("buffer node aggregate is stale")
            if x.size != _size(x.left) + _size(x.right) or x.h != 1 + max(hl, hr):
                raise AssertionError("buffer node size/height is stale")
            return x.h

        def check_bottom(x, is_root: bool) -> int:
            nonlocal weight
            if isinstance(x, LLeaf):
                check_leaf(x)
                weight += x.weight
                return 1
            if not isinstance(x, BotNode) or x.is_root != is_root:
                raise AssertionError("foreign node inside a bottom tree")
            if not is_root and (x.left is None or x.right is None):
                raise AssertionError("unary internal bottom node")
            count = 0
            for k in (x.left, x.right):
                if k is not None:
                    count += check_bottom(k, False)
            st, c, w = pull_check(x, (x.left, x.right))
            if st != x.status or c != x.cnt or w != x.weight:
                raise AssertionError("bottom node aggregate is stale")
            if snapshot is not None:
                prev = snapshot.get(id(x))
                if prev is not None and prev[0] is x:
                    if x.status & ~prev[1]:
                        raise AssertionError("bottom node gained status")
                    if layout.any_increase(prev[2], x.cnt):
                        raise AssertionError("bottom node counter increased")
                snapshot[id(x)] = (x, x.status, x.cnt)
            return count

        def check_mid(x) -> None:
            """Check the middle subtree at ``x`` and its local node bits."""
            if isinstance(x, BotNode):
                if not x.is_root:
                    raise AssertionError("middle leaf is not a bottom root")
                if x.key != _rank(x.weight):
                    raise AssertionError("bottom root rank is stale")
                check_bottom(x, True)
                return
            if not isinstance(x, MidNode):
                raise AssertionError("foreign node inside a middle tree")
            for k in (x.left, x.right):
                if k.parent is not x:
                    raise AssertionError("broken middle parent link")
                if k.key != x.key - 1:
                    raise AssertionError("middle child rank is not parent rank minus one")
                check_mid(k)
            if x.weight != x.left.weight + x.right.weight or x.key != _rank(x.weight):
                raise AssertionError("middle weight/rank is stale")

        def tset(x) -> int:
            """Pairs with a status leaf below ``x`` (brute force)."""
            if isinstance(x, (LLeaf, BotNode)):
                return x.status
            return tset(x.left) | tset(x.right)

        def check_mid_status(root) -> None:
            # definitional local node / branching bits, plus chain audit
            nodes = []
            stack = [(root, True, 0)]
            while stack:
                x, is_root, parent_branch = stack.pop()
                if isinstance(x, BotNode):
                    continue
                tl, tr = tset(x.left), tset(x.right)
                t = tl | tr
                br = tl & tr
                node_bits = t & (br | (parent_branch if not is_root else ~0))
                if x.is_branching != br:
                    raise AssertionError("middle branching bits disagree with definition")
                if x.is_node != node_bits:
                    raise AssertionError("middle node bits disagree with definition")
                nodes.append(x)
                stack.append((x.left, False, br))
                stack.append((x.right, False, br))
            # chains: every local node with a single local child reaches it by shortcuts
            for x in nodes:
                single = x.is_node & ~x.is_branching
                for p in _iter(single):
                    ch = sp.chain(x, p)
                    # expected child: first node below x (following the status side) that is a node
                    y = x
                    bit = 1 << p
                    while True:
                        y = y.left if tset(y.left) & bit else y.right
                        if y.is_node & bit:
                            break
                    if ch[-1].bottom is not y:
                        raise AssertionError("local chain ends at the wrong node")
                    pos = ch[0].top
                    for s in ch:
                        if s.top is not pos:
                            raise AssertionError("local chain is not contiguous")
                        pos = s.bottom
                    if x.cnt is not None and p % 3 == 1:
                        i = p // 3 + 1
                        if layout.get(x.cnt, i) != layout.get(y.cnt, i):
                            raise AssertionError("single-child middle node counter differs from its child")
                for p in _iter(x.is_branching & ctx.prim_bits):
                    i = p // 3 + 1
                    want = layout.get_value(x.left.cnt, i) + layout.get_value(x.right.cnt, i)
                    if layout.get(x.cnt, i) != layout.get(layout.set_count(0, i, want), i):
                        raise AssertionError("branching middle node counter is not the sum of its children")
            # no stray memberships: every stored local shortcut belongs to some chain
            live = set()
            for x in nodes:
                for p in _iter(x.is_node & ~x.is_branching):
                    for s in sp.chain(x, p):
                        live.add((id(s), p))
            stack = [root]
            while stack:
                x = stack.pop()
                if x.sc is not None:
                    sp.audit_node(x)
                    for s in sp.down_shortcuts(x):
                        for p in _iter(s.members):
                            if (id(s), p) not in live:
                                raise AssertionError("stray local shortcut membership")
                if isinstance(x, MidNode):
                    stack.append(x.left)
                    stack.append(x.right)

        def check_top(x) -> int:
            if isinstance(x, BufNode):
                cnt = check_top(x.left) + check_top(x.right)
                st, c, _ = pull_check(x, (x.left, x.right))
                if st != x.status or c != x.cnt:
                    raise AssertionError("top node aggregate is stale")
                return cnt
            check_mid(x)
            check_mid_status(x)
            if x.cnt & ~ctx.cnt_mask(x.status):
                raise AssertionError("middle root counter lane set without primary status")
            return 1

        if self.buf is not None:
            if self.buf.parent is not self:
                raise AssertionError("buffer root parent link broken")
            h = check_buf(self.buf, 0)
            if h > 2 * max(1, nbuf).bit_length() + 2:
                raise AssertionError("buffer tree too tall")
        if nbuf != self.nbuf:
            raise AssertionError("buffer leaf count is stale")
        if nbuf > 2 * cfg.buffer_limit:
            raise AssertionError("buffer tree over its size limit")
        ntop = 0
        if self.top is not None:
            if self.top.parent is not self:
                raise AssertionError("top root parent link broken")
            ntop = check_top(self.top)
        if ntop != self.ntop:
            raise AssertionError("top leaf count is stale")
        if ntop > max(2 * cfg.top_limit, 2 * math.log2(max(2, self.owner.weight)) + 2):
            raise AssertionError("top tree has too many leaves")
        st = 0
        c = 0
        for k in (self.buf, self.top):
            if k is not None:
                st |= k.status
                c = packed_add(c, k.cnt, layout)
        if st != self.status or c != self.cnt:
            raise AssertionError("local root aggregate is stale")
        total = weight
        if total != self.owner.weight:
            raise AssertionError(f"local tree weight {total} differs from node weight {self.owner.weight}")


def _iter(bits: int):
    while bits:
        low = bits & -bits
        yield low.bit_length() - 1
        bits ^= low
