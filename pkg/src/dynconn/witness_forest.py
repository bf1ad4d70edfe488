"""Connectivity on a dynamic forest through Euler tours kept in b-ary balanced trees.

Each forest tree is stored as its Euler tour: one token per vertex plus one token
per direction of every tree edge.  A tour lives in the leaves of a B-tree whose
nodes hold between ``ceil(cap/2)`` and ``cap`` children (the root may hold fewer),
so the tree height is about ``log_b`` of the tour length.  ``connected`` climbs
from both vertex tokens to their roots and compares them; it never mutates.
"""

from __future__ import annotations

from .errors import ContractError, VertexRangeError


class _Token:
    __slots__ = ("node", "u", "v")

    def __init__(self, u: int, v: int) -> None:
        self.node: _Node | None = None
        self.u = u
        self.v = v

    def __repr__(self) -> str:
        return f"<{self.u}>" if self.u == self.v else f"<{self.u}->{self.v}>"


class _Node:
    __slots__ = ("parent", "kids", "h")

    def __init__(self, kids: list, h: int) -> None:
        self.parent: _Node | None = None
        self.kids = kids
        self.h = h
        if h == 0:
            for k in kids:
                k.node = self
        else:
            for k in kids:
                k.parent = self


class EulerTourForest:
    """Forest over vertices ``0..n-1`` supporting link, cut and connected."""

    def __init__(self, n: int, branching_factor: int = 8) -> None:
        if branching_factor < 2:
            raise ContractError("branching factor must be at least 2")
        self.n = n
        self.b = branching_factor
        # a fanout of 2 cannot keep a minimum occupancy above one, so treat it as 3
        self.cap = max(3, branching_factor)
        self.lo = (self.cap + 1) // 2
        self._vtok: list[_Token | None] = [None] * n
        self._arcs: dict[tuple[int, int], _Token] = {}

    # ------------------------------------------------------------------ helpers
    def _check(self, u: int) -> None:
        if not 0 <= u < self.n:
            raise VertexRangeError(f"vertex {u} outside [0, {self.n})")

    def _vertex_token(self, u: int) -> _Token:
        t = self._vtok[u]
        if t is None:
            t = self._vtok[u] = _Token(u, u)
            _Node([t], 0)
        return t

    @staticmethod
    def _root(node: _Node) -> _Node:
        while node.parent is not None:
            node = node.parent
        return node

    @staticmethod
    def _norm(x: _Node | None) -> _Node | None:
        while x is not None and x.h > 0 and len(x.kids) == 1:
            x = x.kids[0]
            x.parent = None
        if x is not None:
            x.parent = None
        return x

    def _adopt(self, node: _Node, kids: list) -> None:
        node.kids = kids
        if node.h == 0:
            for k in kids:
                k.node = node
        else:
            for k in kids:
                k.parent = node

    def _redistribute(self, a: _Node, b: _Node) -> None:
        both = a.kids + b.kids
        half = len(both) // 2
        self._adopt(a, both[:half])
        self._adopt(b, both[half:])

    def _split_up(self, x: _Node) -> _Node:
        while True:
            if len(x.kids) > self.cap:
                half = len(x.kids) // 2
                y = _Node(x.kids[half:], x.h)
                x.kids = x.kids[:half]
                p = x.parent
                if p is None:
                    p = _Node([x, y], x.h + 1)
                else:
                    p.kids.insert(p.kids.index(x) + 1, y)
                    y.parent = p
                x = p
                continue
            if x.parent is None:
                return x
            x = x.parent

    def _join(self, a: _Node | None, b: _Node | None) -> _Node | None:
        """Concatenate two tours given by their roots."""
        if a is None:
            return b
        if b is None:
            return a
        a.parent = None
        b.parent = None
        if a.h == b.h:
            if len(a.kids) + len(b.kids) <= self.cap:
                self._adopt(a, a.kids + b.kids)
                return a
            if len(a.kids) < self.lo or len(b.kids) < self.lo:
                self._redistribute(a, b)
            return _Node([a, b], a.h + 1)
        if a.h > b.h:
            x = a
            while x.h > b.h + 1:
                x = x.kids[-1]
            nb = x.kids[-1]
            if len(b.kids) < self.lo:
                if len(nb.kids) + len(b.kids) <= self.cap:
                    self._adopt(nb, nb.kids + b.kids)
                    return self._split_up(nb)
                self._redistribute(nb, b)
            x.kids.append(b)
            b.parent = x
            return self._split_up(x)
        x = b
        while x.h > a.h + 1:
            x = x.kids[0]
        nb = x.kids[0]
        if len(a.kids) < self.lo:
            if len(nb.kids) + len(a.kids) <= self.cap:
                self._adopt(nb, a.kids + nb.kids)
                return self._split_up(nb)
            self._redistribute(a, nb)
        x.kids.insert(0, a)
        a.parent = x
        return self._split_up(x)

    def _make(self, kids: list, h: int) -> _Node | None:
        if not kids:
            return None
        return self._norm(_Node(kids, h))

    def _split(self, tok: _Token, after: bool) -> tuple[_Node | None, _Node | None]:
        """Split the tour holding ``tok`` just before it (or just after it)."""
        leaf = tok.node
        assert leaf is not None
        idx = leaf.kids.index(tok) + (1 if after else 0)
        left = self._make(leaf.kids[:idx], 0)
        right = self._make(leaf.kids[idx:], 0)
        child, p = leaf, leaf.parent
        while p is not None:
            j = p.kids.index(child)
            lpart = self._make(p.kids[:j], p.h)
            rpart = self._make(p.kids[j + 1:], p.h)
            nxt = p.parent
            left = self._join(lpart, left)
            right = self._join(right, rpart)
            child, p = p, nxt
        return self._norm(left), self._norm(right)

    def _order(self, tok: _Token) -> list[int]:
        out = []
        x: object = tok
        node = tok.node
        while node is not None:
            out.append(node.kids.index(x))
            x, node = node, node.parent
        out.reverse()
        return out

    def _reroot(self, u: int) -> _Node:
        t = self._vertex_token(u)
        left, right = self._split(t, after=False)
        r = self._join(right, left)
        assert r is not None
        return r

    # --------------------------------------------------------------- interface
    def connected(self, u: int, v: int) -> bool:
        self._check(u)
        self._check(v)
        if u == v:
            return True
        tu, tv = self._vtok[u], self._vtok[v]
        if tu is None or tv is None:
            return False
        return self._root(tu.node) is self._root(tv.node)  # type: ignore[arg-type]

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self._arcs

    def link(self, u: int, v: int) -> None:
        self._check(u)
        self._check(v)
        if self.connected(u, v):
            raise ContractError(f"link({u}, {v}): already connected")
        ru = self._reroot(u)
        rv = self._reroot(v)
        a, b = _Token(u, v), _Token(v, u)
        self._arcs[(u, v)] = a
        self._arcs[(v, u)] = b
        ta = _Node([a], 0)
        tb = _Node([b], 0)
        self._join(self._join(self._join(ru, ta), rv), tb)

    def cut(self, u: int, v: int) -> None:
        self._check(u)
        self._check(v)
        a = self._arcs.get((u, v))
        b = self._arcs.get((v, u))
        if a is None or b is None:
            raise ContractError(f"cut({u}, {v}): not a forest edge")
        if self._order(a) > self._order(b):
            a, b = b, a
        left, _ = self._split(a, after=False)
        _, rest = self._split(a, after=True)
        _, _ = self._split(b, after=False)
        _, right = self._split(b, after=True)
        self._join(left, right)
        del self._arcs[(u, v)]
        del self._arcs[(v, u)]
        a.node = None
        b.node = None

    # ------------------------------------------------------------------ audits
    def edges(self) -> list[tuple[int, int]]:
        return sorted((u, v) for (u, v) in self._arcs if u < v)

    def tour(self, u: int) -> list[tuple[int, int]]:
        """Tokens of ``u``'s tour in order, as ``(from, to)`` pairs (vertex tokens are ``(u, u)``)."""
        t = self._vtok[u]
        if t is None:
            return [(u, u)]
        out: list[tuple[int, int]] = []

        def walk(x: _Node) -> None:
            if x.h == 0:
                out.extend((k.u, k.v) for k in x.kids)
            else:
                for k in x.kids:
                    walk(k)

        walk(self._root(t.node))  # type: ignore[arg-type]
        return out

    def audit(self) -> int:
        """Check node occupancy, parent links and heights; return the largest height seen."""
        roots: dict[int, _Node] = {}
        for t in self._vtok:
            if t is not None:
                r = self._root(t.node)  # type: ignore[arg-type]
                roots[id(r)] = r
        worst = 0

        def check(x: _Node, is_root: bool) -> int:
            if not x.kids:
                raise AssertionError("empty tour node")
            if len(x.kids) > self.cap:
                raise AssertionError("overfull tour node")
            if not is_root and len(x.kids) < self.lo:
                raise AssertionError("underfull tour node")
            count = 0
            for k in x.kids:
                if x.h == 0:
                    if k.node is not x:
                        raise AssertionError("token back-link broken")
                    count += 1
                else:
                    if k.parent is not x or k.h != x.h - 1:
                        raise AssertionError("tour node link or height broken")
                    count += check(k, False)
            return count

        for r in roots.values():
            size = check(r, True)
            worst = max(worst, r.h)
            # height stays within log base lo of the tour length, plus one
            bound = 1
            while self.lo ** bound < size:
                bound += 1
            if r.h > bound + 1:
                raise AssertionError(f"tour tree too tall: height {r.h} for {size} tokens")
        return worst
