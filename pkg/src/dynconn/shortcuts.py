"""Shortcuts: ancestor-to-descendant links shared between many (depth, type) pairs.

The same machinery serves two trees: the component hierarchy (nodes keyed by
depth) and the middle layer of local trees (nodes keyed by rank).  A node only
needs three attributes for this module:

``key``
    depth or rank; consecutive along every parent/child edge.
``sc``
    its :class:`NodeShortcutState`, created on first use.
``is_node``
    bitmap of pairs for which the node is a node of the induced forest.  Chains
    of shortcuts for a pair run from one such node down to the next.

A shortcut's *power* is ``min(lsb(key_top + 1), lsb(key_bottom + 1))`` and every
node strictly between its endpoints has a smaller lsb.  A power-0 shortcut joins a
parent to a child and is called fundamental.
"""

from __future__ import annotations

from collections import Counter
from typing import Callable, Iterable, Sequence

from .errors import ContractError, CorruptionError


def lsb_index(x: int) -> int:
    """Number of trailing zero bits of a positive integer."""
    if x <= 0:
        raise ContractError("lsb_index needs a positive integer")
    return (x & -x).bit_length() - 1


def power_of(key_top: int, key_bottom: int) -> int:
    return min(lsb_index(key_top + 1), lsb_index(key_bottom + 1))


def _bits(x: int):
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


class Shortcut:
    __slots__ = ("power", "top", "bottom", "down_slot", "members", "covered", "refs")

    def __init__(self, top, bottom, power: int, covered: tuple[Shortcut, Shortcut] | None) -> None:
        self.power = power
        self.top = top
        self.bottom = bottom
        self.down_slot = -1
        self.members = 0
        self.covered = covered
        self.refs = 0

    @property
    def fundamental(self) -> bool:
        return self.covered is None

    def __repr__(self) -> str:
        return f"Shortcut({self.top.key}->{self.bottom.key}, power={self.power}, members={self.members:#x})"


class NodeShortcutState:
    """Per-node store: a slot array of downward shortcuts, an index per pair, upward shortcuts by power."""

    __slots__ = ("down", "down_bits", "down_idx", "up", "up_idx")

    def __init__(self) -> None:
        self.down: list[Shortcut | None] = []
        self.down_bits = 0
        self.down_idx = 0
        self.up: dict[int, Shortcut] = {}
        self.up_idx = 0

    def empty(self) -> bool:
        return not self.down_bits and not self.up


UP_FIELD_BITS = 4


class ShortcutSpace:
    """Shortcut bookkeeping for one family of nodes over ``pairs`` pair indices."""

    def __init__(self, pairs: int, loglog: int) -> None:
        self.pairs = pairs
        self.capacity = pairs + 1
        self.down_field = max(loglog + 2, (self.capacity + 1).bit_length())
        self._dmask = (1 << self.down_field) - 1
        self.stats: Counter[str] = Counter()

    # --------------------------------------------------------------- lookups
    @staticmethod
    def state(node) -> NodeShortcutState:
        st = node.sc
        if st is None:
            st = node.sc = NodeShortcutState()
        return st

    def get_down(self, node, p: int) -> Shortcut | None:
        st = node.sc
        if st is None:
            return None
        k = (st.down_idx >> (p * self.down_field)) & self._dmask
        return st.down[k - 1] if k else None

    def get_up(self, node, p: int) -> Shortcut | None:
        st = node.sc
        if st is None:
            return None
        k = (st.up_idx >> (p * UP_FIELD_BITS)) & 15
        return st.up[k - 1] if k else None

    def down_shortcuts(self, node) -> list[Shortcut]:
        st = node.sc
        if st is None or not st.down_bits:
            return []
        return [s for s in st.down if s is not None]

    def up_shortcuts(self, node) -> list[Shortcut]:
        st = node.sc
        return list(st.up.values()) if st is not None else []

    def has_down(self, node, bits: int) -> int:
        """Subset of ``bits`` for which ``node`` has a downward shortcut."""
        st = node.sc
        if st is None or not st.down_bits:
            return 0
        out = 0
        for p in _bits(bits):
            if (st.down_idx >> (p * self.down_field)) & self._dmask:
                out |= 1 << p
        return out

    # ----------------------------------------------------------- allocation
    def get_or_create(self, top, bottom, covered: tuple[Shortcut, Shortcut] | None = None) -> Shortcut:
        pw = power_of(top.key, bottom.key)
        st = self.state(bottom)
        s = st.up.get(pw)
        if s is not None:
            if s.top is not top:
                raise CorruptionError(f"stale upward shortcut {s!r} at power {pw}")
            if covered is not None and s.covered != covered:
                raise CorruptionError(f"shortcut {s!r} covers a different pair")
            return s
        if covered is None and pw != 0:
            raise ContractError("only parent/child shortcuts may be created without a covered pair")
        s = Shortcut(top, bottom, pw, covered)
        if covered is not None:
            for c in covered:
                c.refs += 1
        st.up[pw] = s
        self.stats["created"] += 1
        return s

    def _free(self, s: Shortcut) -> None:
        st = s.bottom.sc
        if st.up.get(s.power) is s:
            del st.up[s.power]
        self.stats["freed"] += 1
        if s.covered is not None:
            for c in s.covered:
                c.refs -= 1
                if c.refs == 0 and c.members == 0:
                    self._free(c)

    def _settle(self, s: Shortcut) -> None:
        """Vacate the down slot of an empty shortcut and free it if nothing covers it."""
        if s.members:
            return
        if s.down_slot >= 0:
            st = s.top.sc
            st.down[s.down_slot] = None
            st.down_bits &= ~(1 << s.down_slot)
            while st.down and st.down[-1] is None:
                st.down.pop()
            s.down_slot = -1
        if s.refs == 0:
            self._free(s)

    # ------------------------------------------------------------ membership
    def _attach(self, s: Shortcut, bits: int) -> None:
        top_st = self.state(s.top)
        bot_st = self.state(s.bottom)
        if s.down_slot < 0:
            free = ~top_st.down_bits
            slot = (free & -free).bit_length() - 1
            if slot >= self.capacity:
                raise CorruptionError("down slots exhausted")
            if slot == len(top_st.down):
                top_st.down.append(s)
            else:
                while len(top_st.down) <= slot:
                    top_st.down.append(None)
                top_st.down[slot] = s
            top_st.down_bits |= 1 << slot
            s.down_slot = slot
        if bot_st.up.get(s.power) is not s:
            raise CorruptionError(f"{s!r} is not registered at its bottom")
        fw = self.down_field
        dv = s.down_slot + 1
        uv = s.power + 1
        di = top_st.down_idx
        ui = bot_st.up_idx
        for p in _bits(bits & ~s.members):
            cur = (di >> (p * fw)) & self._dmask
            if cur and cur != dv:
                raise CorruptionError(f"pair {p} already has a downward shortcut at {s.top!r}")
            di |= dv << (p * fw)
            cu = (ui >> (p * UP_FIELD_BITS)) & 15
            if cu and cu != uv:
                raise CorruptionError(f"pair {p} already has an upward shortcut at {s.bottom!r}")
            ui |= uv << (p * UP_FIELD_BITS)
        top_st.down_idx = di
        bot_st.up_idx = ui
        s.members |= bits

    def _detach(self, s: Shortcut, bits: int) -> None:
        bits &= s.members
        if not bits:
            return
        top_st = s.top.sc
        bot_st = s.bottom.sc
        fw = self.down_field
        di = top_st.down_idx
        ui = bot_st.up_idx
        for p in _bits(bits):
            di &= ~(self._dmask << (p * fw))
            ui &= ~(15 << (p * UP_FIELD_BITS))
        top_st.down_idx = di
        bot_st.up_idx = ui
        s.members &= ~bits

    def set_membership(self, s: Shortcut, bits: int) -> None:
        if bits & ~s.members:
            self._attach(s, bits)

    def clear_membership(self, s: Shortcut, bits: int) -> None:
        self._detach(s, bits)
        self._settle(s)

    def uncover(self, s: Shortcut, p: int) -> tuple[Shortcut, Shortcut]:
        if s.covered is None:
            raise ContractError("a fundamental shortcut cannot be uncovered here")
        bit = 1 << p
        if not s.members & bit:
            raise ContractError(f"pair {p} is not carried by {s!r}")
        a, b = s.covered
        self._detach(s, bit)
        self._attach(a, bit)
        self._attach(b, bit)
        self._settle(s)
        self.stats["uncovered"] += 1
        return a, b

    def cover(self, a: Shortcut, b: Shortcut, bits: int) -> Shortcut:
        """Move ``bits`` from the consecutive pair ``a``, ``b`` onto the shortcut covering both."""
        c = self.get_or_create(a.top, b.bottom, (a, b))
        if c.power != a.power + 1:
            raise CorruptionError(f"covering {a!r} and {b!r} gave power {c.power}")
        self._detach(a, bits)
        self._detach(b, bits)
        self._attach(c, bits)
        self._settle(a)
        self._settle(b)
        self.stats["covered"] += 1
        return c

    # ------------------------------------------------------------ traversal
    def traverse_down(self, u, p: int):
        """Follow ``u``'s chain for pair ``p`` to the next node, covering lazily on the way."""
        s = self.get_down(u, p)
        if s is None:
            raise CorruptionError(f"no downward shortcut for pair {p} at {u!r}")
        bit = 1 << p
        stack: list[Shortcut] = []
        while True:
            self.stats["steps"] += 1
            stack.append(s)
            while len(stack) >= 2:
                a, b = stack[-2], stack[-1]
                if a.power != b.power:
                    break
                lm = lsb_index(a.bottom.key + 1)
                if lm >= lsb_index(a.top.key + 1) or lm >= lsb_index(b.bottom.key + 1):
                    break
                if a.bottom.is_node & bit:
                    break
                stack[-2:] = [self.cover(a, b, bit)]
            y = stack[-1].bottom
            if y.is_node & bit:
                return y
            s = self.get_down(y, p)
            if s is None:
                raise CorruptionError(f"chain for pair {p} dangles at {y!r}")

    def chain(self, u, p: int) -> list[Shortcut]:
        """Stored shortcuts of ``u``'s chain for ``p``, without covering (audits)."""
        bit = 1 << p
        out = []
        s = self.get_down(u, p)
        while s is not None:
            out.append(s)
            if s.bottom.is_node & bit:
                return out
            s = self.get_down(s.bottom, p)
        raise CorruptionError(f"chain for pair {p} from {u!r} dangles")

    # --------------------------------------------------------- path helpers
    def dismantle(self, x, release: Callable[[Shortcut], None]) -> None:
        """Uncover every downward shortcut leaving ``x`` and hand the fundamentals to ``release``.

        ``release`` must clear the membership of the fundamental it receives.
        """
        st = x.sc
        if st is None:
            return
        while st.down_bits:
            best = None
            for s in st.down:
                if s is not None and s.power > 0 and (best is None or s.power > best.power):
                    best = s
            if best is None:
                break
            for p in list(_bits(best.members)):
                self.uncover(best, p)
        for s in [s for s in st.down if s is not None]:
            release(s)
            if s.members:
                raise CorruptionError("release callback left membership behind")

    def cover_path(self, path: Sequence) -> None:
        """Sweeps of increasing power covering every shortcut whose endpoints both lie on ``path``.

        ``path`` lists consecutive nodes from the top down.
        """
        if len(path) < 3:
            return
        lsbs = [lsb_index(x.key + 1) for x in path]
        q = 0
        top_power = max(lsbs)
        while q < top_power:
            for j in range(1, len(path) - 1):
                if lsbs[j] != q:
                    continue
                lo = j - 1
                while lo >= 0 and lsbs[lo] <= q:
                    lo -= 1
                hi = j + 1
                while hi < len(path) and lsbs[hi] <= q:
                    hi += 1
                if lo < 0 or hi >= len(path):
                    continue
                mid = path[j]
                a = self.get_up_by_power(mid, q)
                b = self.get_up_by_power(path[hi], q)
                if a is None or b is None or a.top is not path[lo] or b.top is not mid:
                    continue
                bits = a.members & b.members & ~mid.is_node
                if bits:
                    self.cover(a, b, bits)
            q += 1

    @staticmethod
    def get_up_by_power(node, q: int) -> Shortcut | None:
        st = node.sc
        return st.up.get(q) if st is not None else None

    # --------------------------------------------------------------- audits
    def audit_node(self, node) -> None:
        st = node.sc
        if st is None:
            return
        fw = self.down_field
        for slot, s in enumerate(st.down):
            if s is None:
                if st.down_bits >> slot & 1:
                    raise AssertionError("occupancy bit set on an empty down slot")
                continue
            if not st.down_bits >> slot & 1 or s.down_slot != slot or s.top is not node:
                raise AssertionError(f"down slot {slot} of {node!r} is inconsistent")
            if not s.members:
                raise AssertionError(f"{s!r} sits in a down slot without membership")
        for p in range(self.pairs + 1):
            k = (st.down_idx >> (p * fw)) & self._dmask
            if k:
                s = st.down[k - 1] if k - 1 < len(st.down) else None
                if s is None or not s.members >> p & 1:
                    raise AssertionError(f"down index of pair {p} at {node!r} is stale")
            u = (st.up_idx >> (p * UP_FIELD_BITS)) & 15
            if u:
                s = st.up.get(u - 1)
                if s is None or not s.members >> p & 1:
                    raise AssertionError(f"up index of pair {p} at {node!r} is stale")
        for pw, s in st.up.items():
            if s.bottom is not node or s.power != pw:
                raise AssertionError(f"up entry {pw} of {node!r} is inconsistent")
            if s.power != power_of(s.top.key, s.bottom.key):
                raise AssertionError(f"{s!r} has the wrong power")
            if s.covered is None:
                if s.power != 0:
                    raise AssertionError(f"{s!r} lacks a covered pair")
            else:
                a, b = s.covered
                if a.top is not s.top or b.bottom is not s.bottom or a.bottom is not b.top:
                    raise AssertionError(f"{s!r} covers a non-chaining pair")
                if a.power != s.power - 1 or b.power != s.power - 1:
                    raise AssertionError(f"{s!r} covers shortcuts of the wrong power")
            for p in _bits(s.members):
                if self.get_down(s.top, p) is not s or self.get_up(s.bottom, p) is not s:
                    raise AssertionError(f"{s!r} is not indexed for pair {p}")
            if not s.members and not s.refs:
                raise AssertionError(f"{s!r} should have been freed")

    def audit_refs(self, nodes: Iterable) -> int:
        """Recount covered-pair references; return the number of stored shortcuts."""
        seen: list[Shortcut] = []
        for x in nodes:
            st = x.sc
            if st is not None:
                seen.extend(st.up.values())
        want: dict[int, int] = {id(s): 0 for s in seen}
        for s in seen:
            if s.covered is not None:
                for c in s.covered:
                    if id(c) not in want:
                        raise AssertionError(f"{s!r} covers a freed shortcut")
                    want[id(c)] += 1
        for s in seen:
            if s.refs != want[id(s)]:
                raise AssertionError(f"{s!r} has refs {s.refs}, expected {want[id(s)]}")
        return len(seen)


def eligible(keys: Sequence[int], a: int, b: int) -> bool:
    pw = min(lsb_index(keys[a] + 1), lsb_index(keys[b] + 1))
    return all(lsb_index(keys[j] + 1) < pw for j in range(a + 1, b))


def shortcuts_oracle(keys: Sequence[int]) -> set[tuple[int, int]]:
    """Largest covering set between the first and last node of a path, by brute force.

    ``keys`` are the node keys from the top of the path down (consecutive values).
    Returns ``(key_top, key_bottom)`` pairs.
    """
    m = len(keys)
    if m < 2:
        return set()
    cand = [(a, b) for a in range(m) for b in range(a + 1, m) if eligible(keys, a, b)]
    out = set()
    for a, b in cand:
        if not any((c <= a and b <= d) and (c, d) != (a, b) for c, d in cand):
            out.add((keys[a], keys[b]))
    return out


def crosses(a: tuple[int, int], b: tuple[int, int]) -> bool:
    """Proper interleaving of two intervals given as (top, bottom) positions on one path."""
    (a1, a2), (b1, b2) = sorted([a, b])
    return a1 < b1 < a2 < b2
