"""Edge records, endpoint types and the per-vertex endpoint store.

Every (depth, type) combination is addressed by a small integer *pair index*
``3 * (depth - 1) + type``; status bitmaps throughout the engine use one bit per
pair index plus one spare bit at the top.
"""

from __future__ import annotations

import random
from enum import IntEnum

from .counters import depth_bound
from .errors import ContractError, DuplicateEdge, EmptyStore, SelfLoop, VertexRangeError


class EndpointType(IntEnum):
    WITNESS = 0
    PRIMARY = 1
    SECONDARY = 2


WITNESS = EndpointType.WITNESS
PRIMARY = EndpointType.PRIMARY
SECONDARY = EndpointType.SECONDARY


def pair_index(i: int, t: int) -> int:
    return 3 * (i - 1) + int(t)


def pair_of(p: int) -> tuple[int, EndpointType]:
    return p // 3 + 1, EndpointType(p % 3)


def pair_bit(i: int, t: int) -> int:
    return 1 << (3 * (i - 1) + int(t))


def iter_bits(bits: int):
    while bits:
        low = bits & -bits
        yield low.bit_length() - 1
        bits ^= low


def edge_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


class EdgeRecord:
    """A live undirected edge.  ``u < v`` always."""

    __slots__ = ("u", "v", "depth", "type_u", "type_v", "end_u", "end_v", "promotions", "upgrades")

    def __init__(self, u: int, v: int, depth: int = 1,
                 type_u: EndpointType = WITNESS, type_v: EndpointType = WITNESS) -> None:
        if u == v:
            raise SelfLoop(f"self-loop at {u}")
        if u > v:
            u, v = v, u
            type_u, type_v = type_v, type_u
        self.u = u
        self.v = v
        self.depth = depth
        self.type_u = type_u
        self.type_v = type_v
        self.end_u: Endpoint | None = None
        self.end_v: Endpoint | None = None
        self.promotions = 0
        self.upgrades = 0

    @property
    def key(self) -> tuple[int, int]:
        return (self.u, self.v)

    @property
    def is_witness(self) -> bool:
        return self.type_u == WITNESS

    def __repr__(self) -> str:
        return (f"EdgeRecord({self.u}, {self.v}, depth={self.depth}, "
                f"{self.type_u.name.lower()}/{self.type_v.name.lower()})")


class Endpoint:
    """Handle for one stored endpoint; ``slot`` is its index inside its store list."""

    __slots__ = ("edge", "vertex", "pair", "slot", "mark")

    def __init__(self, edge: EdgeRecord, vertex: int, pair: int) -> None:
        self.edge = edge
        self.vertex = vertex
        self.pair = pair
        self.slot = -1
        self.mark = 0

    def other(self) -> Endpoint:
        e = self.edge
        return e.end_v if self is e.end_u else e.end_u  # type: ignore[return-value]

    def __repr__(self) -> str:
        i, t = pair_of(self.pair)
        return f"Endpoint({self.vertex} of {self.edge.key}, {i}, {t.name.lower()})"


class LeafStore:
    """Per-vertex arrays of endpoints, one array per pair index, with O(1) swap-removal."""

    def __init__(self, n: int) -> None:
        if n < 1:
            raise ContractError("n must be positive")
        self.n = n
        self.d_max = depth_bound(n)
        self._stores: list[dict[int, list[Endpoint]] | None] = [None] * n

    def check_vertex(self, v: int) -> None:
        if not (isinstance(v, int) and 0 <= v < self.n):
            raise VertexRangeError(f"vertex {v!r} outside [0, {self.n})")

    def _check_pair(self, i: int, t: int) -> int:
        if not 1 <= i <= self.d_max:
            raise ContractError(f"depth {i} outside [1, {self.d_max}]")
        return pair_index(i, t)

    def lists(self, v: int) -> dict[int, list[Endpoint]]:
        d = self._stores[v]
        if d is None:
            d = self._stores[v] = {}
        return d

    def insert(self, v: int, e: EdgeRecord, i: int, t: EndpointType) -> Endpoint:
        self.check_vertex(v)
        p = self._check_pair(i, t)
        if v not in (e.u, e.v):
            raise ContractError(f"{v} is not an endpoint of {e.key}")
        h = Endpoint(e, v, p)
        return self.insert_handle(h)

    def insert_handle(self, h: Endpoint) -> Endpoint:
        if h.slot >= 0:
            raise DuplicateEdge(f"endpoint {h!r} is already stored")
        d = self.lists(h.vertex)
        arr = d.get(h.pair)
        if arr is None:
            arr = d[h.pair] = []
        h.slot = len(arr)
        arr.append(h)
        return h

    def remove(self, h: Endpoint) -> None:
        d = self._stores[h.vertex]
        arr = d.get(h.pair) if d is not None else None
        if arr is None or not (0 <= h.slot < len(arr)) or arr[h.slot] is not h:
            raise ContractError(f"stale endpoint handle {h!r}")
        last = arr.pop()
        if last is not h:
            arr[h.slot] = last
            last.slot = h.slot
        if not arr:
            del d[h.pair]
        h.slot = -1

    def enumerate(self, v: int, i: int, t: EndpointType) -> list[Endpoint]:
        self.check_vertex(v)
        d = self._stores[v]
        if not d:
            return []
        return list(d.get(self._check_pair(i, t), ()))

    def size(self, v: int, i: int, t: EndpointType) -> int:
        d = self._stores[v]
        if not d:
            return 0
        return len(d.get(pair_index(i, t), ()))

    def sample_uniform(self, v: int, i: int, t: EndpointType, rng: random.Random) -> Endpoint:
        self.check_vertex(v)
        d = self._stores[v]
        arr = d.get(self._check_pair(i, t)) if d else None
        if not arr:
            raise EmptyStore(f"no ({i}, {t.name.lower()}) endpoints at {v}")
        return arr[rng.randrange(len(arr))]

    def status_bits(self, v: int) -> int:
        d = self._stores[v]
        out = 0
        if d:
            for p in d:
                out |= 1 << p
        return out

    def total(self, i: int, t: EndpointType) -> int:
        p = pair_index(i, t)
        return sum(len(d.get(p, ())) for d in self._stores if d)


# convenience wrappers mirroring the operation names
def leaf_insert_endpoint(store: LeafStore, v: int, e: EdgeRecord, i: int, t: EndpointType) -> Endpoint:
    return store.insert(v, e, i, t)


def leaf_remove_endpoint(store: LeafStore, h: Endpoint) -> None:
    store.remove(h)


def leaf_enumerate(store: LeafStore, v: int, i: int, t: EndpointType) -> list[Endpoint]:
    return store.enumerate(v, i, t)


def leaf_sample_uniform(store: LeafStore, v: int, i: int, t: EndpointType, rng: random.Random) -> Endpoint:
    return store.sample_uniform(v, i, t, rng)
