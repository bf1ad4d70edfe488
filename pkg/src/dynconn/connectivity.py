"""Public engine: insert, delete and connectivity queries.

The engine keeps a spanning forest of the graph (the witness edges) in an
Euler-tour forest for queries, and the component hierarchy for updates.  Every
edge has a depth in ``[1, d_max]``; the witness edges form a maximum spanning
forest with respect to depth, which is what lets a deletion look for a
replacement edge level by level, starting from the deleted edge's depth.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterator

from .errors import DuplicateEdge, InvariantViolation, MissingEdge, SelfLoop, VertexRangeError
from .graph_model import PRIMARY, SECONDARY, WITNESS, EdgeRecord, edge_key, pair_index
from .hierarchy import PRECISION_PREFIX, HNode, Hierarchy
from .local_trees import LocalTreeConfig
from .oracle import components, o_max_spanning_forest_check
from .sampling import (
    DEFAULT_C1, DEFAULT_C2, DEFAULT_QUANTUM, ReplacementFound, enumeration_procedure, sampling_procedure,
)
from .witness_forest import EulerTourForest

AUDIT_LEVELS = ("off", "cheap", "full")
# a counter-precision miss is retried with c_h doubled up to this factor
MAX_C_H = 4


@dataclass
class EngineConfig:
    branching_factor: int = 8
    c1: int = DEFAULT_C1
    c2: int = DEFAULT_C2
    quantum: int = DEFAULT_QUANTUM
    audit: str = "off"
    c_h: int = 4
    local: LocalTreeConfig | None = None
    # test hook: "flip-query" makes connected() lie once the graph has edges
    fault: str | None = None


@dataclass
class AuditReport:
    ok: bool
    level: str
    failures: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok

    @property
    def first(self) -> str | None:
        return self.failures[0] if self.failures else None


class Engine:
    """Fully dynamic connectivity over vertices ``0..n-1``."""

    def __init__(self, n: int, seed: int = 0, config: EngineConfig | None = None) -> None:
        self.n = n
        self.config = config or EngineConfig()
        if self.config.audit not in AUDIT_LEVELS:
            raise ValueError(f"audit level must be one of {AUDIT_LEVELS}")
        self.seed = seed
        self.rng = random.Random(seed)
        self.h = Hierarchy(n, local_config=self.config.local)
        self.store = self.h.store
        self.forest = EulerTourForest(n, self.config.branching_factor)
        self.edges: dict[tuple[int, int], EdgeRecord] = {}
        self.counts: Counter[str] = Counter()

    @property
    def d_max(self) -> int:
        return self.h.d_max

    def _check(self, u: int, v: int) -> tuple[int, int]:
        for x in (u, v):
            if not (isinstance(x, int) and 0 <= x < self.n):
                raise VertexRangeError(f"vertex {x!r} outside [0, {self.n})")
        if u == v:
            raise SelfLoop(f"self-loop at {u}")
        return edge_key(u, v)

    # ------------------------------------------------------------ queries
    def connected(self, u: int, v: int) -> bool:
        for x in (u, v):
            if not (isinstance(x, int) and 0 <= x < self.n):
                raise VertexRangeError(f"vertex {x!r} outside [0, {self.n})")
        self.counts["queries"] += 1
        ans = self.forest.connected(u, v)
        if self.config.fault == "flip-query" and self.edges and u != v:
            return not ans
        return ans

    def has_edge(self, u: int, v: int) -> bool:
        return edge_key(u, v) in self.edges

    def edge(self, u: int, v: int) -> EdgeRecord:
        e = self.edges.get(edge_key(u, v))
        if e is None:
            raise MissingEdge(f"edge {edge_key(u, v)} not present")
        return e

    def __len__(self) -> int:
        return len(self.edges)

    # ------------------------------------------------------------ updates
    def insert(self, u: int, v: int) -> None:
        key = self._check(u, v)
        if key in self.edges:
            raise DuplicateEdge(f"edge {key} already present")
        h = self.h
        if self.forest.connected(u, v):
            e = EdgeRecord(u, v, 1, SECONDARY, SECONDARY)
            h.h_add_edge(e)
        else:
            h.merge_roots(h.root_of(u), h.root_of(v))
            e = EdgeRecord(u, v, 1, WITNESS, WITNESS)
            h.h_add_edge(e)
            self.forest.link(u, v)
        self.edges[key] = e
        self.counts["inserts"] += 1
        self._auto_audit()

    def delete(self, u: int, v: int) -> None:
        key = self._check(u, v)
        e = self.edges.pop(key, None)
        if e is None:
            raise MissingEdge(f"edge {key} not present")
        self.counts["deletes"] += 1
        self._note_lifetime(e)
        if e.is_witness:
            self._delete_witness(e)
        else:
            self.h.h_remove_edge(e)
        self._auto_audit()

    def _delete_witness(self, e: EdgeRecord) -> None:
        h = self.h
        cfg = self.config
        hu, hv = h.vnodes[e.u], h.vnodes[e.v]
        h.h_remove_edge(e)
        self.forest.cut(e.u, e.v)
        i = e.depth
        xu, xv = h.ancestor(hu, i), h.ancestor(hv, i)
        h.tear_path(xu)
        h.tear_path(xv)
        while True:
            par = h.parent(xu)
            group, weight = self._race(xu, xv, i, par.weight)
            if 2 * weight > par.weight:
                raise InvariantViolation(f"smaller side of weight {weight} exceeds half of {par.weight}")
            x = group[0]
            for b in group[1:]:
                h.merge_siblings(x, b)
            h.h_promote_witness(x, i)
            verdict = sampling_procedure(h, x, i, self.rng, cfg.c1, cfg.c2, cfg.quantum)
            if not isinstance(verdict, ReplacementFound):
                verdict = enumeration_procedure(h, x, i)
            if isinstance(verdict, ReplacementFound):
                r = verdict.edge
                h.h_convert_to_witness(r)
                self.forest.link(r.u, r.v)
                self.counts["replacements"] += 1
                break
            fresh = h.split(par, x)
            self.counts["splits"] += 1
            if par.key == 0:
                break
            i -= 1
            if x is xu:
                xu, xv = fresh, par
            else:
                xu, xv = par, fresh
        h.rebuild([h.path_to_root(hu), h.path_to_root(hv)])

    def _dfs(self, start: HNode, i: int) -> Iterator[None]:
        """Depth-``i`` nodes reachable from ``start`` over depth-``i`` witness edges; one step per edge."""
        h = self.h
        p = pair_index(i, WITNESS)
        seen = {id(start)}
        found = [start]
        stack = [start]
        while stack:
            y = stack.pop()
            for ep in h.iter_endpoints(y, i, WITNESS):
                yield
                z = h.forest_root(h.vnodes[ep.other().vertex], p)
                if id(z) not in seen:
                    seen.add(id(z))
                    found.append(z)
                    stack.append(z)
        return found

    def _race(self, xu: HNode, xv: HNode, i: int, total: int) -> tuple[list[HNode], int]:
        """Alternate both searches one step at a time and return the lighter side.

        Equal weights go to the side of the deleted edge's smaller endpoint.
        """
        sides = [self._dfs(xu, i), self._dfs(xv, i)]
        while True:
            for k, gen in enumerate(sides):
                try:
                    next(gen)
                except StopIteration as stop:
                    group = stop.value
                    w = sum(x.weight for x in group)
                    if w < total - w or (w == total - w and k == 0):
                        return group, w
                    other = sides[1 - k]
                    try:
                        while True:
                            next(other)
                    except StopIteration as rest:
                        return rest.value, total - w

    # ------------------------------------------------------------ audits
    def _auto_audit(self) -> None:
        if self.config.audit != "off":
            rep = self.validate(self.config.audit)
            if not rep:
                raise InvariantViolation(rep.first)

    def depths(self) -> dict[tuple[int, int], int]:
        return {k: e.depth for k, e in self.edges.items()}

    def components_at(self, i: int) -> list[int]:
        return components(self.n, (k for k, e in self.edges.items() if e.depth > i))

    def validate(self, level: str = "full", snapshot: dict | None = None) -> AuditReport:
        """Run the audits for ``level`` ("cheap" or "full"); report the first failure."""
        rep = AuditReport(True, level)
        checks: list[tuple[str, Callable[[], None]]] = [
            ("edge records", self._audit_edges),
            ("maximum spanning forest", self._audit_forest),
            ("weight property", self._audit_weights),
        ]
        if level == "full":
            checks.append(("witness forest", lambda: self.forest.audit()))
            checks.append(("hierarchy", lambda: self._audit_hierarchy(rep, snapshot)))
        for name, fn in checks:
            try:
                fn()
            except (AssertionError, InvariantViolation) as exc:
                rep.ok = False
                rep.failures.append(f"{name}: {exc}")
                break
        return rep

    def _audit_hierarchy(self, rep: AuditReport, snapshot: dict | None) -> None:
        """Hierarchy audit; a counter-precision miss is retried with a larger c_h before it counts."""
        c_h = self.config.c_h
        while True:
            try:
                self.h.audit(self.components_at, c_h, snapshot)
                return
            except InvariantViolation as exc:
                if not str(exc).startswith(PRECISION_PREFIX) or c_h >= MAX_C_H * self.config.c_h:
                    raise
                rep.notes.append(f"c_h={c_h} too small: {exc}")
                c_h *= 2

    def _audit_edges(self) -> None:
        d_max = self.d_max
        store = self.store
        want: Counter[tuple[int, int]] = Counter()
        for k, e in self.edges.items():
            if k != e.key or not 1 <= e.depth <= d_max:
                raise AssertionError(f"{e!r} has a bad key or depth")
            if e.is_witness != (e.type_v == WITNESS):
                raise AssertionError(f"{e!r} mixes witness and non-witness endpoints")
            for h, x, t in ((e.end_u, e.u, e.type_u), (e.end_v, e.v, e.type_v)):
                if h is None or h.vertex != x or h.pair != pair_index(e.depth, t):
                    raise AssertionError(f"endpoint of {e!r} at {x} is out of sync")
                want[(x, h.pair)] += 1
            if e.promotions > d_max or e.upgrades > 2 * d_max:
                raise AssertionError(f"{e!r} exceeded its lifetime event budget")
        have: Counter[tuple[int, int]] = Counter()
        for x in range(self.n):
            if store._stores[x]:
                for p, arr in store.lists(x).items():
                    for slot, h in enumerate(arr):
                        if h.slot != slot or h.vertex != x or h.pair != p:
                            raise AssertionError(f"endpoint store of {x} is inconsistent")
                        if self.edges.get(h.edge.key) is not h.edge:
                            raise AssertionError(f"stored endpoint of dead edge {h.edge.key}")
                    have[(x, p)] += len(arr)
        if have != want:
            raise AssertionError("endpoint counts differ from the live edge set")

    def _audit_forest(self) -> None:
        witness = {k for k, e in self.edges.items() if e.is_witness}
        if set(self.forest.edges()) != witness:
            raise AssertionError("witness forest edges differ from the witness edge set")
        if not o_max_spanning_forest_check(self.n, witness, self.depths()):
            raise AssertionError("witness edges are not a maximum spanning forest by depth")

    def _audit_weights(self) -> None:
        h = self.h
        for x in h.all_nodes():
            if x.weight > self.n / 2 ** x.key:
                raise AssertionError(f"weight property fails at {x!r}")

    # ------------------------------------------------------------ test hooks
    def corrupt_counter(self) -> bool:
        """Inflate one primary counter (fault injection); returns False when none exists."""
        h = self.h
        for x in h.all_nodes():
            for i in range(1, self.d_max + 1):
                if x.is_node & (1 << pair_index(i, PRIMARY)):
                    c = h.layout.get_value(x.cnt, i)
                    x.cnt = h.layout.set_count(x.cnt, i, 2 * c + 2)
                    return True
        return False

    def _note_lifetime(self, e: EdgeRecord) -> None:
        c = self.counts
        c["max_edge_promotions"] = max(c["max_edge_promotions"], e.promotions)
        c["max_edge_upgrades"] = max(c["max_edge_upgrades"], e.upgrades)

    def event_totals(self) -> dict[str, int]:
        """Operation and restructuring counters, including per-edge lifetime maxima."""
        for e in self.edges.values():
            self._note_lifetime(e)
        out = dict(self.counts)
        out.update({k: v for k, v in self.h.stats.items()})
        out.update({"sc_" + k: v for k, v in self.h.sp.stats.items()})
        return out
