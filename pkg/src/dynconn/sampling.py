"""Replacement-edge sampling for the deletion cascade.

After a deletion splits a component at depth ``i``, the smaller side ``u`` looks
for a depth-``i`` non-witness edge with exactly one endpoint inside it.  The
sampling procedure draws ``i``-primary endpoints below ``u`` (almost) uniformly:

* stage 1 draws a handful of endpoints and stops at the first replacement;
* stage 2 draws more and stops only if a strict majority are replacements.

When both stages fail the caller runs :func:`enumeration_procedure`, which is
exact.  Sampling never affects correctness, only how much work is done.

Draws come from :func:`batch_sampling_test`, which interleaves two strategies
and keeps the first to finish: independent top-down walks, or enumerating the
whole pool once and drawing from a flat list.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Generator, Union

from .counters import decode
from .errors import EmptyPool
from .graph_model import PRIMARY, SECONDARY, EdgeRecord, Endpoint, pair_index

DEFAULT_C1 = 4
DEFAULT_C2 = 8
DEFAULT_QUANTUM = 64


@dataclass(frozen=True)
class SampleOutcome:
    endpoint: Endpoint
    other_vertex: int
    is_replacement: bool


@dataclass(frozen=True)
class ReplacementFound:
    edge: EdgeRecord = field(compare=False)

    @property
    def key(self) -> tuple[int, int]:
        return self.edge.key


@dataclass(frozen=True)
class FewReplacements:
    stage: int
    replacements: int
    samples: int


@dataclass(frozen=True)
class NoReplacement:
    promoted: int


SamplingVerdict = Union[ReplacementFound, FewReplacements]
EnumerationVerdict = Union[ReplacementFound, NoReplacement]

_Steps = Generator[None, None, object]


# ------------------------------------------------------------ single sample
def _replacement_steps(h, u, ep: Endpoint, i: int) -> _Steps:
    """Is the partner of ``ep`` outside ``u``?  Climbs forest parents of the partner's pair."""
    o = ep.other()
    z = h.vnodes[o.vertex]
    while z.key > i:
        yield
        z = h.forest_parent(z, o.pair)
    return z is not u


def _walk_steps(h, u, i: int, rng: random.Random) -> _Steps:
    p = pair_index(i, PRIMARY)
    bit = 1 << p
    if not u.is_node & bit:
        raise EmptyPool(f"no depth-{i} primary endpoints below {u!r}")
    y = u
    while y.vertex < 0:
        yield
        lt = y.lt
        if lt.status & bit:
            y = h.descend(lt.sample_primary_child(i, rng), p)
        else:
            y = h.sp.traverse_down(y, p)
    yield
    ep = h.store.sample_uniform(y.vertex, i, PRIMARY, rng)
    rep = yield from _replacement_steps(h, u, ep, i)
    return SampleOutcome(ep, ep.other().vertex, rep)


def _drive(gen: _Steps):
    try:
        while True:
            next(gen)
    except StopIteration as stop:
        return stop.value


def single_sample(h, u, i: int, rng: random.Random) -> SampleOutcome:
    """One draw from the depth-``i`` primary pool below ``u`` by a counter-guided walk."""
    return _drive(_walk_steps(h, u, i, rng))


def is_replacement(h, u, ep: Endpoint, i: int) -> bool:
    return _drive(_replacement_steps(h, u, ep, i))


# ------------------------------------------------------------ preprocessing
@dataclass
class IndexedPool:
    """All primary endpoints below a node, with the node's endpoints stamped by ``epoch``."""

    endpoints: list[Endpoint]
    epoch: int

    def __len__(self) -> int:
        return len(self.endpoints)

    def is_replacement(self, ep: Endpoint) -> bool:
        return ep.other().mark != self.epoch

    def draw(self, rng: random.Random) -> SampleOutcome:
        if not self.endpoints:
            raise EmptyPool("empty pool")
        ep = self.endpoints[rng.randrange(len(self.endpoints))]
        return SampleOutcome(ep, ep.other().vertex, self.is_replacement(ep))


def _preprocess_steps(h, u, i: int) -> _Steps:
    epoch = h.new_epoch()
    pool: list[Endpoint] = []
    for t in (PRIMARY, SECONDARY):
        for ep in h.iter_endpoints(u, i, t):
            yield
            ep.mark = epoch
            if t == PRIMARY:
                pool.append(ep)
    return IndexedPool(pool, epoch)


def preprocess_pool(h, u, i: int) -> IndexedPool:
    """Enumerate and stamp every depth-``i`` primary and secondary endpoint below ``u``."""
    return _drive(_preprocess_steps(h, u, i))


# ------------------------------------------------------------ batch test
def _singles(h, u, i: int, k: int, rng: random.Random) -> _Steps:
    out = []
    for _ in range(k):
        out.append((yield from _walk_steps(h, u, i, rng)))
    return out


def _pooled(h, u, i: int, k: int, rng: random.Random) -> _Steps:
    pool = yield from _preprocess_steps(h, u, i)
    out = []
    for _ in range(k):
        yield
        out.append(pool.draw(rng))
    return out


def batch_sampling_test(h, u, i: int, k: int, rng: random.Random,
                        quantum: int = DEFAULT_QUANTUM) -> list[SampleOutcome]:
    """``k`` independent draws; walks and preprocessing race in slices of ``quantum`` steps.

    When one strategy finishes, the other may still catch up to the same step
    count; the one that needed fewer steps wins, so the work done is at most
    twice the cheaper strategy's (plus one slice).
    """
    if not u.is_node & (1 << pair_index(i, PRIMARY)):
        raise EmptyPool(f"no depth-{i} primary endpoints below {u!r}")
    names = ("walk", "pool")
    gens = [_singles(h, u, i, k, rng), _pooled(h, u, i, k, rng)]
    steps = [0, 0]

    def run(j: int, budget: int):
        try:
            for _ in range(budget):
                next(gens[j])
                steps[j] += 1
        except StopIteration as stop:
            return stop
        return None

    while True:
        for j in (0, 1):
            done = run(j, quantum)
            if done is None:
                continue
            other = 1 - j
            late = run(other, steps[j] - steps[other])
            win, out = (other, late.value) if late is not None and steps[other] < steps[j] else (j, done.value)
            h.stats["batch_" + names[win]] += 1
            for g in gens:
                g.close()
            return out


# ------------------------------------------------------------ procedures
def sample_sizes(s_hat: int, c1: int = DEFAULT_C1, c2: int = DEFAULT_C2) -> tuple[int, int]:
    """Stage sizes for an estimated pool of ``s_hat`` endpoints."""
    k1 = c1 * max(1, math.ceil(math.log2(math.log2(s_hat + 2))))
    k2 = c2 * max(1, math.ceil(math.log2(s_hat + 2)))
    return k1, k2


def sampling_procedure(h, u, i: int, rng: random.Random, c1: int = DEFAULT_C1, c2: int = DEFAULT_C2,
                       quantum: int = DEFAULT_QUANTUM) -> SamplingVerdict:
    s_hat = decode(h.h_primary_count(u, i))
    if s_hat == 0:
        return FewReplacements(0, 0, 0)
    k1, k2 = sample_sizes(s_hat, c1, c2)
    for o in batch_sampling_test(h, u, i, k1, rng, quantum):
        if o.is_replacement:
            h.stats["found_stage1"] += 1
            return ReplacementFound(o.endpoint.edge)
    hits = [o for o in batch_sampling_test(h, u, i, k2, rng, quantum) if o.is_replacement]
    if 2 * len(hits) > k2:
        h.stats["found_stage2"] += 1
        return ReplacementFound(hits[0].endpoint.edge)
    return FewReplacements(2, len(hits), k2)


def enumeration_procedure(h, u, i: int) -> EnumerationVerdict:
    """Exact search: upgrade secondaries, then classify every primary edge below ``u``."""
    h.stats["enumerations"] += 1
    h.h_upgrade_secondary(u, i)
    marks: Counter[int] = Counter()
    edges: dict[int, EdgeRecord] = {}
    for ep in h.h_enumerate(u, i, PRIMARY):
        marks[id(ep.edge)] += 1
        edges[id(ep.edge)] = ep.edge
    single = [edges[k] for k, m in marks.items() if m == 1]
    double = [edges[k] for k, m in marks.items() if m == 2]
    if double:
        h.h_promote_primary(u, i, double)
    if single:
        return ReplacementFound(min(single, key=lambda e: e.key))
    return NoReplacement(len(double))
