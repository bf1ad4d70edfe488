from __future__ import annotations

import random

import pytest

from conftest import LAYERED_OTHERS, LAYERED_WITNESS, engine_with_depths, populate, random_hierarchy
from dynconn.counters import decode
from dynconn.errors import ContractError, InvariantViolation, NoParent
from dynconn.graph_model import PRIMARY, SECONDARY, WITNESS, EdgeRecord, pair_index
from dynconn.hierarchy import Hierarchy
from dynconn.oracle import components, o_exact_primary_count


def below(h, x):
    if x.vertex >= 0:
        return {x.vertex}
    return set().union(*(below(h, c) for c in h.children(x)))


def comps_for(h, edges):
    return lambda i: components(h.n, [e.key for e in edges if e.depth > i])


def test_witness_edge_sets_leaf_status():
    h = Hierarchy(4)
    h.merge_roots(h.root_of(0), h.root_of(1))
    e = EdgeRecord(0, 1, 1, WITNESS, WITNESS)
    h.h_add_edge(e)
    bit = 1 << pair_index(1, WITNESS)
    assert h.vnodes[0].is_node & bit and h.vnodes[1].is_node & bit
    h.audit(comps_for(h, [e]))
    h.h_remove_edge(e)
    assert not h.vnodes[0].is_node & bit
    h.audit(None)
    with pytest.raises(ContractError):
        h.h_remove_edge(e)


def test_primary_endpoints_keep_counters_in_band():
    rng = random.Random(2)
    h = random_hierarchy(64, rng)
    populate(h, rng, 300)
    h.audit(None)
    for x in h.all_nodes():
        for i in range(1, x.key + 1):
            exact = o_exact_primary_count(h, x, i)
            est = decode(h.h_primary_count(x, i))
            assert est <= exact
            if exact == 0:
                assert est == 0


def test_merge_promotes_inner_witness():
    h = Hierarchy(8)
    a = h.merge_roots(h.root_of(0), h.root_of(1))
    e = EdgeRecord(0, 1, 1, WITNESS, WITNESS)
    h.h_add_edge(e)
    x0, x1 = h.ancestor(h.vnodes[0], 1), h.ancestor(h.vnodes[1], 1)
    m = h.h_merge_promote([x0, x1])
    assert e.depth == 2 and e.is_witness and e.promotions == 1
    assert m.weight == 2 and below(h, m) == {0, 1}
    assert a.weight == 2
    h.audit(comps_for(h, [e]))


def test_merge_without_witness_is_structural():
    h = Hierarchy(8)
    a = h.merge_roots(h.root_of(0), h.root_of(1))
    e = EdgeRecord(0, 1, 1, SECONDARY, SECONDARY)
    h.h_add_edge(e)
    m = h.h_merge_promote([h.ancestor(h.vnodes[0], 1), h.ancestor(h.vnodes[1], 1)])
    assert e.depth == 1 and m.weight == 2 and h.children(a) == [m]
    h.audit(None)


def test_merge_of_roots():
    h = Hierarchy(8)
    r = h.h_merge_promote([h.root_of(0), h.root_of(1), h.root_of(2)])
    assert r.key == 0 and r.weight == 3 and h.roots == {r}
    h.audit(None)


def test_upgrade_secondary_grows_primary_pool():
    rng = random.Random(4)
    h = random_hierarchy(32, rng)
    populate(h, rng, 120)
    x = max((y for y in h.all_nodes() if y.key == 1), key=lambda y: y.weight)
    before = o_exact_primary_count(h, x, 1)
    sec = len(h.h_enumerate(x, 1, SECONDARY))
    assert h.h_upgrade_secondary(x, 1) == sec
    assert h.h_enumerate(x, 1, SECONDARY) == []
    assert o_exact_primary_count(h, x, 1) == before + sec
    h.audit(None)
    assert h.h_upgrade_secondary(x, 1) == 0


def test_promote_primary_moves_inner_edges():
    h = Hierarchy(16)
    a = h.root_of(0)
    for v in range(1, 4):
        a = h.merge_roots(a, h.root_of(v))
    w = [EdgeRecord(0, 1, 1), EdgeRecord(1, 2, 1)]
    for e in w:
        h.h_add_edge(e)
    x = h.h_merge_promote([h.ancestor(h.vnodes[v], 1) for v in range(3)])
    inner = [EdgeRecord(0, 2, 1, PRIMARY, PRIMARY)]
    outer = EdgeRecord(2, 3, 1, PRIMARY, PRIMARY)
    for e in inner + [outer]:
        h.h_add_edge(e)
    assert h.h_promote_primary(x, 1, []) == 0
    assert h.h_promote_primary(x, 1, inner) == 1
    assert inner[0].depth == 2 and inner[0].type_u == SECONDARY
    assert {ep.edge.key for ep in h.h_enumerate(x, 1, PRIMARY)} == {(2, 3)}
    assert len(h.h_enumerate(h.ancestor(h.vnodes[0], 2), 2, SECONDARY)) == 1
    assert h.store.total(2, SECONDARY) == 2
    with pytest.raises(ContractError):
        h.h_promote_primary(x, 1, inner)
    h.audit(comps_for(h, w + inner + [outer]))


def test_convert_to_witness():
    h = Hierarchy(8)
    h.merge_roots(h.root_of(0), h.root_of(1))
    e = EdgeRecord(0, 1, 1, PRIMARY, SECONDARY)
    h.h_add_edge(e)
    h.h_convert_to_witness(e)
    assert e.is_witness
    assert h.h_enumerate(h.ancestor(h.vnodes[0], 1), 1, PRIMARY) == []
    assert decode(h.h_primary_count(h.ancestor(h.vnodes[0], 1), 1)) == 0
    with pytest.raises(ContractError):
        h.h_convert_to_witness(e)
    h.audit(None)


def test_split_weights_and_restore():
    h = random_hierarchy(32, random.Random(9))
    par = max((y for y in h.all_nodes() if y.key == 1), key=lambda y: y.weight)
    kids = h.children(par)
    assert len(kids) >= 2
    child = kids[0]
    w_par, w_child = par.weight, child.weight
    fresh, same = h.h_split(par, child)
    assert same is par and fresh.key == par.key
    assert fresh.weight == w_child and par.weight == w_par - w_child
    assert h.children(fresh) == [child]
    h.audit(None)
    h.h_merge_promote([par, fresh])
    assert par.weight == w_par
    h.audit(None)
    with pytest.raises(ContractError):
        h.h_split(fresh, child)


def test_enumerate_matches_edge_filter():
    rng = random.Random(11)
    h = random_hierarchy(32, rng)
    edges = populate(h, rng, 200)
    for x in h.all_nodes():
        vs = below(h, x)
        for i in range(1, x.key + 1):
            for t in (WITNESS, PRIMARY, SECONDARY):
                got = sorted((ep.vertex, ep.edge.key) for ep in h.h_enumerate(x, i, t))
                want = sorted((v, e.key) for e in edges if e.depth == i
                              for v, tv in ((e.u, e.type_u), (e.v, e.type_v)) if tv == t and v in vs)
                assert got == want


def test_parent_queries():
    h = Hierarchy(4)
    x = h.node_for(0)
    with pytest.raises(NoParent):
        h.h_parent(h.root_of(0))
    assert h.h_parent(x).key == h.d_max - 1


def test_audit_catches_corruption():
    rng = random.Random(5)
    h = random_hierarchy(32, rng)
    populate(h, rng, 80)
    h.audit(None)
    x = next(y for y in h.all_nodes() if y.vertex < 0 and y.is_node & (1 << pair_index(1, PRIMARY)))
    x.cnt = h.layout.set_count(x.cnt, 1, 10 ** 6)
    with pytest.raises(InvariantViolation):
        h.audit(None)


def test_audit_catches_bad_status_bits():
    rng = random.Random(6)
    h = random_hierarchy(32, rng)
    populate(h, rng, 40)
    x = next(y for y in h.all_nodes() if y.key == 2)
    x.is_branching ^= 1 << pair_index(1, SECONDARY)
    with pytest.raises(InvariantViolation):
        h.audit(None)


def test_layered_graph_delete_promotes_and_merges():
    eng = engine_with_depths(15, LAYERED_WITNESS, LAYERED_OTHERS)
    h = eng.h
    assert h.ancestor(h.vnodes[1], 2) is not h.ancestor(h.vnodes[2], 2)
    eng.delete(2, 4)
    # the lighter side {0, 1, 2} merged at depth 2 and (1, 2) moved down a level
    assert eng.edge(1, 2).depth == 3
    assert below(h, h.ancestor(h.vnodes[2], 2)) == {0, 1, 2}
    assert eng.edge(2, 3).is_witness
    assert eng.validate("full")
