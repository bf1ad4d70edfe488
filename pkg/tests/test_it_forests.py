from __future__ import annotations

import random

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import TINY_LOCAL, populate, random_hierarchy
from dynconn.errors import ContractError, NoParent
from dynconn.graph_model import PRIMARY, SECONDARY, WITNESS, EdgeRecord, iter_bits, pair_index
from dynconn.hierarchy import Hierarchy
from dynconn.it_forests import definitional_status, itf_bulk_retag, itf_children, itf_parent


def brute_parent(h, x, p):
    y = h.parent(x)
    while not y.is_node & (1 << p):
        y = h.parent(y)
    return y


def check_navigation(h):
    for x in h.all_nodes():
        for p in iter_bits(x.is_node):
            i = p // 3 + 1
            t = p % 3
            if x.key > i:
                assert itf_parent(h, x, i, t) is brute_parent(h, x, p)
            else:
                with pytest.raises(NoParent):
                    itf_parent(h, x, i, t)
            for c in itf_children(h, x, i, t):
                assert c.is_node & (1 << p)
                assert itf_parent(h, c, i, t) is x


def test_two_leaves_under_one_root():
    h = Hierarchy(4)
    a = h.merge_roots(h.root_of(0), h.root_of(1))
    e = EdgeRecord(0, 1, 1, SECONDARY, SECONDARY)
    h.h_add_edge(e)
    p = pair_index(1, SECONDARY)
    x0, x1 = h.vnodes[0], h.vnodes[1]
    r = h.ancestor(x0, 1)
    assert r is not h.ancestor(x1, 1)  # separate depth-1 nodes
    assert itf_parent(h, x0, 1, SECONDARY) is r
    with pytest.raises(NoParent):
        itf_parent(h, r, 1, SECONDARY)
    assert itf_children(h, x0, 1, SECONDARY) == []
    assert a.is_node & (1 << p) == 0
    h.audit(None)


def test_first_leaf_builds_single_chain():
    h = Hierarchy(16)
    h.merge_roots(h.root_of(0), h.root_of(1))
    e = EdgeRecord(0, 1, 1, PRIMARY, PRIMARY)
    h.h_add_edge(e)
    p = pair_index(1, PRIMARY)
    assert not any(x.is_branching & (1 << p) for x in h.all_nodes())
    h.audit(None)
    # the chain from the depth-1 root reaches the leaf
    r = h.ancestor(h.vnodes[0], 1)
    assert h.forest_children(r, p) == [h.vnodes[0]]


def test_second_leaf_creates_one_branching_node():
    h = random_hierarchy(16, random.Random(1))
    p = pair_index(1, SECONDARY)
    root = h.ancestor(h.vnodes[0], 1)
    below = [x.vertex for x in h.all_nodes() if x.vertex >= 0 and h.ancestor(x, 1) is root]
    assert len(below) >= 2
    other = [v for v in range(16) if v not in below][0]
    e1 = EdgeRecord(below[0], other, 1, SECONDARY, SECONDARY)
    h.h_add_edge(e1)
    before = sum(1 for x in h.all_nodes() if x.is_branching & (1 << p))
    e2 = EdgeRecord(below[1], other if other != below[1] else below[0], 1, SECONDARY, SECONDARY)
    h.h_add_edge(e2)
    after = sum(1 for x in h.all_nodes() if x.is_branching & (1 << p))
    assert after - before in (1, 2)  # one new branching node on each endpoint's side at most
    h.audit(None)
    h.h_remove_edge(e2)
    assert sum(1 for x in h.all_nodes() if x.is_branching & (1 << p)) == before
    h.audit(None)


@pytest.mark.parametrize("local", [None, TINY_LOCAL], ids=["default", "tiny"])
@pytest.mark.parametrize("seed", range(4))
def test_random_adds_and_removes_match_definition(seed, local):
    rng = random.Random(seed)
    h = random_hierarchy(32, rng, local)
    edges = populate(h, rng, 60)
    h.audit(None)
    check_navigation(h)
    rng.shuffle(edges)
    for e in edges[:40]:
        h.h_remove_edge(e)
    h.audit(None)
    check_navigation(h)
    for e in edges[:40]:
        h.h_add_edge(e)
    h.audit(None)


def test_many_adds_keep_audit():
    rng = random.Random(7)
    h = random_hierarchy(64, rng)
    populate(h, rng, 1000)
    h.audit(None)
    check_navigation(h)


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10 ** 6), st.integers(1, 40))
def test_property_status_bits(seed, m):
    rng = random.Random(seed)
    h = random_hierarchy(16, rng, TINY_LOCAL)
    edges = populate(h, rng, m)
    for e in edges[: m // 2]:
        h.h_remove_edge(e)
    h.audit(None)


def _retag_setup(seed):
    rng = random.Random(seed)
    h = random_hierarchy(32, rng)
    populate(h, rng, 40)
    return h


def below(h, x):
    if x.vertex >= 0:
        return frozenset([x.vertex])
    return frozenset().union(*(below(h, c) for c in h.children(x)))


def _truth(h, extra):
    nodes = h.all_nodes()
    return definitional_status(nodes, h.children, lambda x: h.leaf_bits(x) ^ extra.get(id(x), 0),
                               h.depth_mask, h.root_mask)


@pytest.mark.parametrize("seed", range(3))
def test_bulk_retag_matches_single_operations(seed):
    i, t = 1, SECONDARY
    p, p2 = pair_index(i, t), pair_index(i + 1, SECONDARY)
    results = []
    for bulk in (True, False):
        h = _retag_setup(seed)
        roots = [x for x in h.all_nodes() if x.key == i and x.is_node & (1 << p)]
        root = max(roots, key=lambda x: len(list(h.forest_leaves(x, p))))
        leaves = list(h.forest_leaves(root, p))
        s_plus = [x for x in leaves if not x.is_node & (1 << p2)]
        s_minus = leaves[::2]
        if bulk:
            itf_bulk_retag(h, root, s_minus, s_plus, i, t, i + 1, SECONDARY)
        else:
            for x in s_plus:
                h.add_leaf(x, p2)
            for x in s_minus:
                h.remove_leaf(x, p)
        extra = {}
        for x in s_plus:
            extra[id(x)] = extra.get(id(x), 0) | 1 << p2
        for x in s_minus:
            extra[id(x)] = extra.get(id(x), 0) | 1 << p
        truth = _truth(h, extra)
        for x in h.all_nodes():
            assert (x.is_node, x.is_branching) == truth[id(x)][1:]
        results.append({(x.key, below(h, x)): (x.is_node, x.is_branching) for x in h.all_nodes()})
    assert results[0] == results[1]


def test_bulk_retag_dissolve_and_range():
    h = _retag_setup(5)
    p = pair_index(1, SECONDARY)
    root = next(x for x in h.all_nodes() if x.key == 1 and x.is_node & (1 << p))
    leaves = list(h.forest_leaves(root, p))
    with pytest.raises(ContractError):
        itf_bulk_retag(h, root, [], leaves, 1, SECONDARY, 3, SECONDARY)
    itf_bulk_retag(h, root, leaves, [], 1, SECONDARY, 1, SECONDARY)
    assert not root.is_node & (1 << p)
    stack = [root]
    while stack:
        x = stack.pop()
        assert not x.is_node & (1 << p)
        stack.extend(h.children(x))


def test_witness_pairs_form_forests_too():
    h = Hierarchy(8)
    a = h.root_of(0)
    for v in range(1, 4):
        a = h.merge_roots(a, h.root_of(v))
    for u, v in ((0, 1), (1, 2), (2, 3)):
        h.h_add_edge(EdgeRecord(u, v, 1, WITNESS, WITNESS))
    p = pair_index(1, WITNESS)
    for v in range(4):
        r = h.forest_root(h.vnodes[v], p)
        assert r.key == 1 and r is h.ancestor(h.vnodes[v], 1)
    h.audit(None)
