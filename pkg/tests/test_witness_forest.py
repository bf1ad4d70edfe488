from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynconn.oracle import components
from dynconn.witness_forest import EulerTourForest


def test_link_and_cut_basics():
    f = EulerTourForest(4)
    assert f.connected(2, 2)
    assert not f.connected(0, 1)
    f.link(0, 1)
    assert f.connected(0, 1) and f.has_edge(1, 0)
    with pytest.raises(Exception):
        f.link(0, 1)
    f.link(1, 2)
    assert f.connected(0, 2)
    f.cut(1, 2)
    assert f.connected(0, 1) and not f.connected(0, 2)
    f.cut(0, 1)
    assert not f.connected(0, 1)
    with pytest.raises(Exception):
        f.cut(0, 1)
    f.audit()


def test_star_cut_separates_one_leaf():
    f = EulerTourForest(5)
    for leaf in range(1, 5):
        f.link(0, leaf)
    f.cut(0, 3)
    for u in range(5):
        for v in range(5):
            want = u == v or (3 not in (u, v))
            assert f.connected(u, v) == want


def random_forest(n, rng):
    edges = []
    lab = list(range(n))
    for _ in range(n):
        u, v = rng.sample(range(n), 2)
        if lab[u] != lab[v]:
            old = lab[v]
            lab[:] = [lab[u] if x == old else x for x in lab]
            edges.append((u, v))
    return edges


@pytest.mark.parametrize("b", [2, 3, 8])
def test_random_forest_matches_bfs(b):
    rng = random.Random(b)
    f = EulerTourForest(32, b)
    edges = random_forest(32, rng)
    for u, v in edges:
        f.link(u, v)
    lab = components(32, edges)
    for u in range(32):
        for v in range(32):
            assert f.connected(u, v) == (lab[u] == lab[v])
    assert sorted(f.edges()) == sorted((min(e), max(e)) for e in edges)
    f.audit()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32), st.sampled_from([2, 4, 16]))
def test_link_cut_scripts(seed, b):
    rng = random.Random(seed)
    n = 24
    f = EulerTourForest(n, b)
    edges: set = set()
    for _ in range(200):
        u, v = rng.sample(range(n), 2)
        key = (min(u, v), max(u, v))
        if key in edges:
            f.cut(u, v)
            edges.discard(key)
        elif not f.connected(u, v):
            f.link(u, v)
            edges.add(key)
        lab = components(n, edges)
        x, y = rng.sample(range(n), 2)
        assert f.connected(x, y) == (lab[x] == lab[y])
    f.audit()
    tour = f.tour(0)
    assert len(tour) >= 1
