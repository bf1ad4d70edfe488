from __future__ import annotations

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dynconn.errors import ContractError, CorruptionError
from dynconn.shortcuts import ShortcutSpace, crosses, eligible, lsb_index, power_of, shortcuts_oracle


class Node:
    def __init__(self, key: int) -> None:
        self.key = key
        self.sc = None
        self.is_node = 0

    def __repr__(self) -> str:
        return f"N{self.key}"


def fundamental_path(sp: ShortcutSpace, lo: int, hi: int, bits: int) -> list[Node]:
    """Nodes keyed ``lo..hi`` joined by fundamentals carrying ``bits``; both ends are forest nodes."""
    nodes = [Node(k) for k in range(lo, hi + 1)]
    for a, b in zip(nodes, nodes[1:]):
        sp.set_membership(sp.get_or_create(a, b), bits)
    nodes[0].is_node = nodes[-1].is_node = bits
    return nodes


def keys(chain):
    return {(s.top.key, s.bottom.key) for s in chain}


def test_lsb_index():
    assert lsb_index(1) == 0
    assert lsb_index(8) == 3
    assert lsb_index(12) == 2
    with pytest.raises(ContractError):
        lsb_index(0)


def test_power():
    assert power_of(2, 3) == 0
    assert power_of(5, 9) == 1
    assert power_of(7, 15) == 3


def test_oracle_examples():
    assert shortcuts_oracle([3, 4]) == {(3, 4)}
    got = shortcuts_oracle(list(range(5, 15)))
    assert got == {(5, 7), (7, 11), (11, 13), (13, 14)}
    assert len(got) <= 2 * 4


@given(st.integers(0, 200), st.integers(2, 40))
def test_oracle_chains_without_crossing(lo, length):
    ks = list(range(lo, lo + length))
    got = sorted(shortcuts_oracle(ks))
    assert got[0][0] == ks[0] and got[-1][1] == ks[-1]
    for (a, b), (c, d) in zip(got, got[1:]):
        assert b == c
    for x in got:
        for y in got:
            assert not crosses((x[0], x[1]), (y[0], y[1]))
    for a, b in got:
        assert eligible(ks, a - lo, b - lo)


def test_lookups_and_membership():
    sp = ShortcutSpace(9, 2)
    a, b = Node(2), Node(3)
    assert sp.get_down(a, 4) is None and sp.get_up(b, 4) is None
    s = sp.get_or_create(a, b)
    sp.set_membership(s, 1 << 4 | 1 << 6)
    assert sp.get_down(a, 4) is s and sp.get_down(a, 6) is s and sp.get_up(b, 6) is s
    sp.clear_membership(s, 1 << 4)
    assert sp.get_down(a, 4) is None and sp.get_down(a, 6) is s
    sp.clear_membership(s, 1 << 6)
    assert a.sc.empty() and b.sc.empty()


def test_uncover_and_cover_back():
    sp = ShortcutSpace(9, 2)
    n5, n6, n7 = fundamental_path(sp, 5, 7, 0b11)
    n5.is_node = n7.is_node = 0b11
    assert sp.traverse_down(n5, 0) is n7
    assert sp.traverse_down(n5, 1) is n7
    top = sp.get_down(n5, 0)
    assert sp.get_down(n5, 1) is top
    assert (top.top.key, top.bottom.key, top.power) == (5, 7, 1)
    a, b = sp.uncover(top, 0)
    assert keys([a, b]) == {(5, 6), (6, 7)}
    assert sp.get_down(n5, 1) is top  # the other pair still rides the covering shortcut
    with pytest.raises(ContractError):
        sp.uncover(a, 0)
    c = sp.cover(a, b, 1 << 0)
    assert c is top and c.members == 0b11
    for x in (n5, n6, n7):
        sp.audit_node(x)
    sp.audit_refs([n5, n6, n7])


def test_traverse_builds_maximal_cover():
    sp = ShortcutSpace(9, 4)
    nodes = fundamental_path(sp, 5, 14, 1 << 2)
    assert sp.traverse_down(nodes[0], 2) is nodes[-1]
    assert keys(sp.chain(nodes[0], 2)) == {(5, 7), (7, 11), (11, 13), (13, 14)}
    before = sp.stats["covered"]
    steps = sp.stats["steps"]
    assert sp.traverse_down(nodes[0], 2) is nodes[-1]
    assert sp.stats["covered"] == before
    assert sp.stats["steps"] - steps == 4
    for x in nodes:
        sp.audit_node(x)


def test_single_fundamental():
    sp = ShortcutSpace(9, 2)
    a, b = fundamental_path(sp, 3, 4, 1)
    assert sp.traverse_down(a, 0) is b
    assert sp.stats["covered"] == 0


@pytest.mark.parametrize("seed", range(20))
def test_traverse_matches_oracle_on_random_paths(seed):
    rng = random.Random(seed)
    lo = rng.randint(0, 60)
    hi = lo + rng.randint(1, 40)
    sp = ShortcutSpace(9, 6)
    nodes = fundamental_path(sp, lo, hi, 1 << 3)
    sp.traverse_down(nodes[0], 3)
    assert keys(sp.chain(nodes[0], 3)) == shortcuts_oracle(list(range(lo, hi + 1)))


def test_cover_path_and_dismantle():
    sp = ShortcutSpace(9, 4)
    nodes = fundamental_path(sp, 5, 14, 1 << 1)
    sp.cover_path(nodes)
    assert keys(sp.chain(nodes[0], 1)) == {(5, 7), (7, 11), (11, 13), (13, 14)}
    sp.cover_path(nodes)  # idempotent
    assert keys(sp.chain(nodes[0], 1)) == {(5, 7), (7, 11), (11, 13), (13, 14)}
    released = []

    def release(s):
        released.append((s.top.key, s.bottom.key))
        sp.clear_membership(s, s.members)

    sp.dismantle(nodes[0], release)
    assert released == [(5, 6)]
    assert sp.get_down(nodes[0], 1) is None
    assert keys(sp.chain(nodes[1], 1)) == {(6, 7), (7, 11), (11, 13), (13, 14)}


def test_dangling_chain_is_reported():
    sp = ShortcutSpace(9, 2)
    a, b = Node(1), Node(2)
    sp.set_membership(sp.get_or_create(a, b), 1)
    with pytest.raises(CorruptionError):
        sp.traverse_down(a, 0)
    with pytest.raises(CorruptionError):
        sp.traverse_down(b, 0)
