from __future__ import annotations

import random

import pytest

from dynconn.counters import CounterLayout
from dynconn.errors import ContractError, EmptyPool
from dynconn.local_trees import LocalContext, LocalTree, LocalTreeConfig


class Owner:
    def __init__(self) -> None:
        self.weight = 0


class Child:
    def __init__(self, name: int, weight: int) -> None:
        self.name = name
        self.weight = weight
        self.leaf = None

    def __repr__(self) -> str:
        return f"C{self.name}"


N = 256
PAIRS = 3 * 8


def make_ctx(buffer_limit: int, top_limit: int) -> LocalContext:
    layout = CounterLayout.for_n(N)
    return LocalContext(layout, PAIRS, 3, LocalTreeConfig(buffer_limit, top_limit))


def random_status(rng: random.Random) -> int:
    s = 0
    for _ in range(rng.randint(0, 3)):
        s |= 1 << rng.randrange(6)
    return s


def random_cnt(ctx: LocalContext, status: int, rng: random.Random) -> int:
    c = 0
    for i in range(1, 3):
        if status >> (3 * (i - 1) + 1) & 1:
            c = ctx.layout.set_count(c, i, rng.randint(1, 300))
    return c


def brute(trees, owners, ctx):
    for t, o in zip(trees, owners):
        t.audit()
        leaves = t.leaves()
        assert sum(l.weight for l in leaves) == o.weight
        for p in range(6):
            want = sorted((l.child.name for l in leaves if l.status >> p & 1))
            got = sorted(c.name for c in t.enumerate_status(p))
            assert got == want
            u = t.unique_status_leaf(p)
            if len(want) == 1:
                assert u is not None and u.name == want[0]
            else:
                assert u is None


@pytest.mark.parametrize("limits", [(2, 2), (3, 2), (4, 3), (1, 2), (64, 8)])
@pytest.mark.parametrize("seed", range(6))
def test_random_local_tree_ops(limits, seed):
    rng = random.Random(seed * 31 + limits[0])
    ctx = make_ctx(*limits)
    owners = [Owner() for _ in range(3)]
    trees = [LocalTree(ctx, o) for o in owners]
    home: dict[int, int] = {}
    kids: dict[int, Child] = {}
    name = 0
    for step in range(400):
        op = rng.random()
        if op < 0.35 or not kids:
            k = rng.randrange(len(trees))
            c = Child(name, rng.randint(1, 9))
            name += 1
            st = random_status(rng)
            owners[k].weight += c.weight
            trees[k].add_child(c, st, random_cnt(ctx, st, rng))
            kids[c.name] = c
            home[c.name] = k
        elif op < 0.5:
            c = kids.pop(rng.choice(sorted(kids)))
            k = home.pop(c.name)
            owners[k].weight -= c.weight
            trees[k].delete_child(c.leaf)
        elif op < 0.75:
            c = kids[rng.choice(sorted(kids))]
            t = trees[home[c.name]]
            st = random_status(rng)
            t.set_status(c.leaf, st, random_cnt(ctx, st, rng))
        elif op < 0.85:
            c = kids[rng.choice(sorted(kids))]
            t = trees[home[c.name]]
            if c.leaf.status:
                bit = 1 << rng.choice([p for p in range(6) if c.leaf.status >> p & 1])
                t.remove_status(c.leaf, bit)
        elif op < 0.93:
            c = kids[rng.choice(sorted(kids))]
            k = home[c.name]
            dw = rng.randint(1, 5)
            c.weight += dw
            owners[k].weight += dw
            trees[k].reinsert(c.leaf)
        else:
            a, b = rng.sample(range(len(trees)), 2)
            trees[a].merge(trees[b])
            owners[a].weight += owners[b].weight
            owners[b].weight = 0
            for nm, k in home.items():
                if k == b:
                    home[nm] = a
            trees[b] = LocalTree(ctx, owners[b])
        if step % 7 == 0:
            brute(trees, owners, ctx)
    brute(trees, owners, ctx)


def test_bottom_snapshot_monotone():
    rng = random.Random(5)
    ctx = make_ctx(3, 2)
    o = Owner()
    t = LocalTree(ctx, o)
    kids = []
    for j in range(40):
        c = Child(j, rng.randint(1, 4))
        o.weight += c.weight
        st = random_status(rng) | 2
        t.add_child(c, st, random_cnt(ctx, st, rng))
        kids.append(c)
    snap: dict = {}
    t.audit(snap)
    for c in kids[:20]:
        c.leaf and t.update_counters_path(c.leaf, 0)
        t.audit(snap)
    assert any(not isinstance(l.parent, type(None)) for l in t.leaves())


def test_sampling_matches_counters():
    rng = random.Random(1)
    ctx = make_ctx(3, 2)
    o = Owner()
    t = LocalTree(ctx, o)
    kids = []
    for j in range(30):
        c = Child(j, 1)
        o.weight += 1
        st = 2 if j % 3 else 0
        t.add_child(c, st, ctx.layout.set_count(0, 1, j + 1) if st else 0)
        kids.append(c)
    total = sum(t.child_probability(c, 1) for c in kids)
    assert total == pytest.approx(1.0)
    draws = 20000
    hits = {c.name: 0 for c in kids}
    for _ in range(draws):
        hits[t.sample_primary_child(1, rng).name] += 1
    for c in kids:
        p = t.child_probability(c, 1)
        assert abs(hits[c.name] / draws - p) < 0.02
        if c.name % 3 == 0:
            assert hits[c.name] == 0


def test_empty_pool_and_foreign_leaf():
    ctx = make_ctx(4, 2)
    o = Owner()
    t = LocalTree(ctx, o)
    c = Child(0, 1)
    o.weight = 1
    t.add_child(c, 1, 0)
    with pytest.raises(EmptyPool):
        t.sample_primary_child(1, random.Random(0))
    other = LocalTree(ctx, Owner())
    with pytest.raises(ContractError):
        other.delete_child(c.leaf)
