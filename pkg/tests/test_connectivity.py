from __future__ import annotations

import random

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import LAYERED_OTHERS, LAYERED_WITNESS, engine_with_depths
from dynconn import Engine, EngineConfig
from dynconn.errors import DuplicateEdge, InvariantViolation, MissingEdge, SelfLoop, VertexRangeError
from dynconn.graph_model import SECONDARY
from dynconn.local_trees import LocalTreeConfig
from dynconn.oracle import OracleGraph


def test_first_edge_and_triangle():
    eng = Engine(4)
    assert not eng.connected(0, 1)
    assert eng.connected(2, 2)
    eng.insert(0, 1)
    assert eng.edge(0, 1).is_witness and eng.connected(0, 1)
    eng.insert(1, 2)
    eng.insert(0, 2)
    e = eng.edge(0, 2)
    assert not e.is_witness and e.type_u == SECONDARY and e.type_v == SECONDARY
    assert eng.validate("full")


def test_bridge_of_two_vertices():
    eng = Engine(2)
    eng.insert(0, 1)
    eng.delete(0, 1)
    assert not eng.connected(0, 1)
    assert len(eng) == 0 and eng.validate("full")


def test_errors():
    eng = Engine(4)
    eng.insert(0, 1)
    with pytest.raises(DuplicateEdge):
        eng.insert(1, 0)
    with pytest.raises(SelfLoop):
        eng.insert(2, 2)
    with pytest.raises(MissingEdge):
        eng.delete(2, 3)
    with pytest.raises(VertexRangeError):
        eng.insert(0, 4)
    with pytest.raises(VertexRangeError):
        eng.connected(-1, 0)
    with pytest.raises(ValueError):
        Engine(4, config=EngineConfig(audit="loud"))


def test_layered_graph_witnesses():
    eng = engine_with_depths(15, LAYERED_WITNESS, LAYERED_OTHERS)
    assert eng.d_max == 3
    assert {k for k, e in eng.edges.items() if e.is_witness} == set(LAYERED_WITNESS)
    assert eng.validate("full")


def test_layered_delete_finds_replacement_at_same_depth():
    eng = engine_with_depths(15, LAYERED_WITNESS, LAYERED_OTHERS)
    eng.delete(2, 4)
    assert eng.edge(1, 2).depth == 3
    r = eng.edge(2, 3)
    assert r.is_witness and r.depth == 2
    assert eng.counts["replacements"] == 1 and eng.counts["splits"] == 0
    assert eng.connected(2, 4)
    assert eng.validate("full")


def test_layered_delete_walks_up_two_levels():
    eng = engine_with_depths(15, LAYERED_WITNESS, LAYERED_OTHERS)
    eng.delete(2, 4)
    eng.delete(3, 4)
    assert eng.counts["splits"] == 2
    assert eng.edge(4, 5).depth == 3  # promoted when 4 and {5, 6} merged
    r = eng.edge(0, 5)
    assert r.is_witness and r.depth == 1
    assert eng.connected(3, 4)
    assert eng.validate("full")


def test_validate_reports_corrupted_counter():
    eng = Engine(16)
    rng = random.Random(1)
    for _ in range(40):
        u, v = rng.sample(range(16), 2)
        if not eng.has_edge(u, v):
            eng.insert(u, v)
    # upgrade secondaries so that some primary counters exist
    for (u, v) in list(eng.edges)[:10]:
        eng.delete(u, v)
    assert eng.validate("full")
    assert eng.corrupt_counter()
    rep = eng.validate("full")
    assert not rep.ok and "counter" in rep.first
    assert eng.validate("cheap")
    assert rep.notes == []  # an inflated counter is never a precision question


def test_precision_miss_is_retried_with_larger_constant():
    from dynconn.graph_model import PRIMARY, pair_index

    eng = Engine(16)
    rng = random.Random(1)
    for _ in range(40):
        u, v = rng.sample(range(16), 2)
        if not eng.has_edge(u, v):
            eng.insert(u, v)
    for (u, v) in list(eng.edges)[:10]:
        eng.delete(u, v)
    h = eng.h
    x, i = next((x, i) for x in h.all_nodes() for i in range(1, eng.d_max + 1)
                if x.is_node & (1 << pair_index(i, PRIMARY)) and h.layout.get_value(x.cnt, i) > 0)
    x.cnt = h.layout.set_count(x.cnt, i, 0)
    rep = eng.validate("full")
    assert not rep.ok and "counter precision" in rep.first
    assert [note.split()[0] for note in rep.notes] == ["c_h=4", "c_h=8"]


def test_empty_engine_validates():
    assert Engine(1).validate("full")
    assert Engine(5).validate("cheap")


def run_script(n, ops, seed, config):
    eng = Engine(n, seed, config)
    orc = OracleGraph(n)
    for op, u, v in ops:
        if op == "I":
            eng.insert(u, v)
            orc.add_edge(u, v)
        elif op == "D":
            eng.delete(u, v)
            orc.remove_edge(u, v)
        else:
            assert eng.connected(u, v) == orc.o_connected(u, v)
    return eng


def random_ops(n, count, rng):
    live = set()
    ops = []
    for _ in range(count):
        r = rng.random()
        if live and r < 0.35:
            u, v = rng.choice(sorted(live))
            live.discard((u, v))
            ops.append(("D", u, v))
        elif r < 0.7:
            u, v = sorted(rng.sample(range(n), 2))
            if (u, v) in live:
                continue
            live.add((u, v))
            ops.append(("I", u, v))
        else:
            ops.append(("Q", *rng.sample(range(n), 2)))
    return ops


@pytest.mark.parametrize("seed", range(6))
def test_random_script_matches_oracle_with_full_audit(seed):
    rng = random.Random(seed)
    n = rng.choice([5, 9, 16, 33])
    run_script(n, random_ops(n, 400, rng), seed, EngineConfig(audit="full"))


def test_long_script_matches_oracle():
    rng = random.Random(99)
    eng = run_script(128, random_ops(128, 10 ** 4, rng), 99, EngineConfig())
    assert eng.validate("full")


@pytest.mark.parametrize("cfg", [
    EngineConfig(branching_factor=2, audit="full"),
    EngineConfig(c1=1, c2=1, quantum=1, audit="full"),
    EngineConfig(local=LocalTreeConfig(2, 2), audit="full"),
], ids=["b2", "tiny-constants", "tiny-local"])
def test_configurations(cfg):
    rng = random.Random(3)
    run_script(24, random_ops(24, 400, rng), 3, cfg)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(2, 20), st.integers(0, 2 ** 32), st.integers(0, 2 ** 32))
def test_property_any_seed_matches_oracle(n, script_seed, engine_seed):
    rng = random.Random(script_seed)
    run_script(n, random_ops(n, 150, rng), engine_seed, EngineConfig(audit="cheap"))


def test_lifetime_budgets():
    rng = random.Random(5)
    eng = run_script(64, random_ops(64, 4000, rng), 5, EngineConfig())
    t = eng.event_totals()
    assert t["max_edge_promotions"] <= eng.d_max
    assert t["max_edge_upgrades"] <= 2 * eng.d_max


def test_auto_audit_raises_on_fault():
    eng = Engine(16)
    rng = random.Random(1)
    for _ in range(40):
        u, v = rng.sample(range(16), 2)
        if not eng.has_edge(u, v):
            eng.insert(u, v)
    for (u, v) in list(eng.edges)[:10]:
        eng.delete(u, v)
    assert eng.corrupt_counter()
    eng.config.audit = "full"
    u, v = next((u, v) for u in range(16) for v in range(u + 1, 16) if not eng.has_edge(u, v))
    with pytest.raises(InvariantViolation):
        eng.insert(u, v)


# A split that makes the grandparent branch for a pair must mark it as a forest node.
SPLIT_BRANCH_SCRIPT = (
    "I22,6 I6,43 I6,1 I25,35 I19,28 I37,0 I39,23 I37,46 I30,13 I10,22 I4,42 I9,30 I48,30 I42,24 I36,34 "
    "I15,43 I25,4 I3,48 I4,17 I24,3 I37,13 I32,0 I48,33 I32,9 I13,9 I23,36 I35,34 I9,39 I15,28 I0,19 "
    "I10,44 I45,36 I41,33 I33,39 I21,33 I33,31 D23,39 I45,0 I5,33 I39,19 I1,17 I32,7 I3,20 D30,48 D0,19 "
    "D0,32 I24,30 I32,40 I30,39 D13,30 D33,39 D9,32 D9,39 "
)


def test_split_that_creates_branching_keeps_node_bits():
    ops = [(w[0], *map(int, w[1:].split(","))) for w in SPLIT_BRANCH_SCRIPT.split()]
    eng = Engine(50, 2200, EngineConfig(audit="full"))
    for c, u, v in ops:
        (eng.insert if c == "I" else eng.delete)(u, v)
    assert eng.counts["splits"] >= 1
