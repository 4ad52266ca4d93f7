import math

import pytest
from hypothesis import given, settings, strategies as st

from latchconv.phase_ilp import solve_branch_bound
from latchconv.retime import (FIRST, SECOND, RetimeProblem, apply_retiming, build_retime_problem,
                              exhaustive_retime_oracle, initial_cut, min_cut_retime, retime_netlist)
from latchconv.seqgraph import extract_seq_graph
from latchconv.sim import check_equivalence
from latchconv.timing import canonical_2phase, canonical_3phase, critical_delay, min_cycle
from latchconv.transform import check_c2, to_master_slave, to_three_phase

from conftest import CORPUS, chain, load


def _prob(b1, b2, edges, sinks, pinned=(), delay=None):
    gates = tuple(dict.fromkeys(g for g, _ in edges))
    fanin = {g: tuple(x for h, x in edges if h == g) for g in gates}
    delay = delay or {g: 1.0 for g in gates}
    return RetimeProblem(b1, b2, ("s",), gates, fanin, delay, frozenset(sinks), frozenset(pinned))


def test_chain_cut_is_balanced():
    p = _prob(4, 4, [("g1", "s"), ("g2", "g1"), ("g3", "g2"), ("g4", "g3")], ["g4"])
    sol = min_cut_retime(p)
    assert sol.cut == ("g2",) and sol.latch_count == 1
    assert sol.side == {"g1": FIRST, "g2": FIRST, "g3": SECOND, "g4": SECOND}
    assert exhaustive_retime_oracle(p).cut == ("g2",)


def test_diamond_strict_and_fallback():
    p = _prob(1, 1, [("a", "s"), ("b", "s"), ("c", "a"), ("c", "b")], ["c"])
    strict = min_cut_retime(p, fallback=False)
    assert strict.cut == ("a", "b") and strict.regions[0].bound == "tc/2"
    relaxed = min_cut_retime(p)
    assert relaxed.cut == ("s",) and relaxed.regions[0].bound == "b1 only"


def test_pinned_gate_stays_second():
    p = _prob(10, 10, [("g1", "s"), ("g2", "g1")], ["g2"], pinned=["g1"])
    sol = min_cut_retime(p)
    assert sol.side["g1"] == SECOND and sol.cut == ("s",)


def test_launch_past_b1_is_an_error():
    p = RetimeProblem(1, 1, ("s",), ("g",), {"g": ("s",)}, {"g": 1.0}, frozenset(["g"]), clk2q=2.0)
    with pytest.raises(ValueError):
        min_cut_retime(p)


def test_infeasible_without_fallback():
    p = _prob(1, 1, [("a", "s"), ("b", "a"), ("c", "b")], ["c"])
    with pytest.raises(ValueError):
        min_cut_retime(p, fallback=False)


def test_empty_problem():
    nl = chain(2)
    out, sol = retime_netlist(nl, 4.0)
    assert out is nl and sol.latch_count == 0


@st.composite
def regions(draw):
    n = draw(st.integers(1, 9))
    n_src = draw(st.integers(1, 3))
    srcs = [f"s{i}" for i in range(n_src)]
    gates, fanin, delay = [], {}, {}
    for i in range(n):
        pool = srcs + gates
        ins = draw(st.lists(st.sampled_from(pool), min_size=1, max_size=3, unique=True))
        g = f"g{i}"
        gates.append(g)
        fanin[g] = tuple(ins)
        delay[g] = float(draw(st.integers(0, 3)))
    sinks = draw(st.lists(st.sampled_from(srcs + gates), min_size=1, max_size=4, unique=True))
    pinned = draw(st.lists(st.sampled_from(gates), max_size=2, unique=True))
    # pinned gates pin their readers too, as the netlist builder does
    pin = set(pinned)
    for g in gates:
        if any(x in pin for x in fanin[g]):
            pin.add(g)
    b1 = float(draw(st.integers(0, 8)))
    b2 = float(draw(st.integers(0, 8)))
    return RetimeProblem(b1, b2, tuple(srcs), tuple(gates), fanin, delay, frozenset(sinks), frozenset(pin))


def _run(solver, p, fallback):
    try:
        s = solver(p, fallback=fallback)
    except ValueError:
        return None
    return s.latch_count, s.weight


@settings(max_examples=300, deadline=None)
@given(regions(), st.booleans())
def test_min_cut_matches_oracle(p, fallback):
    assert _run(min_cut_retime, p, fallback) == _run(exhaustive_retime_oracle, p, fallback)


def _convert(ff):
    g = extract_seq_graph(ff)
    return to_three_phase(ff, solve_branch_bound(g), g)


@pytest.mark.parametrize("path", CORPUS, ids=[p.stem for p in CORPUS])
@pytest.mark.parametrize("scheme", ["3phase", "ms"])
def test_retimed_corpus_is_safe(path, scheme):
    ff = load(path.stem)
    lat = _convert(ff) if scheme == "3phase" else to_master_slave(ff)
    fam = canonical_3phase if scheme == "3phase" else canonical_2phase
    tc = critical_delay(ff) or 1.0
    out, sol = retime_netlist(lat, tc)
    assert out.latch_count <= lat.latch_count
    assert not check_c2(out)
    assert check_equivalence(ff, out, vectors=2000).passed
    hi = 4 * tc + 4
    before = min_cycle(lat, fam, 1e-3, hi)
    after = min_cycle(out, fam, 1e-3, hi)
    assert after <= before * (1 + 1e-6)


def test_retimed_chain_moves_p2_into_logic():
    ff = chain(3, gates=4)
    lat = _convert(ff)
    tc = critical_delay(ff)
    assert tc == 4.0
    p = build_retime_problem(lat, tc)
    sol = min_cut_retime(p, initial_cut=initial_cut(lat, p))
    out = apply_retiming(lat, sol)
    assert out.latch_count == lat.latch_count
    assert all(r.bound == "tc/2" for r in sol.regions)
    moved = [n for n in out.nodes if n.phase == "P2"]
    assert all(out.nodes[out.driver[n.data]].kind == "BUFF" for n in moved)
    assert check_equivalence(ff, out, vectors=2000).passed
