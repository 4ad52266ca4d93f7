import pytest

from latchconv.netlist import make_netlist
from latchconv.phase_ilp import assignment_from_k, solve_branch_bound
from latchconv.seqgraph import extract_seq_graph
from latchconv.transform import (InfeasibleAssignment, LineageError, check_c1, check_c2, conversion_stats,
                                 split_gating_banks, to_master_slave, to_three_phase, to_two_phase_alternating)

from conftest import CORPUS, chain, load


def _convert(nl):
    g = extract_seq_graph(nl)
    a = solve_branch_bound(g)
    return g, a, to_three_phase(nl, a, g)


def _path_phases(nl, start):
    """Latch phases met walking forward from ``start`` through single readers."""
    out, net = [], start
    while True:
        rs = nl.readers.get(net, ())
        if not rs:
            return out
        node = nl.nodes[rs[0]]
        if node.kind == "LATCH":
            out.append(node.phase)
        net = node.output


def test_four_chain_phases_and_savings():
    ff = chain(4)
    g, a, p3 = _convert(ff)
    assert _path_phases(p3, "a") == ["P3", "P2", "P1", "P3", "P2", "P1"]
    ms = to_master_slave(ff)
    r = conversion_stats(ff, ms, p3)
    assert (r.ff_count, r.ms_latch_count, r.three_phase_latch_count) == (4, 8, 6)
    assert r.save_vs_2ff == 25.0 and r.save_vs_ms == 25.0
    assert (r.inserted_p2, r.boundary_p2) == (2, 0)


def test_self_loop_gets_p2_inside_loop():
    ff = make_netlist("loop", [("n", "XOR", ["a", "q"]), ("q", "DFF", ["n"])], ["a"], ["q"])
    _, _, p3 = _convert(ff)
    assert p3.count("LATCH") == 2
    assert not check_c2(p3)
    q = p3.by_name["q"]
    p2 = [n for n in p3.nodes if n.phase == "P2"][0]
    assert p2.data == "q" and "q" not in p3.by_name["n"].inputs


def test_pos_keep_their_nets():
    ff = chain(4)
    _, _, p3 = _convert(ff)
    assert p3.pos == ff.pos


def test_master_slave_shape():
    ff = load("s27")
    ms = to_master_slave(ff)
    assert ms.count("LATCH") == 6
    for n in ff.nodes:
        if n.kind == "DFF":
            s = ms.by_name[n.output]
            m = ms.by_name[s.data]
            assert (s.phase, m.phase) == ("SLAVE", "MASTER") and m.data == n.data
    assert not check_c2(ms) and not check_c1(ff, ms)


@pytest.mark.parametrize("path", CORPUS, ids=[p.stem for p in CORPUS])
def test_corpus_conversions_are_clean(path):
    ff = load(path.stem)
    g, a, p3 = _convert(ff)
    assert not check_c1(ff, p3) and not check_c2(p3)
    assert p3.count("LATCH") == ff.count("DFF") + a.cost
    ms = to_master_slave(ff)
    assert not check_c2(ms)
    r = conversion_stats(ff, ms, p3)
    assert r.three_phase_latch_count <= r.ms_latch_count


def test_infeasible_assignment_rejected():
    ff = chain(2)
    g = extract_seq_graph(ff)
    a = assignment_from_k(g, {u: 0 for u in g.ff_nodes})
    a.G = {u: 0 for u in a.G}
    with pytest.raises(InfeasibleAssignment):
        to_three_phase(ff, a, g)


def test_boundary_p2_for_pi_feeding_p1():
    ff = chain(1)
    g = extract_seq_graph(ff)
    a = assignment_from_k(g, {g.ff_nodes[0]: 1})
    p3 = to_three_phase(ff, a, g)
    r = conversion_stats(ff, to_master_slave(ff), p3)
    assert r.boundary_p2 == 1 and r.three_phase_latch_count == 2


def _banked4():
    nodes = [(f"q{i}", "DFF", ["a"], "e") for i in range(4)]
    return make_netlist("bank4", nodes, ["a", "e"], [f"q{i}" for i in range(4)])


def test_bank_split_counts_duplicates():
    ff = _banked4()
    assert len(ff.gating_banks) == 1
    g = extract_seq_graph(ff)
    a = assignment_from_k(g, dict(zip(g.ff_nodes, (1, 1, 0, 0))))
    p3 = to_three_phase(ff, a, g)
    out, rep = split_gating_banks(p3, a)
    assert rep.duplicated_banks == 1
    assert len(out.gating_banks) == 2
    assert len({b.enable for b in out.gating_banks}) == 1
    assert sorted(len(b.members) for b in out.gating_banks) == [2, 2]


def test_uniform_bank_not_split():
    ff = _banked4()
    g = extract_seq_graph(ff)
    a = assignment_from_k(g, {u: 0 for u in g.ff_nodes})
    _, rep = split_gating_banks(to_three_phase(ff, a, g), a)
    assert rep.duplicated_banks == 0


def test_zero_ff_design():
    ff = make_netlist("comb", [("y", "NOT", ["a"])], ["a"], ["y"])
    _, _, p3 = _convert(ff)
    r = conversion_stats(ff, to_master_slave(ff), p3)
    assert (r.ff_count, r.three_phase_latch_count, r.save_vs_2ff, r.save_vs_ms) == (0, 0, 0.0, 0.0)


def test_lineage_checked():
    other = make_netlist("o", [("z", "DFF", ["a"])], ["a"], ["z"])
    with pytest.raises(LineageError):
        conversion_stats(chain(1), to_master_slave(other), to_master_slave(other))


def test_two_phase_alternates():
    ff = chain(4)
    two = to_two_phase_alternating(ff)
    assert _path_phases(two, "a") == ["MASTER", "SLAVE", "MASTER", "SLAVE"]
    assert not check_c2(two)


def test_two_phase_odd_loop_raises():
    ff = make_netlist("odd", [("n", "NOT", ["q"]), ("q", "DFF", ["n"])], [], ["q"])
    with pytest.raises(InfeasibleAssignment):
        to_two_phase_alternating(ff)
