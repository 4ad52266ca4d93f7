import pytest
from hypothesis import given, settings, strategies as st

from latchconv.netlist import NetlistError, PipelineSpec, generate_pipeline, make_netlist
from latchconv.seqgraph import extract_seq_graph, from_edges, summarize

from conftest import CORPUS, load


def _fixpoint_edges(nl):
    """Per-net source sets by repeated relaxation; independent of the DFS used in the library."""
    src = {p: {p} for p in nl.pis}
    for n in nl.nodes:
        if n.is_seq:
            src[n.output] = {n.output}
    changed = True
    while changed:
        changed = False
        for n in nl.nodes:
            if n.is_seq:
                continue
            new = set().union(*(src.get(x, set()) for x in n.inputs))
            if new != src.get(n.output):
                src[n.output] = new
                changed = True
    edges = set()
    for n in nl.nodes:
        if n.is_seq:
            for pin in (n.data, n.enable):
                if pin is not None:
                    edges |= {(u, n.output) for u in src[pin]}
    return edges


def _named_edges(nl, g):
    return {(g.names[u], g.names[v]) for u, v in g.edges + g.pi_edges}


def test_s27_by_hand():
    nl = load("s27")
    g = extract_seq_graph(nl)
    ff = {(g.names[u], g.names[v]) for u, v in g.edges}
    assert ff == {("G5", "G5"), ("G5", "G6"), ("G6", "G5"), ("G6", "G6"),
                  ("G7", "G5"), ("G7", "G6"), ("G7", "G7")}
    pi = {(g.names[u], g.names[v]) for u, v in g.pi_edges}
    assert pi == {("G0", "G5"), ("G0", "G6"), ("G1", "G5"), ("G1", "G6"), ("G1", "G7"),
                  ("G2", "G7"), ("G3", "G5"), ("G3", "G6")}
    s = summarize(g)
    assert (s.ffs, s.edges, s.self_loops, s.no_ff_fanout) == (3, 7, 3, 0)
    assert {g.names[u] for u in g.po_facing} == {"G5", "G6", "G7"}


@pytest.mark.parametrize("path", CORPUS, ids=[p.stem for p in CORPUS])
def test_corpus_matches_fixpoint(path):
    nl = load(path.stem)
    assert _named_edges(nl, extract_seq_graph(nl)) == _fixpoint_edges(nl)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 3), st.floats(0, 1), st.integers(0, 10**6))
def test_generated_matches_fixpoint(stages, width, gates, frac, seed):
    nl = generate_pipeline(PipelineSpec(stages, width, gates, frac, seed))
    assert _named_edges(nl, extract_seq_graph(nl)) == _fixpoint_edges(nl)


def test_enable_pin_counts_as_fanout():
    nl = make_netlist("e", [("q", "DFF", ["a"]), ("r", "DFF", ["a"], "q")], ["a"], ["r"])
    g = extract_seq_graph(nl)
    assert ("q", "r") in {(g.names[u], g.names[v]) for u, v in g.edges}


def test_no_ff_netlist_is_empty():
    nl = make_netlist("c", [("y", "NOT", ["a"])], ["a"], ["y"])
    g = extract_seq_graph(nl)
    assert g.ff_nodes == () and g.edges == [] and summarize(g).ffs == 0


def test_latch_netlist_is_rejected():
    nl = make_netlist("l", [("q", "LATCH_P1", ["a"])], ["a"], ["q"])
    with pytest.raises(NetlistError):
        extract_seq_graph(nl)


def test_from_edges():
    g = from_edges(3, [(0, 1), (1, 2), (2, 2)], [(3, 0)])
    assert g.self_loops == {2} and g.pi_nodes == (3,) and g.pi_edges == [(3, 0)]


def test_json_is_deterministic():
    g = extract_seq_graph(load("s27"))
    assert g.to_json() == extract_seq_graph(load("s27")).to_json()
