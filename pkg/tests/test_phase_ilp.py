import itertools
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import Bounds, LinearConstraint, milp

from latchconv.phase_ilp import (GraphTooLarge, SolveLimits, assignment_from_k, brute_force_assign, build_ilp,
                                 check_feasible, export_lp, greedy_initial, solve_branch_bound)
from latchconv.seqgraph import extract_seq_graph, from_edges

from conftest import CORPUS, chain, load


def _cost(g, K):
    # direct count from the conditional form: FF needs p2 if it is p3 or drives a p1 FF
    c = sum(1 for u in g.ff_nodes if K[u] == 0 or any(K[v] for v in g.fanout[u]))
    return c + sum(1 for p in g.pi_nodes if any(K[v] for v in g.fanout[p]))


def _oracle(g):
    best = None
    for bits in itertools.product((0, 1), repeat=len(g.ff_nodes)):
        K = dict(zip(g.ff_nodes, bits))
        c = _cost(g, K)
        if best is None or c < best[0]:
            best = (c, bits)  # product order is lexicographic, so first optimum is smallest
    return best


def test_four_chain_optimum():
    g = extract_seq_graph(chain(4))
    a = solve_branch_bound(build_ilp(g))
    assert a.cost == 2 and a.proven_optimal
    assert a.k_vector(g.ff_nodes) == (0, 1, 0, 1)
    assert brute_force_assign(g).k_vector(g.ff_nodes) == (0, 1, 0, 1)


def test_self_loop_forces_p2():
    g = from_edges(1, [(0, 0)])
    a = solve_branch_bound(g)
    assert a.cost == 1
    assert not check_feasible(build_ilp(g), a)


def test_self_loop_row_rejects_k1_without_g():
    g = from_edges(1, [(0, 0)])
    bad = assignment_from_k(g, {0: 1})
    bad.G[0] = 0
    assert check_feasible(build_ilp(g), bad)


def test_empty_graph():
    g = from_edges(0, [])
    m = build_ilp(g)
    a = solve_branch_bound(m)
    assert a.cost == 0 and a.proven_optimal and a.K == {}
    assert "obj: 0" in export_lp(m)


@st.composite
def graphs(draw):
    n = draw(st.integers(1, 9))
    n_pi = draw(st.integers(0, 2))
    edges = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3 * n))
    pi_edges = draw(st.lists(st.tuples(st.integers(n, n + n_pi - 1), st.integers(0, n - 1)), max_size=2 * n_pi)) if n_pi else []
    return from_edges(n, edges, pi_edges, n_pi)


@settings(max_examples=150, deadline=None)
@given(graphs())
def test_solvers_match_oracle(g):
    cost, bits = _oracle(g)
    bb = solve_branch_bound(g)
    bf = brute_force_assign(g)
    assert bb.cost == bf.cost == cost
    assert bb.k_vector(g.ff_nodes) == bf.k_vector(g.ff_nodes) == bits
    assert bb.proven_optimal
    m = build_ilp(g)
    assert not check_feasible(m, bb)
    assert greedy_initial(g).cost >= cost


def _solve_lp_text(text):
    """Parse the exported LP and solve it with scipy's MILP."""
    names = re.findall(r"^ ([A-Za-z_]\w*)$", text.split("Binary")[1], re.M)
    col = {v: i for i, v in enumerate(names)}
    c = np.zeros(len(names))
    obj = text.split("obj:")[1].split("\n")[0]
    for v in re.findall(r"[A-Za-z_]\w*", obj):
        c[col[v]] = 1
    A, lb = [], []
    for lhs, rhs in re.findall(r"^ c\d+: (.*) >= (-?\d+)$", text, re.M):
        row = np.zeros(len(names))
        for sign, mag, v in re.findall(r"(-?|[+-] )(\d+ )?([A-Za-z_]\w*)", lhs):
            k = int(mag) if mag else 1
            row[col[v]] = -k if "-" in sign else k
        A.append(row)
        lb.append(float(rhs))
    cons = [LinearConstraint(np.array(A), lb, np.inf)] if A else []
    r = milp(c, constraints=cons, integrality=np.ones(len(names)), bounds=Bounds(0, 1))
    assert r.success
    return round(r.fun)


@pytest.mark.parametrize("path", CORPUS, ids=[p.stem for p in CORPUS])
def test_lp_export_solves_to_same_cost(path):
    g = extract_seq_graph(load(path.stem))
    m = build_ilp(g)
    assert _solve_lp_text(export_lp(m)) == solve_branch_bound(m).cost


def test_node_limit_reports_not_optimal():
    g = from_edges(16, [(i, j) for i in range(16) for j in range(16) if (i * 7 + j) % 3 == 0])
    a = solve_branch_bound(g, SolveLimits(max_nodes=5))
    assert not a.proven_optimal
    assert not check_feasible(build_ilp(g), a)


def test_brute_force_size_guard():
    with pytest.raises(GraphTooLarge):
        brute_force_assign(from_edges(23, []))
