"""Phase-assignment ILP: choose p1/p3 per flip-flop, minimize back-to-back latches.

Variables: K(u) in {0,1} for every FF (1 = p1, 0 = p3) and G(u) for every FF
and PI (1 = needs an inserted p2 latch).  Rows::

    G(u) + K(u) >= 1                  u in FFs
    G(u) >= K(u) + K(v) - 1           u in FFs, v in FO(u)
    G(p) >= K(v)                      p in PIs, v in FO(p)

Minimize sum(G).  PIs behave as p1-clocked sources and carry no K.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .seqgraph import SeqGraph


@dataclass(frozen=True)
class Row:
    terms: tuple[tuple[str, int], ...]  # (var name, coefficient)
    rhs: int
    sense: str = ">="


@dataclass(frozen=True)
class IlpModel:
    graph: SeqGraph
    k_vars: tuple[int, ...]
    g_vars: tuple[int, ...]
    rows: tuple[Row, ...]

    def var_name(self, kind: str, u: int) -> str:
        return f"{kind}_{self.graph.names[u]}"


@dataclass
class PhaseAssignment:
    K: dict[int, int]
    G: dict[int, int]
    cost: int
    proven_optimal: bool = False
    nodes_explored: int = 0

    def k_vector(self, order) -> tuple[int, ...]:
        return tuple(self.K[u] for u in order)

    def to_json(self, names: dict[int, str] | None = None) -> str:
        key = (lambda u: names[u]) if names else str
        return json.dumps({
            "K": {key(u): v for u, v in sorted(self.K.items())},
            "G": {key(u): v for u, v in sorted(self.G.items())},
            "cost": self.cost,
            "optimal": self.proven_optimal,
        }, sort_keys=True)


@dataclass(frozen=True)
class SolveLimits:
    max_nodes: int = 2_000_000
    max_seconds: float = 60.0


class GraphTooLarge(ValueError):
    pass


def build_ilp(g: SeqGraph) -> IlpModel:
    names = g.names
    rows = []
    for u in g.ff_nodes:
        rows.append(Row(((f"G_{names[u]}", 1), (f"K_{names[u]}", 1)), 1))
    for u in g.ff_nodes:
        for v in sorted(g.fanout[u]):
            if v == u:
                rows.append(Row(((f"G_{names[u]}", 1), (f"K_{names[u]}", -2)), -1))
            else:
                rows.append(Row(((f"G_{names[u]}", 1), (f"K_{names[u]}", -1), (f"K_{names[v]}", -1)), -1))
    for p in g.pi_nodes:
        for v in sorted(g.fanout[p]):
            rows.append(Row(((f"G_{names[p]}", 1), (f"K_{names[v]}", -1)), 0))
    return IlpModel(g, tuple(g.ff_nodes), tuple(g.ff_nodes) + tuple(g.pi_nodes), tuple(rows))


def tighten(g: SeqGraph, K: dict[int, int]) -> dict[int, int]:
    """Smallest G consistent with K (the conditional form of the ILP)."""
    G = {}
    for u in g.ff_nodes:
        G[u] = 1 if K[u] == 0 or any(K[v] for v in g.fanout[u]) else 0
    for p in g.pi_nodes:
        G[p] = 1 if any(K[v] for v in g.fanout[p]) else 0
    return G


def assignment_from_k(g: SeqGraph, K: dict[int, int], proven_optimal=False, explored=0) -> PhaseAssignment:
    G = tighten(g, K)
    return PhaseAssignment(dict(K), G, sum(G.values()), proven_optimal, explored)


def check_feasible(m: IlpModel, a: PhaseAssignment) -> list[Row]:
    """Rows of ``m`` violated by ``a`` (empty list = feasible)."""
    vals = {}
    for u in m.k_vars:
        vals[m.var_name("K", u)] = a.K[u]
    for u in m.g_vars:
        vals[m.var_name("G", u)] = a.G[u]
    return [r for r in m.rows if sum(c * vals[v] for v, c in r.terms) < r.rhs]


# -- heuristics and exact solvers ---------------------------------------------

def _bfs_order(g: SeqGraph) -> list[int]:
    order, seen = [], set()
    frontier = sorted({v for p in g.pi_nodes for v in g.fanout[p]})
    rest = list(g.ff_nodes)
    while True:
        while frontier:
            nxt = []
            for u in frontier:
                if u in seen:
                    continue
                seen.add(u)
                order.append(u)
                nxt.extend(v for v in sorted(g.fanout[u]) if v not in seen)
            frontier = sorted(set(nxt))
        left = [u for u in rest if u not in seen]
        if not left:
            return order
        frontier = [left[0]]


def greedy_initial(g: SeqGraph) -> PhaseAssignment:
    """Topological 2-coloring warm start.

    K(u)=0 if an already-colored fanin has K=1, else K=1; self-loop FFs get
    K=0.  Runs twice, once treating PIs as colored K=1 fanins and once
    ignoring them, and keeps the cheaper (ties go to the second).
    """
    fanin: dict[int, list[int]] = {u: [] for u in g.ff_nodes}
    for u in g.ff_nodes:
        for v in g.fanout[u]:
            fanin[v].append(u)
    pi_fed = {v for p in g.pi_nodes for v in g.fanout[p]}
    order = _bfs_order(g)
    best = None
    for pis_colored in (True, False):
        K: dict[int, int] = {}
        for u in order:
            if u in g.self_loops:
                K[u] = 0
            elif any(K.get(w) == 1 for w in fanin[u]) or (pis_colored and u in pi_fed):
                K[u] = 0
            else:
                K[u] = 1
        a = assignment_from_k(g, K)
        if best is None or a.cost <= best.cost:
            best = a
    return best


def _masks(g: SeqGraph):
    n = len(g.ff_nodes)
    pos = {u: i for i, u in enumerate(g.ff_nodes)}

    def mask(targets):
        m = 0
        for v in targets:
            m |= 1 << (n - 1 - pos[v])
        return m

    fo = np.array([mask(g.fanout[u]) for u in g.ff_nodes], dtype=np.int64)
    pim = np.array([mask(g.fanout[p]) for p in g.pi_nodes if g.fanout[p]], dtype=np.int64)
    return fo, pim


MAX_BRUTE = 22


def brute_force_assign(g: SeqGraph) -> PhaseAssignment:
    """Exact optimum over all 2^|V| K vectors; lexicographically smallest K on ties."""
    n = len(g.ff_nodes)
    if n > MAX_BRUTE:
        raise GraphTooLarge(f"brute force limited to {MAX_BRUTE} FFs, graph has {n}")
    if n == 0:
        return assignment_from_k(g, {}, True)
    fo, pim = _masks(g)
    if pim.size == 0:
        pim = np.zeros(0, dtype=np.int64)
    _, best_mask = _kernels.enumerate_phase_costs(n, fo, pim)
    K = {u: (int(best_mask) >> (n - 1 - i)) & 1 for i, u in enumerate(g.ff_nodes)}
    return assignment_from_k(g, K, True, 1 << n)


class _Search:
    def __init__(self, g: SeqGraph, limits: SolveLimits):
        self.g = g
        self.order = list(g.ff_nodes)
        self.n = len(self.order)
        self.idx = {u: i for i, u in enumerate(self.order)}
        self.fo = [sorted(self.idx[v] for v in g.fanout[u]) for u in self.order]
        self.loop = [u in g.self_loops for u in self.order]
        self.pi_fo = [sorted(self.idx[v] for v in g.fanout[p]) for p in g.pi_nodes]
        # conflict edges for the matching bound: at least one endpoint pays G
        self.ff_edges = [(i, j) for i in range(self.n) for j in self.fo[i] if j != i]
        self.pi_edges = [(p, j) for p in range(len(self.pi_fo)) for j in self.pi_fo[p]]
        self.limits = limits
        self.explored = 0
        self.aborted = False
        self.t0 = time.monotonic()

    def bound(self, K: list[int]) -> int:
        n = self.n
        forced = [False] * n
        lb = 0
        for i in range(n):
            if K[i] == 0 or (K[i] == 1 and any(K[j] == 1 for j in self.fo[i])):
                forced[i] = True
                lb += 1
        pi_forced = [any(K[j] == 1 for j in fo) for fo in self.pi_fo]
        lb += sum(pi_forced)
        used = [False] * n
        for i in range(n):
            if not forced[i] and K[i] == -1 and self.loop[i]:
                used[i] = True
                lb += 1
        for i, j in self.ff_edges:
            if not (forced[i] or forced[j] or used[i] or used[j]):
                used[i] = used[j] = True
                lb += 1
        pi_used = list(pi_forced)
        for p, j in self.pi_edges:
            if not (pi_used[p] or forced[j] or used[j]):
                pi_used[p] = True
                used[j] = True
                lb += 1
        return lb

    def run(self, incumbent: PhaseAssignment) -> tuple[list[int], int]:
        best_k = [incumbent.K[u] for u in self.order]
        best_cost = incumbent.cost
        K = [-1] * self.n
        # iterative DFS; stack entries: (depth, value to try at depth) in LIFO order
        stack = [(0, 0), (0, 1)] if self.n else []
        lim = self.limits
        while stack:
            if self.explored >= lim.max_nodes or ((self.explored & 1023) == 0 and time.monotonic() - self.t0 > lim.max_seconds):
                self.aborted = True
                break
            d, val = stack.pop()
            for t in range(d, self.n):
                K[t] = -1
            K[d] = val
            self.explored += 1
            lb = self.bound(K)
            if lb > best_cost:
                continue
            if lb == best_cost and K[: d + 1] > best_k[: d + 1]:
                continue
            if d + 1 == self.n:
                # bound is exact once every K is fixed
                if lb < best_cost or K < best_k:
                    best_cost, best_k = lb, list(K)
                continue
            stack.append((d + 1, 0))
            stack.append((d + 1, 1))
        return best_k, best_cost


def solve_branch_bound(m: IlpModel | SeqGraph, limits: SolveLimits | None = None) -> PhaseAssignment:
    """Depth-first branch and bound, lowest node id first, K=1 branch first.

    Warm-started from :func:`greedy_initial`.  When the tree is exhausted the
    result is the lexicographically smallest optimal K vector.
    """
    g = m.graph if isinstance(m, IlpModel) else m
    limits = limits or SolveLimits()
    warm = greedy_initial(g)
    if not g.ff_nodes:
        return assignment_from_k(g, {}, True)
    s = _Search(g, limits)
    best_k, _ = s.run(warm)
    K = {u: best_k[i] for i, u in enumerate(s.order)}
    return assignment_from_k(g, K, not s.aborted, s.explored)


# -- LP export -----------------------------------------------------------------

def _expr(terms) -> str:
    parts = []
    for var, c in terms:
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        mag = "" if abs(c) == 1 else f"{abs(c)} "
        parts.append((sign, f"{mag}{var}"))
    if not parts:
        return "0"
    first_sign, first = parts[0]
    s = ("- " if first_sign == "-" else "") + first
    for sign, body in parts[1:]:
        s += f" {sign} {body}"
    return s


def export_lp(m: IlpModel) -> str:
    """CPLEX LP text for ``m``."""
    if not m.g_vars:
        return "Minimize\n obj: 0\nSubject To\nEnd"
    obj = _expr([(m.var_name("G", u), 1) for u in m.g_vars])
    lines = ["\\ phase assignment", "Minimize", f" obj: {obj}", "Subject To"]
    for i, r in enumerate(m.rows, 1):
        lines.append(f" c{i}: {_expr(r.terms)} {r.sense} {r.rhs}")
    lines.append("Binary")
    lines += [f" {m.var_name('K', u)}" for u in m.k_vars]
    lines += [f" {m.var_name('G', u)}" for u in m.g_vars]
    lines.append("End")
    return "\n".join(lines) + "\n"
