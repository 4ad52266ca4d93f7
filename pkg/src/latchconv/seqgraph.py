"""Register-to-register reachability graph consumed by the phase ILP."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .netlist import Netlist, NetlistError


@dataclass(frozen=True)
class SeqGraph:
    """FO sets over FFs (ids = node ids) and PI pseudo-nodes.

    PI pseudo-ids are ``len(netlist.nodes) + index`` so they never collide
    with node ids.
    """

    ff_nodes: tuple[int, ...]
    pi_nodes: tuple[int, ...]
    fanout: dict[int, frozenset[int]]
    self_loops: frozenset[int]
    bank_of: dict[int, int | None]
    names: dict[int, str]
    # PO-facing FFs: those reaching a PO combinationally
    po_facing: frozenset[int] = frozenset()

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in self.ff_nodes for v in sorted(self.fanout[u])]

    @property
    def pi_edges(self) -> list[tuple[int, int]]:
        return [(p, v) for p in self.pi_nodes for v in sorted(self.fanout[p])]

    def to_json(self) -> str:
        return json.dumps({
            "ffs": list(self.ff_nodes),
            "edges": [list(e) for e in self.edges],
            "self_loops": sorted(self.self_loops),
            "pis": list(self.pi_nodes),
            "pi_edges": [list(e) for e in self.pi_edges],
            "names": {str(k): v for k, v in sorted(self.names.items())},
        }, sort_keys=True)


@dataclass(frozen=True)
class GraphStats:
    ffs: int = 0
    edges: int = 0
    self_loops: int = 0
    no_ff_fanout: int = 0
    gating_banks: int = 0
    pis: int = 0
    pi_edges: int = 0


def comb_reach(nl: Netlist, net: str) -> tuple[set[int], bool]:
    """Sequential node ids whose data or enable pin is reachable from ``net``
    through combinational gates only, and whether a PO is reached."""
    hit: set[int] = set()
    po = set(nl.pos)
    reaches_po = net in po
    stack = [net]
    seen = {net}
    readers = nl.readers
    nodes = nl.nodes
    while stack:
        cur = stack.pop()
        for r in readers.get(cur, ()):
            node = nodes[r]
            if node.is_seq:
                hit.add(r)
            elif node.output not in seen:
                seen.add(node.output)
                reaches_po = reaches_po or node.output in po
                stack.append(node.output)
    return hit, reaches_po


def extract_seq_graph(nl: Netlist) -> SeqGraph:
    if any(n.kind == "LATCH" for n in nl.nodes):
        raise NetlistError("extract_seq_graph expects a flip-flop netlist; found latches")
    ffs = tuple(n.id for n in nl.nodes if n.kind == "DFF")
    base = len(nl.nodes)
    pis = tuple(base + i for i in range(len(nl.pis)))
    fanout: dict[int, frozenset[int]] = {}
    names = {}
    po_facing = set()
    for u in ffs:
        reach, to_po = comb_reach(nl, nl.nodes[u].output)
        fanout[u] = frozenset(reach)
        names[u] = nl.nodes[u].output
        if to_po:
            po_facing.add(u)
    for i, p in enumerate(pis):
        reach, _ = comb_reach(nl, nl.pis[i])
        fanout[p] = frozenset(reach)
        names[p] = nl.pis[i]
    loops = frozenset(u for u in ffs if u in fanout[u])
    banks = nl.bank_of()
    return SeqGraph(ffs, pis, fanout, loops, {u: banks.get(u) for u in ffs}, names, frozenset(po_facing))


def summarize(g: SeqGraph) -> GraphStats:
    return GraphStats(
        ffs=len(g.ff_nodes),
        edges=sum(len(g.fanout[u]) for u in g.ff_nodes),
        self_loops=len(g.self_loops),
        no_ff_fanout=sum(1 for u in g.ff_nodes if not g.fanout[u]),
        gating_banks=len({b for b in g.bank_of.values() if b is not None}),
        pis=len(g.pi_nodes),
        pi_edges=sum(len(g.fanout[p]) for p in g.pi_nodes),
    )


def from_edges(n_ff: int, edges, pi_edges=(), n_pi: int | None = None) -> SeqGraph:
    """Build a bare SeqGraph from edge lists (FF ids 0..n_ff-1, PI ids after).

    Handy for solver tests that do not need a netlist behind the graph.
    """
    ffs = tuple(range(n_ff))
    if n_pi is None:
        n_pi = max(p for p, _ in pi_edges) - n_ff + 1 if pi_edges else 0
    pis = tuple(range(n_ff, n_ff + n_pi))
    fo: dict[int, set[int]] = {u: set() for u in ffs + pis}
    for u, v in list(edges) + list(pi_edges):
        fo[u].add(v)
    names = {u: f"u{u}" for u in ffs}
    names.update({p: f"pi{p - n_ff}" for p in pis})
    return SeqGraph(
        ffs, pis, {u: frozenset(s) for u, s in fo.items()},
        frozenset(u for u in ffs if u in fo[u]), {u: None for u in ffs}, names,
    )
