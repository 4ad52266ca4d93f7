"""Move inserted latches into the downstream logic as a delay-bounded min-cut.

The movable latches (P2 in 3-phase designs, masters in master-slave designs)
sit on a set of launch nets.  A placement is a monotone split of the gates
they feed into a FIRST side (before the latch) and a SECOND side.  Every net
driven from FIRST and read on SECOND carries one latch, shared by all its
readers.  A FIRST gate must be reached from the launch points within ``b1``;
a SECOND gate must reach every receiving latch within ``b2``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import networkx as nx

from .netlist import GatingBank, Netlist, NetlistError, make_netlist
from .transform import MASTER_TAG, P2_TAG, _fresh, _specs, check_c2

FIRST = "FIRST"
SECOND = "SECOND"
MAX_ORACLE_GATES = 20
_W_SCALE = 1000


@dataclass(frozen=True)
class RetimeProblem:
    b1: float
    b2: float
    sources: tuple[str, ...]  # launch nets, fixed FIRST
    gates: tuple[str, ...]  # gate output nets in topological order
    fanin: dict[str, tuple[str, ...]]  # gate -> its inputs among sources and gates
    delay: dict[str, float]
    sink_nets: frozenset[str]  # nets read directly by a receiving latch
    pinned: frozenset[str] = frozenset()  # gates fixed SECOND
    clk2q: float = 0.0
    launch_delay: dict[str, float] = field(default_factory=dict)  # per-source override of clk2q
    movable: tuple[str, ...] = ()
    tag: str = "P2"
    relax: str = "b2"  # bound dropped when the strict problem cannot be met

    @property
    def empty(self) -> bool:
        return not self.sources

    def readers(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {x: [] for x in self.sources + self.gates}
        for g in self.gates:
            for x in self.fanin[g]:
                out[x].append(g)
        return out

    def prefix(self) -> dict[str, float]:
        arr = {s: self.launch_delay.get(s, self.clk2q) for s in self.sources}
        for g in self.gates:
            arr[g] = max((arr[x] for x in self.fanin[g]), default=0.0) + self.delay[g]
        return arr

    def suffix(self) -> dict[str, float]:
        rd = self.readers()
        out: dict[str, float] = {}
        for x in reversed(self.sources + self.gates):
            best = 0.0 if x in self.sink_nets else -math.inf
            for r in rd[x]:
                best = max(best, self.delay[r] + out[r])
            out[x] = best
        return {x: (v if v > -math.inf else 0.0) for x, v in out.items()}

    def regions(self) -> list["RetimeProblem"]:
        """Split into independent connected pieces, ordered by first source."""
        parent = {x: x for x in self.sources + self.gates}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for g in self.gates:
            for x in self.fanin[g]:
                a, b = find(g), find(x)
                if a != b:
                    parent[max(a, b)] = min(a, b)
        groups: dict[str, list[str]] = {}
        for x in self.sources + self.gates:
            groups.setdefault(find(x), []).append(x)
        out = []
        order = {x: i for i, x in enumerate(self.sources + self.gates)}
        for members in sorted(groups.values(), key=lambda m: min(order[x] for x in m)):
            mem = set(members)
            src = tuple(s for s in self.sources if s in mem)
            if not src:
                continue
            gates = tuple(g for g in self.gates if g in mem)
            out.append(RetimeProblem(
                self.b1, self.b2, src, gates, {g: self.fanin[g] for g in gates},
                {g: self.delay[g] for g in gates}, frozenset(self.sink_nets & mem),
                frozenset(self.pinned & mem), self.clk2q,
                {s: v for s, v in self.launch_delay.items() if s in mem}, tag=self.tag,
                relax=self.relax,
            ))
        return out

    def relaxed(self) -> "RetimeProblem":
        """Drop one bound.  The original placement stays feasible and, when it
        met timing, so does every placement of the relaxed problem."""
        b1, b2 = (self.b1, math.inf) if self.relax == "b2" else (math.inf, self.b2)
        return RetimeProblem(b1, b2, self.sources, self.gates, self.fanin, self.delay,
                             self.sink_nets, self.pinned, self.clk2q, self.launch_delay,
                             self.movable, self.tag, self.relax)


@dataclass
class RegionReport:
    region: int
    initial: int
    final: int
    bound: str  # "tc/2" when both half-cycle bounds held, else the bound kept

    def to_json(self) -> dict:
        return {"region": self.region, "initial": self.initial, "final": self.final, "bound": self.bound}


@dataclass
class RetimingSolution:
    cut: tuple[str, ...]
    latch_count: int
    side: dict[str, str]
    weight: int = 0
    regions: list[RegionReport] = field(default_factory=list)
    tag: str = "P2"
    movable: tuple[str, ...] = ()

    def to_json(self) -> str:
        return json.dumps({
            "cut": list(self.cut),
            "latch_count": self.latch_count,
            "regions": [r.to_json() for r in self.regions],
        }, sort_keys=True)


# -- building problems from netlists ------------------------------------------

def detect_scheme(nl: Netlist) -> str | None:
    tags = {n.phase for n in nl.nodes if n.kind == "LATCH"}
    if "P2" in tags:
        return "3phase"
    if "MASTER" in tags:
        return "ms"
    return None


def build_retime_problem(nl: Netlist, tc: float, clk2q: float = 0.0,
                         b1: float | None = None, b2: float | None = None) -> RetimeProblem:
    """Region graph for the movable latches of ``nl``; bounds default to tc/2."""
    b1 = tc / 2 if b1 is None else b1
    b2 = tc / 2 if b2 is None else b2
    scheme = detect_scheme(nl)
    if scheme is None:
        return RetimeProblem(b1, b2, (), (), {}, {}, frozenset(), clk2q=clk2q)
    tag = "P2" if scheme == "3phase" else "MASTER"
    movable = [n for n in nl.nodes if n.kind == "LATCH" and n.phase == tag]
    mov_out = {m.output: m.data for m in movable}
    fixed = [n for n in nl.nodes if n.kind == "LATCH" and n.phase != tag]
    if scheme == "3phase":
        launch = [m.data for m in movable]
        for m in movable:
            if m.data in nl.driver and nl.nodes[nl.driver[m.data]].kind != "LATCH":
                raise NetlistError(f"{m.output} already sits inside logic; retime a fresh conversion")
    else:
        launch = [n.output for n in fixed] + list(nl.pis)
    sources = tuple(dict.fromkeys(launch))
    src_set = set(sources)
    other_launch = ({n.output for n in fixed} | set(nl.pis)) - src_set

    def through(net):
        return mov_out.get(net, net)

    # master-slave enables stay on the slaves, so only their data pins receive
    sink_nets = set()
    for n in fixed:
        pins = n.inputs + ((n.enable,) if n.enable and scheme == "3phase" else ())
        for pin in pins:
            sink_nets.add(through(pin))
    region, pinned = set(), set()
    fanin, delay, order = {}, {}, []
    for gid in nl.comb_order:
        g = nl.nodes[gid]
        ins = [through(x) for x in g.inputs]
        hit = [x for x in ins if x in src_set or x in region]
        if not hit:
            continue
        region.add(g.output)
        order.append(g.output)
        fanin[g.output] = tuple(dict.fromkeys(hit))
        delay[g.output] = g.delay
        if any(x in other_launch or x in pinned or (x not in src_set and x not in region) for x in ins):
            pinned.add(g.output)
    launch_delay = {p: 0.0 for p in nl.pis if p in src_set}
    return RetimeProblem(b1, b2, sources, tuple(order), fanin, delay, frozenset(sink_nets & (src_set | region)),
                         frozenset(pinned), clk2q, launch_delay, tuple(m.output for m in movable),
                         tag, "b2" if scheme == "3phase" else "b1")


# -- solvers --------------------------------------------------------------------

def _weights(p: RetimeProblem) -> dict[str, int]:
    pre, suf = p.prefix(), p.suffix()
    return {x: int(round(_W_SCALE * abs(pre[x] - suf[x]))) for x in p.sources + p.gates}


def _forced(p: RetimeProblem) -> tuple[set[str], set[str]] | None:
    """Gates forced SECOND (too late for b1) and FIRST (too long for b2); None if contradictory."""
    pre, suf = p.prefix(), p.suffix()
    eps = 1e-9 * max([1.0] + [abs(v) for v in pre.values() if math.isfinite(v)])
    if any(pre[x] > p.b1 + eps for x in p.sources):
        raise ValueError(f"launch delay exceeds b1={p.b1}; the original placement is infeasible")
    second = {g for g in p.gates if pre[g] > p.b1 + eps} | set(p.pinned)
    first = {g for g in p.gates if p.delay[g] + suf[g] > p.b2 + eps}
    if first & second:
        return None
    return second, first


def _cut_of(p: RetimeProblem, first: set[str]) -> list[str]:
    rd = p.readers()
    return [x for x in p.sources + p.gates
            if x in first and (x in p.sink_nets or any(r not in first for r in rd[x]))]


def _flow_region(p: RetimeProblem) -> tuple[set[str], int, int] | None:
    """(FIRST set, count, weight) of the min-weight feasible cut, or None if none exists."""
    forced = _forced(p)
    if forced is None:
        return None
    must_second, must_first = forced
    w = _weights(p)
    big = sum(w.values()) + 1
    rd = p.readers()
    G = nx.DiGraph()
    G.add_node("S")
    G.add_node("T")
    for x in p.sources + tuple(g for g in p.gates if g in must_first):
        G.add_edge("S", ("n", x))
    for x in p.sources + p.gates:
        G.add_edge(("n", x), ("c", x), capacity=big + w[x])
        for r in rd[x]:
            G.add_edge(("c", x), ("n", r))
            G.add_edge(("n", r), ("n", x))
        if x in p.sink_nets:
            G.add_edge(("c", x), "T")
    for g in sorted(must_second):
        G.add_edge(("n", g), "T")
    try:
        value, (s_side, _) = nx.minimum_cut(G, "S", "T")
    except nx.NetworkXUnbounded:
        return None
    first = {x for x in p.sources + p.gates if ("n", x) in s_side}
    cut = _cut_of(p, first)
    return first, len(cut), sum(w[x] for x in cut)


def _oracle_region(p: RetimeProblem) -> tuple[set[str], int, int] | None:
    free = [g for g in p.gates if g not in p.pinned]
    if len(free) > MAX_ORACLE_GATES:
        raise ValueError(f"exhaustive oracle limited to {MAX_ORACLE_GATES} free gates, region has {len(free)}")
    pre, suf = p.prefix(), p.suffix()
    if any(pre[x] > p.b1 for x in p.sources):
        raise ValueError(f"launch delay exceeds b1={p.b1}; the original placement is infeasible")
    w = _weights(p)
    best = None
    for bits in itertools.product((0, 1), repeat=len(free)):
        first = set(p.sources) | {g for g, b in zip(free, bits) if b}
        if any(x not in first for g in first if g in p.fanin for x in p.fanin[g]):
            continue
        if any(pre[g] > p.b1 for g in first if g in p.delay):
            continue
        if any(p.delay[g] + suf[g] > p.b2 for g in p.gates if g not in first):
            continue
        cut = _cut_of(p, first)
        key = (len(cut), sum(w[x] for x in cut))
        if best is None or key < best[0]:
            best = (key, first)
    if best is None:
        return None
    return best[1], best[0][0], best[0][1]


def _initial_count(region: RetimeProblem, p: RetimeProblem, initial_cut: set[str] | None) -> int:
    if initial_cut is None:
        return len(region.sources)
    mem = set(region.sources) | set(region.gates)
    return len(initial_cut & mem)


def _solve(p: RetimeProblem, region_solver, fallback: bool, initial_cut=None) -> RetimingSolution:
    side: dict[str, str] = {}
    cut: list[str] = []
    reports = []
    weight = 0
    for i, r in enumerate(p.regions()):
        init = _initial_count(r, p, initial_cut)
        res = region_solver(r)
        bound = "tc/2"
        if fallback and (res is None or res[1] > init):
            res = region_solver(r.relaxed())
            bound = "b1 only" if r.relax == "b2" else "b2 only"
        if res is None:
            raise ValueError(f"region {i}: no feasible placement for bounds b1={p.b1}, b2={p.b2}")
        first, count, wt = res
        for x in r.gates:
            side[x] = FIRST if x in first else SECOND
        cut.extend(_cut_of(r, first))
        weight += wt
        reports.append(RegionReport(i, init, count, bound))
    return RetimingSolution(tuple(sorted(cut)), len(cut), side, weight, reports, p.tag, p.movable)


def min_cut_retime(p: RetimeProblem, fallback: bool = True, initial_cut: set[str] | None = None) -> RetimingSolution:
    """Minimum-latch placement per region via max-flow/min-cut.

    With ``fallback`` a region whose half-cycle bounds admit no placement,
    or only one needing more latches than it started with, is re-solved
    with one bound dropped (see :meth:`RetimeProblem.relaxed`).
    """
    return _solve(p, _flow_region, fallback, initial_cut)


def exhaustive_retime_oracle(p: RetimeProblem, fallback: bool = True,
                             initial_cut: set[str] | None = None) -> RetimingSolution:
    return _solve(p, _oracle_region, fallback, initial_cut)


def initial_cut(nl: Netlist, p: RetimeProblem) -> set[str]:
    """Nets the movable latches currently read."""
    return {nl.by_name[m].data for m in p.movable}


def retime_netlist(nl: Netlist, tc: float, clk2q: float = 0.0) -> tuple[Netlist, RetimingSolution]:
    p = build_retime_problem(nl, tc, clk2q)
    if p.empty:
        return nl, RetimingSolution((), 0, {}, tag=p.tag)
    sol = min_cut_retime(p, initial_cut=initial_cut(nl, p))
    return apply_retiming(nl, sol), sol


def apply_retiming(nl: Netlist, sol: RetimingSolution) -> Netlist:
    """Drop the movable latches and place new ones on the cut nets."""
    if not sol.movable and not sol.cut:
        return nl
    movable = set(sol.movable)
    bypass = {m: nl.by_name[m].data for m in movable}
    specs = [s for s in _specs(nl) if s["output"] not in movable]
    for s in specs:
        s["inputs"] = [bypass.get(x, x) for x in s["inputs"]]
        if s["enable"] in bypass:
            s["enable"] = bypass[s["enable"]]
    used = {s["output"] for s in specs} | set(nl.pis) | movable
    kind = "LATCH_P2" if sol.tag == "P2" else "LATCH_M"
    for i, net in enumerate(sol.cut):
        name = _fresh(f"{net}{P2_TAG}{i}" if sol.tag == "P2" else f"{net}{MASTER_TAG}", used)
        for s in specs:
            late = s["kind"].startswith("LATCH") or sol.side.get(s["output"]) == SECOND
            if not late:
                continue
            s["inputs"] = [name if x == net else x for x in s["inputs"]]
            if s["enable"] == net:
                s["enable"] = name
        specs.append(dict(output=name, kind=kind, inputs=[net], delay=0.0, enable=None))
    names = {n.id: n.output for n in nl.nodes}
    pos = {s["output"]: i for i, s in enumerate(specs)}
    banks = []
    for b in nl.gating_banks:
        mem = tuple(sorted(pos[names[m]] for m in b.members if names[m] in pos))
        if mem:
            # members are latches, so their enables were rewired alike
            banks.append(GatingBank(len(banks), specs[mem[0]]["enable"], mem))
    out = make_netlist(nl.name, specs, nl.pis, nl.pos, banks)
    bad = check_c2(out)
    if bad:
        raise NetlistError(f"internal error: retiming broke phase separation at {bad[:3]}")
    return out
