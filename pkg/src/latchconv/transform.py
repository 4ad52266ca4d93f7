"""FF -> latch rewrites: master-slave baseline and 3-phase conversion."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .netlist import GatingBank, Netlist, NetlistError, make_netlist
from .phase_ilp import PhaseAssignment, tighten
from .seqgraph import SeqGraph, extract_seq_graph


class InfeasibleAssignment(ValueError):
    pass


class LineageError(ValueError):
    pass


P2_TAG = "__p2_"
MASTER_TAG = "__m"


def _fresh(base: str, used: set[str]) -> str:
    name, i = base, 0
    while name in used:
        i += 1
        name = f"{base}{i}"
    used.add(name)
    return name


def _rewire(nodes: list[dict], old: str, new: str) -> None:
    for spec in nodes:
        spec["inputs"] = [new if x == old else x for x in spec["inputs"]]
        if spec.get("enable") == old:
            spec["enable"] = new


def _specs(nl: Netlist) -> list[dict]:
    return [dict(output=n.output, kind=n.bench_kind, inputs=list(n.inputs), delay=n.delay, enable=n.enable)
            for n in nl.nodes]


def _check_ff_only(nl: Netlist) -> None:
    if any(n.kind == "LATCH" for n in nl.nodes):
        raise NetlistError("expected a flip-flop netlist")


def to_master_slave(nl: Netlist) -> Netlist:
    """Every DFF becomes MASTER -> SLAVE.

    The slave keeps the DFF's name, id and output net; the master
    (``<name>__m``) is appended and takes the original data input.
    Enables and bank membership go to both latches.
    """
    _check_ff_only(nl)
    specs = _specs(nl)
    used = {s["output"] for s in specs} | set(nl.pis)
    master_of = {}
    for n in nl.nodes:
        if n.kind != "DFF":
            continue
        m = _fresh(n.output + MASTER_TAG, used)
        master_of[n.id] = len(specs)
        specs.append(dict(output=m, kind="LATCH_M", inputs=[n.data], delay=n.delay, enable=n.enable))
        specs[n.id].update(kind="LATCH_S", inputs=[m])
    banks = [GatingBank(b.bank_id, b.enable, tuple(sorted(b.members + tuple(master_of[x] for x in b.members))))
             for b in nl.gating_banks]
    return make_netlist(nl.name + "_ms", specs, nl.pis, nl.pos, banks)


def to_three_phase(nl: Netlist, a: PhaseAssignment, g: SeqGraph | None = None) -> Netlist:
    """Apply a phase assignment.

    K=1 -> LATCH_P1, K=0 -> LATCH_P3 (name and id kept).  Each FF or PI with
    G=1 gets a LATCH_P2 ``<name>__p2_<n>`` appended right at its output; every
    former reader is moved onto the P2 output.  OUTPUT declarations keep
    their nets.
    """
    _check_ff_only(nl)
    g = g or extract_seq_graph(nl)
    need = tighten(g, a.K)
    bad = [g.names[u] for u, r in need.items() if r > a.G.get(u, 0)]
    if bad:
        raise InfeasibleAssignment(f"assignment leaves same-phase paths at {', '.join(bad[:5])}")
    specs = _specs(nl)
    used = {s["output"] for s in specs} | set(nl.pis)
    for u in g.ff_nodes:
        specs[u]["kind"] = "LATCH_P1" if a.K[u] == 1 else "LATCH_P3"
    counter = 0
    renamed = {}
    sources = [(u, nl.nodes[u].output) for u in g.ff_nodes] + [(p, g.names[p]) for p in g.pi_nodes]
    for u, net in sources:
        if not a.G.get(u, 0):
            continue
        p2 = _fresh(f"{net}{P2_TAG}{counter}", used)
        counter += 1
        _rewire(specs, net, p2)
        renamed[net] = p2
        specs.append(dict(output=p2, kind="LATCH_P2", inputs=[net], delay=0.0, enable=None))
    banks = [GatingBank(b.bank_id, renamed.get(b.enable, b.enable), b.members) for b in nl.gating_banks]
    out = make_netlist(nl.name + "_3p", specs, nl.pis, nl.pos, banks)
    violations = check_c2(out)
    if violations:
        raise InfeasibleAssignment(f"C2 violated after conversion: {violations[:3]}")
    return out


def to_two_phase_alternating(nl: Netlist, g: SeqGraph | None = None) -> Netlist:
    """One latch per FF, phases alternating along FF-to-FF paths.

    PIs count as SLAVE-phase sources, so FFs an odd number of stages from
    an input become MASTER.  This is a timing model only: it changes the
    cycle behaviour, so it is not checked for equivalence.
    """
    _check_ff_only(nl)
    g = g or extract_seq_graph(nl)
    color: dict[int, str] = {}
    frontier = sorted({v for p in g.pi_nodes for v in g.fanout[p]})
    for v in frontier:
        color[v] = "MASTER"
    rest = [u for u in g.ff_nodes if u not in color]
    while frontier or rest:
        if not frontier:
            u = rest.pop(0)
            if u in color:
                continue
            color[u] = "MASTER"
            frontier = [u]
        nxt = []
        for u in frontier:
            other = "SLAVE" if color[u] == "MASTER" else "MASTER"
            for v in sorted(g.fanout[u]):
                if v not in color:
                    color[v] = other
                    nxt.append(v)
                elif color[v] != other:
                    raise InfeasibleAssignment(f"{g.names[u]} -> {g.names[v]} closes an odd loop")
        frontier = nxt
    specs = _specs(nl)
    for u in g.ff_nodes:
        specs[u]["kind"] = "LATCH_M" if color[u] == "MASTER" else "LATCH_S"
    return make_netlist(nl.name + "_2p", specs, nl.pis, nl.pos, nl.gating_banks)


@dataclass(frozen=True)
class BankReport:
    duplicated_banks: int
    banks: tuple[tuple[int, str, str, tuple[str, ...]], ...]  # id, enable, phase, members


def split_gating_banks(nl: Netlist, a: PhaseAssignment | None = None) -> tuple[Netlist, BankReport]:
    """Split banks whose members sit on different phases (one bank per phase).

    ``a`` is optional; phases are read from the latch tags.  Split banks
    share the original enable net.
    """
    banks = []
    dup = 0
    next_id = 0
    for b in nl.gating_banks:
        by_phase: dict[str, list[int]] = {}
        for m in b.members:
            by_phase.setdefault(nl.nodes[m].phase or nl.nodes[m].kind, []).append(m)
        if a is not None:
            for m in b.members:
                if m in a.K and nl.nodes[m].phase != ("P1" if a.K[m] else "P3"):
                    raise InfeasibleAssignment(f"bank member {nl.nodes[m].output} disagrees with assignment")
        dup += len(by_phase) - 1
        for phase in sorted(by_phase):
            banks.append((next_id, b.enable, phase, tuple(sorted(by_phase[phase]))))
            next_id += 1
    out = nl.replace(gating_banks=[GatingBank(i, en, mem) for i, en, _, mem in banks])
    report = BankReport(dup, tuple((i, en, ph, tuple(nl.nodes[m].output for m in mem)) for i, en, ph, mem in banks))
    return out, report


# -- structural checks ---------------------------------------------------------

def _pi_phase(nl: Netlist) -> str:
    tags = {n.phase for n in nl.nodes if n.kind == "LATCH"}
    return "SLAVE" if tags & {"MASTER", "SLAVE"} else "P1"


_FORBIDDEN = {("P3", "P1")}


def latch_adjacency(nl: Netlist) -> set[tuple[str, str]]:
    """(source, latch) name pairs joined by a purely combinational data path.

    Sources are latches and PIs.  Enable pins are clock-gating inputs and
    are not data paths.
    """
    pairs = set()
    srcs = [n.output for n in nl.nodes if n.kind == "LATCH"] + list(nl.pis)
    readers = nl.readers
    for s in srcs:
        stack, seen = [s], {s}
        while stack:
            net = stack.pop()
            for r in readers.get(net, ()):
                node = nl.nodes[r]
                if node.is_seq:
                    if node.data == net:
                        pairs.add((s, node.output))
                elif node.output not in seen:
                    seen.add(node.output)
                    stack.append(node.output)
    return pairs


def check_c2(nl: Netlist) -> list[tuple[str, str]]:
    """Combinationally adjacent pairs that may be transparent together.

    Same-phase pairs are always reported; P3 -> P1 is reported too (no direct
    path from p3 to p1 latches).  PIs count as p1 sources in 3-phase designs
    and as slave-side sources in master-slave designs.
    """
    phase = {n.output: n.phase for n in nl.nodes if n.kind == "LATCH"}
    pi_ph = _pi_phase(nl)
    bad = []
    for s, t in sorted(latch_adjacency(nl)):
        ps = phase.get(s, pi_ph)
        pt = phase[t]
        if ps == pt or (ps, pt) in _FORBIDDEN:
            bad.append((s, t))
    return bad


def check_c1(ff: Netlist, latched: Netlist) -> list[str]:
    """FF names that no longer hold a latch in ``latched``."""
    missing = []
    for n in ff.nodes:
        if n.kind != "DFF":
            continue
        m = latched.by_name.get(n.output)
        if m is None or m.kind != "LATCH":
            missing.append(n.output)
    return missing


# -- register accounting ----------------------------------------------------

@dataclass(frozen=True)
class ConversionReport:
    design: str
    ff_count: int
    ms_latch_count: int
    three_phase_latch_count: int
    inserted_p2: int
    boundary_p2: int
    duplicated_banks: int
    save_vs_2ff: float
    save_vs_ms: float

    def table_row(self) -> dict:
        return {
            "Design": self.design,
            "FF": self.ff_count,
            "M-S": self.ms_latch_count,
            "3-phase": self.three_phase_latch_count,
            "Save (%) 2*FF": self.save_vs_2ff,
            "Save (%) M-S": self.save_vs_ms,
        }

    def to_json(self) -> str:
        return json.dumps(dict(self.table_row(), detail=asdict(self)), sort_keys=True)


def _save(ref: int, new: int) -> float:
    if ref <= 0:
        return 0.0
    return round(100.0 * (ref - new) / ref, 1) + 0.0


def conversion_stats(ff: Netlist, ms: Netlist, p3: Netlist, duplicated_banks: int = 0) -> ConversionReport:
    if check_c1(ff, ms) or check_c1(ff, p3):
        raise LineageError(f"{ms.name}/{p3.name} do not derive from {ff.name}")
    ffs = ff.count("DFF")
    ms_count = ms.latch_count
    p3_count = p3.latch_count
    pi_set = set(ff.pis)
    p2 = [n for n in p3.nodes if n.kind == "LATCH" and n.phase == "P2"]
    boundary = sum(1 for n in p2 if n.data in pi_set)
    return ConversionReport(
        design=ff.name,
        ff_count=ffs,
        ms_latch_count=ms_count,
        three_phase_latch_count=p3_count,
        inserted_p2=len(p2) - boundary,
        boundary_p2=boundary,
        duplicated_banks=duplicated_banks,
        save_vs_2ff=_save(2 * ffs, p3_count),
        save_vs_ms=_save(ms_count, p3_count),
    )
