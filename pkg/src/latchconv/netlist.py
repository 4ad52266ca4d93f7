"""Gate-level netlists with phase-tagged sequential elements.

Netlists are read from and written to an extended ISCAS89 ``.bench`` dialect::

    INPUT(a)
    OUTPUT(q)
    n1 = NAND(a, q)          # delay=2.5
    q  = DFF(n1) @en(en)
    r  = LATCH_P2(q)

Extra directive: ``#@bank <id> <enable> <member> ...`` records an explicit
clock-gating bank.  Without any such line, banks are derived by grouping
sequential nodes that share an ``@en`` net.
"""

from __future__ import annotations

import random
from pathlib import Path
import re
from dataclasses import dataclass, field
from functools import cached_property

GATE_KINDS = ("AND", "OR", "NAND", "NOR", "XOR", "XNOR", "NOT", "BUFF")
SEQ_KINDS = ("DFF", "LATCH")
PHASES = ("P1", "P2", "P3", "MASTER", "SLAVE")

_LATCH_SUFFIX = {"P1": "P1", "P2": "P2", "P3": "P3", "M": "MASTER", "S": "SLAVE"}
_PHASE_SUFFIX = {v: k for k, v in _LATCH_SUFFIX.items()}
_ALIASES = {"BUF": "BUFF", "INV": "NOT"}

_NAME = r"[A-Za-z0-9_.]+"
_NAME_RE = re.compile(rf"^{_NAME}$")
_PORT_RE = re.compile(rf"^(INPUT|OUTPUT)\s*\(\s*({_NAME})\s*\)$", re.IGNORECASE)
_GATE_RE = re.compile(
    rf"^({_NAME})\s*=\s*([A-Za-z_0-9]+)\s*\(([^()]*)\)\s*(?:@en\s*\(\s*({_NAME})\s*\))?$"
)
_DELAY_RE = re.compile(r"delay\s*=\s*([-+0-9.eE]+|inf|nan)")


class NetlistError(ValueError):
    """Structural problem in a netlist."""


class BenchParseError(NetlistError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    inputs: tuple[str, ...]
    output: str
    phase: str | None = None
    delay: float = 1.0
    enable: str | None = None

    @property
    def name(self) -> str:
        return self.output

    @property
    def is_seq(self) -> bool:
        return self.kind in SEQ_KINDS

    @property
    def data(self) -> str:
        return self.inputs[0]

    @property
    def bench_kind(self) -> str:
        if self.kind == "LATCH":
            return "LATCH_" + _PHASE_SUFFIX[self.phase]
        return self.kind


@dataclass(frozen=True)
class GatingBank:
    bank_id: int
    enable: str
    members: tuple[int, ...]


@dataclass(frozen=True)
class PipelineSpec:
    stages: int = 3
    width: int = 1
    gates_per_stage: int = 1
    self_loop_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.stages < 1 or self.width < 1 or self.gates_per_stage < 0:
            raise ValueError(f"invalid pipeline spec {self}")
        if not 0.0 <= self.self_loop_fraction <= 1.0:
            raise ValueError("self_loop_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class Netlist:
    """Immutable netlist; construction validates every structural invariant."""

    name: str
    nodes: tuple[Node, ...]
    pis: tuple[str, ...]
    pos: tuple[str, ...]
    gating_banks: tuple[GatingBank, ...] = field(default=())

    def __post_init__(self):
        _validate(self)

    # -- lookups -----------------------------------------------------------
    @cached_property
    def driver(self) -> dict[str, int]:
        """Net name -> id of the driving node (PIs are absent)."""
        return {n.output: n.id for n in self.nodes}

    @cached_property
    def by_name(self) -> dict[str, Node]:
        return {n.output: n for n in self.nodes}

    @cached_property
    def readers(self) -> dict[str, tuple[int, ...]]:
        """Net name -> ids of nodes that read it on a data or enable pin."""
        acc: dict[str, list[int]] = {net: [] for net in self.pis}
        for n in self.nodes:
            acc.setdefault(n.output, [])
        for n in self.nodes:
            for net in _pins(n):
                if n.id not in acc[net]:
                    acc[net].append(n.id)
        return {k: tuple(v) for k, v in acc.items()}

    @cached_property
    def comb_order(self) -> tuple[int, ...]:
        """Combinational node ids in topological order."""
        return _topo_comb(self)

    @property
    def seq_nodes(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.is_seq)

    @property
    def gates(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if not n.is_seq)

    def count(self, kind: str, phase: str | None = None) -> int:
        return sum(1 for n in self.nodes if n.kind == kind and (phase is None or n.phase == phase))

    @property
    def latch_count(self) -> int:
        return self.count("LATCH")

    def bank_of(self) -> dict[int, int]:
        return {m: b.bank_id for b in self.gating_banks for m in b.members}

    def replace(self, nodes=None, pis=None, pos=None, gating_banks=None, name=None) -> "Netlist":
        return Netlist(
            name=self.name if name is None else name,
            nodes=self.nodes if nodes is None else tuple(nodes),
            pis=self.pis if pis is None else tuple(pis),
            pos=self.pos if pos is None else tuple(pos),
            gating_banks=self.gating_banks if gating_banks is None else tuple(gating_banks),
        )


def _pins(n: Node) -> tuple[str, ...]:
    return n.inputs + ((n.enable,) if n.enable is not None else ())


def _validate(nl: Netlist) -> None:
    drivers: dict[str, str] = {}
    for pi in nl.pis:
        if not _NAME_RE.match(pi):
            raise NetlistError(f"bad net name {pi!r}")
        if pi in drivers:
            raise NetlistError(f"net {pi!r} declared as INPUT twice")
        drivers[pi] = "INPUT"
    for i, n in enumerate(nl.nodes):
        if n.id != i:
            raise NetlistError(f"node ids must be dense: position {i} holds id {n.id}")
        if not _NAME_RE.match(n.output):
            raise NetlistError(f"bad net name {n.output!r}")
        if n.output in drivers:
            raise NetlistError(f"net {n.output!r} is multiply driven ({drivers[n.output]} and {n.kind})")
        drivers[n.output] = n.kind
        if n.kind in GATE_KINDS:
            if n.phase is not None or n.enable is not None:
                raise NetlistError(f"gate {n.output!r} cannot carry a phase or enable")
            if not n.inputs:
                raise NetlistError(f"gate {n.output!r} has no inputs")
            if n.kind in ("NOT", "BUFF") and len(n.inputs) != 1:
                raise NetlistError(f"{n.kind} {n.output!r} needs exactly one input")
        elif n.kind in SEQ_KINDS:
            if len(n.inputs) != 1:
                raise NetlistError(f"{n.kind} {n.output!r} needs exactly one data input")
            if n.kind == "LATCH" and n.phase not in PHASES:
                raise NetlistError(f"latch {n.output!r} needs a phase tag")
            if n.kind == "DFF" and n.phase is not None:
                raise NetlistError(f"DFF {n.output!r} cannot carry a phase tag")
        else:
            raise NetlistError(f"unknown node kind {n.kind!r}")
        if not n.delay >= 0.0:
            raise NetlistError(f"node {n.output!r} has negative delay")
    for n in nl.nodes:
        for net in _pins(n):
            if net not in drivers:
                raise NetlistError(f"net {net!r} used by {n.output!r} is undriven")
    seen_po = set()
    for po in nl.pos:
        if po not in drivers:
            raise NetlistError(f"OUTPUT {po!r} is undriven")
        if po in seen_po:
            raise NetlistError(f"OUTPUT {po!r} declared twice")
        seen_po.add(po)
    in_bank: set[int] = set()
    for b in nl.gating_banks:
        if b.enable not in drivers:
            raise NetlistError(f"bank {b.bank_id} enable {b.enable!r} is undriven")
        for m in b.members:
            if not 0 <= m < len(nl.nodes) or not nl.nodes[m].is_seq:
                raise NetlistError(f"bank {b.bank_id} member {m} is not a sequential node")
            if m in in_bank:
                raise NetlistError(f"node {nl.nodes[m].output!r} belongs to two banks")
            if nl.nodes[m].enable != b.enable:
                raise NetlistError(f"bank {b.bank_id} member {nl.nodes[m].output!r} has a different enable")
            in_bank.add(m)
    _topo_comb(nl)


def _topo_comb(nl: Netlist) -> tuple[int, ...]:
    by_net = {n.output: n for n in nl.nodes}
    indeg = {}
    succ: dict[int, list[int]] = {}
    for n in nl.nodes:
        if n.is_seq:
            continue
        indeg[n.id] = 0
        for net in n.inputs:
            src = by_net.get(net)
            if src is not None and not src.is_seq:
                indeg[n.id] += 1
                succ.setdefault(src.id, []).append(n.id)
    ready = sorted(i for i, d in indeg.items() if d == 0)
    order = []
    while ready:
        i = ready.pop(0)
        order.append(i)
        for j in succ.get(i, ()):
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
    if len(order) != len(indeg):
        stuck = sorted(nl.nodes[i].output for i, d in indeg.items() if d > 0)
        raise NetlistError(f"combinational cycle through {', '.join(stuck[:5])}")
    return tuple(order)


def make_netlist(name, nodes, pis, pos, banks=None) -> Netlist:
    """Build a Netlist from loose node specs, assigning dense ids.

    ``nodes`` items are ``(output, kind, inputs[, enable])`` or dicts with keys of
    :class:`Node`.  ``kind`` may be a bench spelling such as ``LATCH_P2``.
    When ``banks`` is None they are derived from shared enables.
    """
    built = []
    for i, spec in enumerate(nodes):
        if isinstance(spec, Node):
            spec = dict(kind=spec.bench_kind, inputs=spec.inputs, output=spec.output,
                        delay=spec.delay, enable=spec.enable)
        elif not isinstance(spec, dict):
            if len(spec) not in (3, 4):
                raise NetlistError(f"node spec {spec!r} needs 3 or 4 fields")
            spec = dict(output=spec[0], kind=spec[1], inputs=spec[2], enable=spec[3] if len(spec) == 4 else None)
        kind, phase = _split_kind(spec["kind"])
        delay = spec.get("delay")
        if delay is None:
            delay = 0.0 if kind in SEQ_KINDS else 1.0
        built.append(Node(i, kind, tuple(spec["inputs"]), spec["output"], phase, float(delay), spec.get("enable")))
    if banks is None:
        banks = derive_banks(built)
    return Netlist(name, tuple(built), tuple(pis), tuple(pos), tuple(banks))


def derive_banks(nodes) -> list[GatingBank]:
    groups: dict[str, list[int]] = {}
    for n in nodes:
        if n.is_seq and n.enable is not None:
            groups.setdefault(n.enable, []).append(n.id)
    return [GatingBank(i, en, tuple(m)) for i, (en, m) in enumerate(groups.items())]


def _split_kind(kind: str) -> tuple[str, str | None]:
    k = kind.upper()
    k = _ALIASES.get(k, k)
    if k.startswith("LATCH_"):
        suffix = k[6:]
        if suffix not in _LATCH_SUFFIX:
            raise NetlistError(f"unknown latch phase {kind!r}")
        return "LATCH", _LATCH_SUFFIX[suffix]
    if k in GATE_KINDS or k == "DFF":
        return k, None
    raise NetlistError(f"unknown gate kind {kind!r}")


# -- .bench I/O --------------------------------------------------------------

def parse_bench(text: str, name: str = "netlist") -> Netlist:
    pis: list[str] = []
    pos: list[str] = []
    specs: list[dict] = []
    spec_line: dict[str, int] = {}
    bank_lines: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        body, _, comment = raw.partition("#")
        body = body.strip()
        comment = comment.strip()
        if not body:
            if comment.startswith("@bank"):
                bank_lines.append((lineno, comment.split()[1:]))
            continue
        m = _PORT_RE.match(body)
        if m:
            (pis if m.group(1).upper() == "INPUT" else pos).append(m.group(2))
            continue
        m = _GATE_RE.match(body)
        if not m:
            raise BenchParseError(f"malformed line {raw.strip()!r}", lineno)
        out, kind, args, en = m.groups()
        ins = [a.strip() for a in args.split(",")] if args.strip() else []
        for a in ins:
            if not _NAME_RE.match(a):
                raise BenchParseError(f"bad net name {a!r}", lineno)
        try:
            k, _ = _split_kind(kind)
        except NetlistError as e:
            raise BenchParseError(str(e), lineno) from None
        if en is not None and k not in SEQ_KINDS:
            raise BenchParseError(f"@en on combinational gate {out!r}", lineno)
        spec = dict(output=out, kind=kind, inputs=ins, enable=en)
        if comment:
            dm = _DELAY_RE.search(comment)
            if dm:
                try:
                    spec["delay"] = float(dm.group(1))
                except ValueError:
                    raise BenchParseError(f"bad delay {dm.group(1)!r}", lineno) from None
        if out in spec_line:
            raise BenchParseError(f"net {out!r} is multiply driven (first at line {spec_line[out]})", lineno)
        spec_line[out] = lineno
        specs.append(spec)

    banks = None
    if bank_lines:
        ids = {s["output"]: i for i, s in enumerate(specs)}
        banks = []
        for lineno, toks in bank_lines:
            if len(toks) < 2:
                raise BenchParseError("bank directive needs an id and an enable", lineno)
            try:
                bid = int(toks[0])
                members = tuple(ids[t] for t in toks[2:])
            except (ValueError, KeyError) as e:
                raise BenchParseError(f"bad bank directive ({e})", lineno) from None
            banks.append(GatingBank(bid, toks[1], members))
    try:
        return make_netlist(name, specs, pis, pos, banks)
    except BenchParseError:
        raise
    except NetlistError as e:
        line = None
        for net, ln in spec_line.items():
            if repr(net) in str(e):
                line = ln
                break
        raise BenchParseError(str(e), line) from None


def read_bench(path) -> Netlist:
    path = Path(path)
    return parse_bench(path.read_text(), path.stem)


def _fmt_delay(x: float) -> str:
    return repr(float(x))


def write_bench(nl: Netlist) -> str:
    out = [f"# {nl.name}", f"# {len(nl.pis)} inputs, {len(nl.pos)} outputs, "
           f"{sum(n.is_seq for n in nl.nodes)} sequential, {sum(not n.is_seq for n in nl.nodes)} gates"]
    out += [f"INPUT({p})" for p in nl.pis]
    out += [f"OUTPUT({p})" for p in nl.pos]
    if nl.gating_banks != tuple(derive_banks(nl.nodes)):
        for b in nl.gating_banks:
            names = " ".join(nl.nodes[m].output for m in b.members)
            out.append(f"#@bank {b.bank_id} {b.enable} {names}".rstrip())
    for n in nl.nodes:
        line = f"{n.output} = {n.bench_kind}({', '.join(n.inputs)})"
        if n.enable is not None:
            line += f" @en({n.enable})"
        default = 0.0 if n.is_seq else 1.0
        if n.delay != default:
            line += f"  # delay={_fmt_delay(n.delay)}"
        out.append(line)
    return "\n".join(out) + "\n"


def isomorphic(a: Netlist, b: Netlist) -> bool:
    """Name-preserving structural equality (node order and ids ignored)."""
    if set(a.pis) != set(b.pis) or list(a.pos) != list(b.pos):
        return False

    def sig(nl):
        return {n.output: (n.kind, n.phase, n.inputs, n.enable, n.delay) for n in nl.nodes}

    def banks(nl):
        return {(bk.enable, frozenset(nl.nodes[m].output for m in bk.members)) for bk in nl.gating_banks}

    return sig(a) == sig(b) and banks(a) == banks(b)


# -- synthetic pipelines -----------------------------------------------------

_PIPE_OPS = ("AND", "OR", "NAND", "NOR", "XOR", "XNOR")
_SAFE_OPS = ("AND", "OR", "NAND", "NOR")


def generate_pipeline(spec: PipelineSpec) -> Netlist:
    """Linear FF pipeline: ``stages`` ranks of ``width`` DFFs.

    Every DFF's data cone holds ``gates_per_stage`` random 2-input gates
    fed from the previous rank (the PIs for rank 0).  A chosen fraction of
    DFFs get their own output XORed into their data input.
    """
    rng = random.Random(spec.seed)
    total = spec.stages * spec.width
    n_loops = int(round(spec.self_loop_fraction * total))
    loops = set(rng.sample(range(total), n_loops))
    nodes: list[tuple[str, str, list[str]]] = []
    prev = [f"in{i}" for i in range(spec.width)]
    for s in range(spec.stages):
        rank = []
        for i in range(spec.width):
            ff = f"s{s}_b{i}"
            net = prev[i]
            for t in range(spec.gates_per_stage):
                other = prev[rng.randrange(spec.width)] if t == 0 else prev[(i + rng.randrange(spec.width)) % spec.width]
                if t == 0 and spec.width > 1 and other == net:
                    other = prev[(i + 1) % spec.width]
                op = rng.choice(_PIPE_OPS if other != net else _SAFE_OPS)
                g = f"g{s}_{i}_{t}"
                nodes.append((g, op, [net, other]))
                net = g
            if s * spec.width + i in loops:
                x = f"x{s}_{i}"
                nodes.append((x, "XOR", [net, ff]))
                net = x
            nodes.append((ff, "DFF", [net]))
            rank.append(ff)
        prev = rank
    name = f"pipe_s{spec.stages}_w{spec.width}_g{spec.gates_per_stage}_l{spec.self_loop_fraction:g}_seed{spec.seed}"
    return make_netlist(name, nodes, [f"in{i}" for i in range(spec.width)], prev)
