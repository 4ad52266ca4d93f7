"""Zero-delay cycle simulation of FF and multi-phase latch netlists.

Within a cycle the PIs are applied and the logic settles; then each capture
group (all DFFs, or all latches of one phase in closing-time order) loads
its data inputs at once and the logic settles again.  POs are sampled just
before the last group captures, so a DFF buffer shows its input one cycle
late and the converted designs line up with zero offset.

In 3-phase designs the p3 latch state after cycle k equals the FF state
after edge k, while p1 latches run one cycle behind; they therefore hold
their reset value through cycle 0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .netlist import Netlist, NetlistError
from .timing import ClockSchedule, canonical_2phase, canonical_3phase

_SYM = {0: "0", 1: "1", 2: "X"}


class InterfaceMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Stimulus:
    """Pseudo-random PI vectors from xorshift64*.

    Bits are drawn cycle by cycle for the PIs in sorted-name order, so two
    netlists with the same PI names see the same stream regardless of
    declaration order.
    """

    seed: int
    cycles: int
    fixed: tuple[tuple[str, ...], np.ndarray] | None = None  # explicit (names, bits[cycles, n])

    @classmethod
    def from_bits(cls, names, bits) -> "Stimulus":
        arr = np.asarray(bits, dtype=np.int8)
        if arr.ndim != 2 or arr.shape[1] != len(names):
            raise ValueError("bits must be shaped [cycles, len(names)]")
        return cls(0, arr.shape[0], (tuple(names), arr))

    def vectors(self, pis) -> np.ndarray:
        pis = list(pis)
        if self.fixed is not None:
            names, arr = self.fixed
            col = {n: i for i, n in enumerate(names)}
            missing = [p for p in pis if p not in col]
            if missing:
                raise InterfaceMismatch(f"stimulus has no column for {missing}")
            return np.ascontiguousarray(arr[:, [col[p] for p in pis]])
        order = sorted(pis)
        bits = _kernels.xorshift_bits(self.seed & 0xFFFFFFFFFFFFFFFF, self.cycles * len(order))
        arr = bits.reshape(self.cycles, len(order))
        col = {n: i for i, n in enumerate(order)}
        return np.ascontiguousarray(arr[:, [col[p] for p in pis]]) if pis else np.zeros((self.cycles, 0), np.int8)


@dataclass
class SimTrace:
    seq_names: tuple[str, ...]
    po_names: tuple[str, ...]
    net_names: tuple[str, ...]
    states: np.ndarray  # [cycles, n_seq], values 0/1/2(X), after the cycle
    pos: np.ndarray  # [cycles, n_po]
    toggles: np.ndarray  # [n_nets]
    seq_nets: frozenset[str]
    pi_names: tuple[str, ...] = ()

    @property
    def cycles(self) -> int:
        return self.states.shape[0]

    def state(self, name: str) -> np.ndarray:
        return self.states[:, self.seq_names.index(name)]

    def po(self, name: str) -> np.ndarray:
        return self.pos[:, self.po_names.index(name)]

    def dump(self) -> str:
        lines = []
        for c in range(self.cycles):
            vals = ",".join(f"{p}={_SYM[int(v)]}" for p, v in zip(self.po_names, self.pos[c]))
            lines.append(f"{c},{vals}" if vals else str(c))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class _Compiled:
    nets: tuple[str, ...]
    ops: np.ndarray
    gate_out: np.ndarray
    in_ptr: np.ndarray
    in_idx: np.ndarray
    pi_net: np.ndarray
    seq: tuple[int, ...]  # node ids
    seq_net: np.ndarray
    seq_d: np.ndarray
    seq_en: np.ndarray
    po_net: np.ndarray


def _compile(nl: Netlist) -> _Compiled:
    nets = list(nl.pis) + [n.output for n in nl.nodes]
    idx = {x: i for i, x in enumerate(nets)}
    ops, outs, ptr, ins = [], [], [0], []
    for gid in nl.comb_order:
        g = nl.nodes[gid]
        ops.append(_kernels.OPCODES[g.kind])
        outs.append(idx[g.output])
        ins.extend(idx[x] for x in g.inputs)
        ptr.append(len(ins))
    seq = tuple(n.id for n in nl.nodes if n.is_seq)
    i64 = lambda xs: np.asarray(xs, dtype=np.int64)
    return _Compiled(
        tuple(nets), i64(ops), i64(outs), i64(ptr), i64(ins), i64([idx[p] for p in nl.pis]), seq,
        i64([idx[nl.nodes[s].output] for s in seq]), i64([idx[nl.nodes[s].data] for s in seq]),
        i64([idx[nl.nodes[s].enable] if nl.nodes[s].enable else -1 for s in seq]),
        i64([idx[p] for p in nl.pos]),
    )


def _init_code(init: str) -> int:
    if init in ("zero", "0"):
        return _kernels.ZERO
    if init in ("x", "X"):
        return _kernels.X
    raise ValueError(f"init must be 'zero' or 'x', got {init!r}")


def _run(nl: Netlist, st: Stimulus, groups: list[int], n_groups: int, po_group: int, init: str,
         hold_group: int = -1) -> SimTrace:
    c = _compile(nl)
    pi_vals = st.vectors(nl.pis)
    states, pos, toggles = _kernels.simulate_cycles(
        c.ops, c.gate_out, c.in_ptr, c.in_idx, c.pi_net, pi_vals,
        c.seq_net, c.seq_d, c.seq_en, np.asarray(groups, dtype=np.int64), n_groups, po_group,
        c.po_net, _init_code(init), len(c.nets), hold_group,
    )
    seq_names = tuple(nl.nodes[s].output for s in c.seq)
    return SimTrace(seq_names, tuple(nl.pos), c.nets, states, pos, toggles, frozenset(seq_names), tuple(nl.pis))


def simulate_ff(nl: Netlist, st: Stimulus, init: str = "zero") -> SimTrace:
    if any(n.kind == "LATCH" for n in nl.nodes):
        raise NetlistError("simulate_ff expects a flip-flop netlist")
    groups = [0] * sum(1 for n in nl.nodes if n.is_seq)
    return _run(nl, st, groups, 1, 0, init)


def simulate_latch(nl: Netlist, s: ClockSchedule | None, st: Stimulus, init: str = "zero",
                   order: tuple[str, ...] | None = None) -> SimTrace:
    """Latch groups capture in closing-time order unless ``order`` (phase tags) overrides it."""
    if any(n.kind == "DFF" for n in nl.nodes):
        raise NetlistError("simulate_latch expects a latch-only netlist")
    if s is None:
        s = default_schedule(nl)
    seq_order = order or s.tags
    missing = set(s.tags) ^ set(seq_order)
    if missing or len(seq_order) != len(s.tags):
        raise ValueError(f"capture order {seq_order} must permute {s.tags}")
    pos_of = {t: i for i, t in enumerate(seq_order)}
    groups = []
    for n in nl.nodes:
        if n.is_seq:
            if n.phase not in pos_of:
                raise NetlistError(f"latch {n.output} has phase {n.phase} with no clock in the schedule")
            groups.append(pos_of[n.phase])
    # p1 latches hold one cycle behind p3, so they keep the reset value through cycle 0
    hold = pos_of["P1"] if "P1" in pos_of else -1
    return _run(nl, st, groups, len(seq_order), len(seq_order) - 1, init, hold)


def default_schedule(nl: Netlist, tc: float = 1.0) -> ClockSchedule:
    tags = {n.phase for n in nl.nodes if n.kind == "LATCH"}
    if tags & {"MASTER", "SLAVE"}:
        return canonical_2phase(tc)
    return canonical_3phase(tc)


def simulate(nl: Netlist, st: Stimulus, init: str = "zero", s: ClockSchedule | None = None) -> SimTrace:
    if any(n.kind == "LATCH" for n in nl.nodes):
        return simulate_latch(nl, s, st, init)
    return simulate_ff(nl, st, init)


@dataclass(frozen=True)
class Verdict:
    passed: bool
    cycles: int
    skipped: int
    mismatch: tuple[int, str, str, str] | None = None  # cycle, PO, golden, dut

    def to_json(self) -> dict:
        out = {"passed": self.passed, "cycles": self.cycles, "skipped_x": self.skipped}
        if self.mismatch:
            c, po, a, b = self.mismatch
            out["first_mismatch"] = {"cycle": c, "po": po, "golden": a, "dut": b}
        return out


def check_equivalence(golden: Netlist, dut: Netlist, s: ClockSchedule | None = None, vectors: int = 10000,
                      seed: int = 42, init: str = "zero") -> Verdict:
    """Compare PO streams cycle by cycle; cycles with an X on either side are skipped."""
    if set(golden.pis) != set(dut.pis) or set(golden.pos) != set(dut.pos):
        raise InterfaceMismatch(f"{golden.name} and {dut.name} differ in PI/PO names")
    st = Stimulus(seed, vectors)
    a = simulate(golden, st, init, s if _is_latch(golden) else None)
    b = simulate(dut, st, init, s if _is_latch(dut) else None)
    names = sorted(set(golden.pos))
    ga = np.stack([a.po(n) for n in names], axis=1) if names else np.zeros((vectors, 0), np.int8)
    gb = np.stack([b.po(n) for n in names], axis=1) if names else np.zeros((vectors, 0), np.int8)
    has_x = ((ga == _kernels.X) | (gb == _kernels.X)).any(axis=1)
    diff = (ga != gb).any(axis=1) & ~has_x
    skipped = int(has_x.sum())
    if diff.any():
        c = int(np.argmax(diff))
        j = int(np.argmax(ga[c] != gb[c]))
        return Verdict(False, vectors, skipped, (c, names[j], _SYM[int(ga[c, j])], _SYM[int(gb[c, j])]))
    return Verdict(True, vectors, skipped)


def _is_latch(nl: Netlist) -> bool:
    return any(n.kind == "LATCH" for n in nl.nodes)


@dataclass(frozen=True)
class ActivityReport:
    cycles: int
    per_net: dict[str, float]  # toggles per cycle
    seq_toggles: int
    comb_toggles: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["net", "toggles_per_cycle"])
        for net in sorted(self.per_net):
            w.writerow([net, f"{self.per_net[net]:.6f}"])
        w.writerow(["#seq_total", self.seq_toggles])
        w.writerow(["#comb_total", self.comb_toggles])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"cycles": self.cycles, "seq_toggles": self.seq_toggles, "comb_toggles": self.comb_toggles}


def toggle_report(t: SimTrace) -> ActivityReport:
    """Toggle counts split into sequential outputs and gate outputs (PIs excluded)."""
    cyc = max(t.cycles, 1)
    per, seq, comb = {}, 0, 0
    skip = set(t.pi_names)
    for name, n in zip(t.net_names, t.toggles):
        if name in skip:
            continue
        per[name] = int(n) / cyc
        if name in t.seq_nets:
            seq += int(n)
        else:
            comb += int(n)
    return ActivityReport(t.cycles, per, seq, comb)
