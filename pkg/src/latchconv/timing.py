"""Multi-phase latch timing: phase shifts, departure-time fixed point, setup/hold.

Departure times are local: ``D_i`` is measured from the previous close of
latch ``i``'s own phase, so a latch opening at its earliest point has
``D_i = tc - tp``.  Primary inputs act as sources on the last phase that
launch exactly at its close (``d = D = tc``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .netlist import Netlist, NetlistError

THREE_PHASE_TAGS = ("P1", "P2", "P3")
TWO_PHASE_TAGS = ("MASTER", "SLAVE")


@dataclass(frozen=True)
class ClockSchedule:
    k: int
    tc: float
    tp: float
    e: tuple[float, ...]
    tags: tuple[str, ...]

    def __post_init__(self):
        if self.k != len(self.e) or self.k != len(self.tags):
            raise ValueError("schedule needs one closing time and one tag per phase")
        if any(b < a for a, b in zip(self.e, self.e[1:])) or not math.isclose(self.e[-1], self.tc):
            raise ValueError(f"closing times must be ordered and end at tc: {self.e}")
        if not 0 < self.tp <= self.tc:
            raise ValueError(f"pulse width {self.tp} outside (0, tc]")

    def index(self, tag: str) -> int:
        try:
            return self.tags.index(tag)
        except ValueError:
            raise NetlistError(f"latch phase {tag} has no clock in schedule {self.tags}") from None

    def shift(self, i: int, j: int) -> float:
        """Forward shift from phase i to phase j (0-based)."""
        if i < j:
            return self.e[j] - self.e[i]
        return self.tc + self.e[j] - self.e[i]

    def windows(self) -> list[tuple[float, float]]:
        return [(x - self.tp, x) for x in self.e]


def canonical_3phase(tc: float, rho: float = 1 / 6) -> ClockSchedule:
    """p1 opens at the original rising edge, p2 closes mid-cycle, p3 closes at the next edge."""
    if not 0 < rho <= 0.25:
        raise ValueError(f"rho must lie in (0, 1/4], got {rho}")
    return ClockSchedule(3, tc, rho * tc, (rho * tc, tc / 2, tc), THREE_PHASE_TAGS)


def canonical_2phase(tc: float, rho: float = 1 / 6) -> ClockSchedule:
    if not 0 < rho < 0.5:
        raise ValueError(f"rho must lie in (0, 1/2), got {rho}")
    return ClockSchedule(2, tc, rho * tc, (tc / 2, tc), TWO_PHASE_TAGS)


def phase_shift(s: ClockSchedule, i: int, j: int) -> float:
    """Forward shift between 1-based phases i and j."""
    if not (1 <= i <= s.k and 1 <= j <= s.k):
        raise ValueError(f"phases must be in 1..{s.k}")
    return s.shift(i - 1, j - 1)


def schedule_for(nl: Netlist, tc: float, rho: float = 1 / 6) -> ClockSchedule:
    tags = {n.phase for n in nl.nodes if n.kind == "LATCH"}
    if tags & set(TWO_PHASE_TAGS):
        return canonical_2phase(tc, rho)
    return canonical_3phase(tc, rho)


@dataclass(frozen=True)
class LatchTiming:
    setup: float = 0.0
    hold: float = 0.0
    clk2q_min: float = 0.0
    clk2q_max: float = 0.0

    def __post_init__(self):
        if not (0 <= self.clk2q_min <= self.clk2q_max) or self.setup < 0 or self.hold < 0:
            raise ValueError("latch timing needs 0 <= clk2q_min <= clk2q_max and non-negative setup/hold")


@dataclass(frozen=True)
class Arc:
    src: int  # index into TimingGraph.sources
    dst: int  # index into TimingGraph.latches
    dmin: float
    dmax: float


@dataclass(frozen=True)
class TimingGraph:
    """Latch-to-latch arcs through combinational data paths (enable pins excluded)."""

    latches: tuple[str, ...]
    tags: tuple[str, ...]
    sources: tuple[str, ...]  # latches first, then PIs
    arcs: tuple[Arc, ...]

    @property
    def n_latch(self) -> int:
        return len(self.latches)


def _cone_arrivals(nl: Netlist, net: str) -> tuple[dict[str, float], dict[str, float]]:
    lo = {net: 0.0}
    hi = {net: 0.0}
    for gid in nl.comb_order:
        g = nl.nodes[gid]
        ins = [x for x in g.inputs if x in hi]
        if not ins:
            continue
        lo[g.output] = min(lo[x] for x in ins) + g.delay
        hi[g.output] = max(hi[x] for x in ins) + g.delay
    return lo, hi


def extract_arcs(nl: Netlist) -> TimingGraph:
    if any(n.kind == "DFF" for n in nl.nodes):
        raise NetlistError("timing analysis expects a latch-only netlist")
    latches = [n for n in nl.nodes if n.kind == "LATCH"]
    idx = {n.output: i for i, n in enumerate(latches)}
    sources = [n.output for n in latches] + list(nl.pis)
    arcs = []
    for si, net in enumerate(sources):
        lo, hi = _cone_arrivals(nl, net)
        for n in latches:
            if n.data in hi:
                arcs.append(Arc(si, idx[n.output], lo[n.data], hi[n.data]))
    return TimingGraph(tuple(n.output for n in latches), tuple(n.phase for n in latches), tuple(sources), tuple(arcs))


@dataclass
class TimingReport:
    tc: float
    feasible: bool
    converged: bool
    setup_slack: dict[str, float]
    hold_slack: dict[str, float | None]
    early: dict[str, float]
    late: dict[str, float]
    worst: list[tuple[str, str, float]] = field(default_factory=list)  # (latch, check, slack)

    @property
    def worst_setup(self) -> float | None:
        return min(self.setup_slack.values(), default=None)

    def to_json(self) -> dict:
        return {
            "tc": self.tc,
            "feasible": self.feasible,
            "converged": self.converged,
            "worst_setup_slack": self.worst_setup,
            "worst": [list(w) for w in self.worst],
            "latches": {
                name: {"setup": self.setup_slack[name], "hold": self.hold_slack[name],
                       "d": self.early[name], "D": self.late[name]}
                for name in sorted(self.setup_slack)
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _fixed_point(tg: TimingGraph, s: ClockSchedule, lt: LatchTiming, late: bool):
    """Departure fixed point by Jacobi sweeps, at most n+1 of them."""
    n = tg.n_latch
    ph = [s.index(t) for t in tg.tags]
    last = s.k - 1
    src_phase = ph + [last] * (len(tg.sources) - n)
    floor = s.tc - s.tp
    eps = 1e-9 * max(s.tc, 1.0)
    shift = [[s.shift(i, j) for j in range(s.k)] for i in range(s.k)]
    q = lt.clk2q_max if late else lt.clk2q_min
    pi_dep = s.tc
    dep = [floor] * n
    agg = max if late else min
    by_dst: list[list[Arc]] = [[] for _ in range(n)]
    for a in tg.arcs:
        by_dst[a.dst].append(a)

    def arrivals(cur):
        out = []
        for i in range(n):
            vals = []
            for a in by_dst[i]:
                d = cur[a.src] if a.src < n else pi_dep
                vals.append(d + q + (a.dmax if late else a.dmin) - shift[src_phase[a.src]][ph[i]])
            out.append(agg(vals) if vals else None)
        return out

    converged = n == 0
    for _ in range(n + 1):
        arr = arrivals(dep)
        new = [floor if x is None else max(floor, x) for x in arr]
        if all(abs(x - y) <= eps for x, y in zip(new, dep)):
            converged = True
            dep = new
            break
        dep = new
        # unbounded borrowing shows up as departures past the close
        if late and max(dep) > s.tc + eps:
            break
    return dep, arrivals(dep), converged


def smo_analyze(nl: Netlist | TimingGraph, s: ClockSchedule, lt: LatchTiming | None = None) -> TimingReport:
    lt = lt or LatchTiming()
    tg = nl if isinstance(nl, TimingGraph) else extract_arcs(nl)
    D, D_arr, conv_late = _fixed_point(tg, s, lt, True)
    d, d_arr, conv_early = _fixed_point(tg, s, lt, False)
    eps = 1e-9 * max(s.tc, 1.0)
    setup, hold, worst = {}, {}, []
    for i, name in enumerate(tg.latches):
        setup[name] = (s.tc - lt.setup) - D[i]
        hold[name] = None if d_arr[i] is None else d_arr[i] - lt.hold
        if setup[name] < -eps:
            worst.append((name, "setup", setup[name]))
        if hold[name] is not None and hold[name] < -eps:
            worst.append((name, "hold", hold[name]))
    worst.sort(key=lambda w: (w[2], w[0], w[1]))
    converged = conv_late and conv_early
    feasible = converged and not worst
    return TimingReport(s.tc, feasible, converged, setup, hold, dict(zip(tg.latches, d)), dict(zip(tg.latches, D)), worst[:10])


def min_cycle(nl: Netlist | TimingGraph, family, lo: float, hi: float,
              lt: LatchTiming | None = None, rtol: float = 1e-6) -> float:
    """Smallest feasible tc in [lo, hi] by bisection; ``family`` maps tc to a ClockSchedule."""
    tg = nl if isinstance(nl, TimingGraph) else extract_arcs(nl)

    def ok(tc):
        return smo_analyze(tg, family(tc), lt).feasible

    if ok(lo):
        return lo
    if not ok(hi):
        raise ValueError(f"no feasible cycle time in [{lo}, {hi}]")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def critical_delay(nl: Netlist) -> float:
    """Longest combinational data path between sequential elements, PIs and POs."""
    arr: dict[str, float] = {p: 0.0 for p in nl.pis}
    for n in nl.nodes:
        if n.is_seq:
            arr[n.output] = 0.0
    for gid in nl.comb_order:
        g = nl.nodes[gid]
        arr[g.output] = max((arr[x] for x in g.inputs), default=0.0) + g.delay
    ends = [arr[n.data] for n in nl.nodes if n.is_seq] + [arr[p] for p in nl.pos]
    return max(ends, default=0.0)
