"""Command-line driver: convert, table, verify, timing, gen, oracle.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on usage or
I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .netlist import BenchParseError, NetlistError, PipelineSpec, generate_pipeline, read_bench, write_bench
from .phase_ilp import SolveLimits, brute_force_assign, build_ilp, export_lp, solve_branch_bound, MAX_BRUTE
from .retime import build_retime_problem, exhaustive_retime_oracle, min_cut_retime, retime_netlist
from .seqgraph import extract_seq_graph
from .sim import Stimulus, check_equivalence, simulate, toggle_report
from .timing import (LatchTiming, canonical_2phase, canonical_3phase, critical_delay, extract_arcs,
                     min_cycle, schedule_for, smo_analyze)
from .transform import (check_c1, check_c2, conversion_stats, split_gating_banks, to_master_slave,
                        to_three_phase)

SCHEMA = 1
TABLE_COLUMNS = ("Design", "FF", "M-S", "3-phase", "Save (%) 2*FF", "Save (%) M-S")

log = logging.getLogger("latchconv")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    inputs: tuple[str, ...] = ()
    output: str | None = None
    report: str | None = None
    scheme: str = "3phase"
    tc: float | None = None
    rho: float = 1 / 6
    retime: bool = True
    vectors: int = 10000
    seed: int = 42
    init: str = "zero"
    limits: SolveLimits = SolveLimits()
    latch: LatchTiming = LatchTiming()
    strict_timing: bool = False
    as_json: bool = False


def _rho(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text}") from None


def _load(path: str):
    try:
        return read_bench(path)
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror or e}") from None
    except (BenchParseError, NetlistError) as e:
        raise UsageError(f"{path}: {e}") from None


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as e:
        raise UsageError(f"cannot write {path}: {e.strerror or e}") from None


def _threads(n: int) -> int:
    cap = os.environ.get("LATCHCONV_THREADS")
    try:
        limit = int(cap) if cap else (os.cpu_count() or 1)
    except ValueError:
        limit = 1
    return max(1, min(limit, n))


def _cycle_bounds(nl, lt: LatchTiming) -> tuple[float, float]:
    crit = max(critical_delay(nl), 1e-3)
    over = lt.setup + lt.hold + lt.clk2q_max
    return 1e-3 * crit, 4 * (crit + 4 * over) + 1.0


def _min_cycle_or_none(nl, rho, lt):
    fam = (lambda t: canonical_2phase(t, rho)) if _is_ms(nl) else (lambda t: canonical_3phase(t, rho))
    lo, hi = _cycle_bounds(nl, lt)
    try:
        return min_cycle(extract_arcs(nl), fam, lo, hi, lt)
    except ValueError:
        return None


def _is_ms(nl) -> bool:
    return any(n.phase in ("MASTER", "SLAVE") for n in nl.nodes if n.kind == "LATCH")


# -- convert ----------------------------------------------------------------------

def run_convert(ff, cfg: RunConfig, extras: dict | None = None):
    """Full flow for one FF netlist.  Returns (converted netlist, report dict)."""
    extras = extras or {}
    t0 = time.perf_counter()
    stage = "extract"
    try:
        g = extract_seq_graph(ff)
        if extras.get("seqgraph"):
            _write(extras["seqgraph"], g.to_json() + "\n")
        report = {"schema": SCHEMA, "design": ff.name, "scheme": cfg.scheme}
        ilp_s = 0.0
        ms = to_master_slave(ff)
        stage = "ilp"
        t_ilp = time.perf_counter()
        model = build_ilp(g)
        if extras.get("lp"):
            _write(extras["lp"], export_lp(model))
        a = solve_branch_bound(model, cfg.limits)
        ilp_s = time.perf_counter() - t_ilp
        stage = "transform"
        p3 = to_three_phase(ff, a, g)
        p3, banks = split_gating_banks(p3, a)
        stats = conversion_stats(ff, ms, p3, banks.duplicated_banks)
        report["table"] = stats.table_row()
        report["detail"] = {k: v for k, v in json.loads(stats.to_json())["detail"].items() if k != "design"}
        report["ilp"] = {"cost": a.cost, "optimal": a.proven_optimal, "nodes": a.nodes_explored}
        before = p3 if cfg.scheme == "3phase" else ms
        tc = cfg.tc if cfg.tc is not None else (critical_delay(ff) or 1.0)
        report["tc"] = tc
        report["rho"] = cfg.rho
        out = before
        if cfg.retime:
            stage = "retime"
            out, sol = retime_netlist(before, tc, cfg.latch.clk2q_max)
            report["retiming"] = {"initial": before.latch_count - ff.count("DFF"),
                                  "final": out.latch_count - ff.count("DFF"),
                                  "regions": [r.to_json() for r in sol.regions]}
        out = out.replace(name=f"{ff.name}_{cfg.scheme}")
        report["latches"] = out.latch_count
        stage = "check"
        c1 = check_c1(ff, out)
        c2 = check_c2(out)
        stage = "timing"
        sched = schedule_for(out, tc, cfg.rho)
        tr = smo_analyze(out, sched, cfg.latch)
        hold_ok = all(s is None or s >= -1e-9 * tc for s in tr.hold_slack.values())
        timing = {"setup_ok_at_tc": tr.converged and (tr.worst_setup is None or tr.worst_setup >= -1e-9 * tc),
                  "hold_ok": hold_ok, "worst_setup_slack": tr.worst_setup,
                  "min_cycle": _min_cycle_or_none(out, cfg.rho, cfg.latch)}
        timing_ok = hold_ok
        if cfg.retime:
            timing["min_cycle_before_retiming"] = _min_cycle_or_none(before, cfg.rho, cfg.latch)
            mb, ma = timing["min_cycle_before_retiming"], timing["min_cycle"]
            timing["retiming_safe"] = mb is None or (ma is not None and ma <= mb * (1 + 1e-6))
            timing_ok = timing_ok and timing["retiming_safe"]
        if cfg.strict_timing:
            timing_ok = timing_ok and timing["setup_ok_at_tc"]
        stage = "equivalence"
        verdict = check_equivalence(ff, out, None, cfg.vectors, cfg.seed, cfg.init)
        if extras.get("trace"):
            _write(extras["trace"], simulate(out, Stimulus(cfg.seed, cfg.vectors), cfg.init).dump())
        report["checks"] = {"c1": c1, "c2": [list(p) for p in c2], "timing": timing,
                            "equivalence": verdict.to_json()}
        report["passed"] = not c1 and not c2 and timing_ok and verdict.passed
        total = time.perf_counter() - t0
        report["runtime"] = {"ILP": round(ilp_s, 6), "Conv": round(total - ilp_s, 6), "Total": round(total, 6)}
        return out, report
    except UsageError:
        raise
    except Exception as e:  # surfaced with the stage that failed
        raise StageError(stage, e) from e


class StageError(Exception):
    def __init__(self, stage, err):
        super().__init__(f"{stage}: {err}")
        self.stage = stage


def cmd_convert(cfg: RunConfig, args) -> int:
    ff = _load(cfg.inputs[0])
    extras = {"seqgraph": args.dump_seqgraph, "lp": args.lp, "trace": args.dump_trace}
    try:
        out, report = run_convert(ff, cfg, extras)
    except StageError as e:
        print(f"error in {e}", file=sys.stderr)
        return 1
    if cfg.output:
        _write(cfg.output, write_bench(out))
    text = json.dumps(report, sort_keys=True, indent=2)
    if cfg.report:
        _write(cfg.report, text + "\n")
    if cfg.as_json:
        print(text)
    else:
        row = report["table"]
        chk = report["checks"]
        print(f"{ff.name}: scheme={cfg.scheme} FF={row['FF']} M-S={row['M-S']} 3-phase={row['3-phase']} "
              f"final latches={report['latches']} ILP cost={report['ilp']['cost']} optimal={report['ilp']['optimal']}")
        print(f"  C1 {'ok' if not chk['c1'] else chk['c1']}  C2 {'ok' if not chk['c2'] else chk['c2'][:3]}  "
              f"equivalence {'PASS' if chk['equivalence']['passed'] else 'FAIL'}  "
              f"min cycle {chk['timing']['min_cycle']}  setup@tc {chk['timing']['setup_ok_at_tc']}  "
              f"hold {chk['timing']['hold_ok']}")
        print("PASS" if report["passed"] else "FAIL")
    return 0 if report["passed"] else 1


# -- table ------------------------------------------------------------------------

def table_row(path: Path, cfg: RunConfig, verify: bool) -> dict:
    t0 = time.perf_counter()
    ff = read_bench(path)
    g = extract_seq_graph(ff)
    t_ilp = time.perf_counter()
    a = solve_branch_bound(g, cfg.limits)
    ilp_s = time.perf_counter() - t_ilp
    ms = to_master_slave(ff)
    p3, banks = split_gating_banks(to_three_phase(ff, a, g), a)
    stats = conversion_stats(ff, ms, p3, banks.duplicated_banks)
    row = dict(stats.table_row())
    row["ILP cost"] = a.cost
    row["optimal"] = a.proven_optimal
    row["inserted_p2"] = stats.inserted_p2
    row["boundary_p2"] = stats.boundary_p2
    row["duplicated_banks"] = stats.duplicated_banks
    if verify:
        tc = critical_delay(ff) or 1.0
        ok = True
        for conv in (ms, p3):
            out = retime_netlist(conv, tc)[0] if cfg.retime else conv
            ok = ok and check_equivalence(ff, out, None, cfg.vectors, cfg.seed, cfg.init).passed
        row["equivalent"] = ok
    total = time.perf_counter() - t0
    row["runtime"] = {"ILP": round(ilp_s, 6), "Conv": round(total - ilp_s, 6), "Total": round(total, 6)}
    return row


def build_table(paths, cfg: RunConfig, verify: bool = False) -> dict:
    paths = sorted(paths, key=lambda p: p.name)
    rows: list[dict | None] = [None] * len(paths)

    def work(i):
        try:
            rows[i] = table_row(paths[i], cfg, verify)
        except (BenchParseError, NetlistError, OSError) as e:
            log.warning("skipping %s: %s", paths[i].name, e)

    with ThreadPoolExecutor(max_workers=_threads(len(paths))) as pool:
        list(pool.map(work, range(len(paths))))
    good = [r for r in rows if r is not None]
    avg = {"Design": "Average"}
    if good:
        for col in TABLE_COLUMNS[1:]:
            avg[col] = round(sum(r[col] for r in good) / len(good), 1)
    return {"schema": SCHEMA, "columns": list(TABLE_COLUMNS), "rows": good, "average": avg if good else None}


def table_csv(table: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for r in table["rows"]:
        w.writerow([r[c] for c in TABLE_COLUMNS])
    if table["average"]:
        w.writerow([table["average"][c] for c in TABLE_COLUMNS])
    return buf.getvalue()


def cmd_table(cfg: RunConfig, args) -> int:
    d = Path(cfg.inputs[0])
    if not d.is_dir():
        raise UsageError(f"not a directory: {d}")
    table = build_table(sorted(d.glob("*.bench")), cfg, args.verify)
    text = json.dumps(table, sort_keys=True, indent=2)
    if args.csv:
        _write(args.csv, table_csv(table))
    if cfg.report:
        _write(cfg.report, text + "\n")
    print(text if cfg.as_json else table_csv(table), end="\n" if cfg.as_json else "")
    if args.verify and not all(r.get("equivalent", True) for r in table["rows"]):
        return 1
    return 0


# -- verify / timing / gen / oracle --------------------------------------------

def cmd_verify(cfg: RunConfig, args) -> int:
    golden, dut = _load(cfg.inputs[0]), _load(cfg.inputs[1])
    try:
        v = check_equivalence(golden, dut, None, cfg.vectors, cfg.seed, cfg.init)
    except ValueError as e:
        raise UsageError(str(e)) from None
    st = Stimulus(cfg.seed, cfg.vectors)
    if args.dump_trace or args.toggles:
        tr = simulate(dut, st, cfg.init)
        if args.dump_trace:
            _write(args.dump_trace, tr.dump())
        if args.toggles:
            _write(args.toggles, toggle_report(tr).to_csv())
    out = {"schema": SCHEMA, "golden": golden.name, "dut": dut.name, **v.to_json()}
    if cfg.as_json:
        print(json.dumps(out, sort_keys=True))
    else:
        msg = "PASS" if v.passed else f"FAIL at cycle {v.mismatch[0]} on {v.mismatch[1]}: {v.mismatch[2]} vs {v.mismatch[3]}"
        print(f"{golden.name} vs {dut.name}: {msg} ({v.cycles} cycles, {v.skipped} skipped for X)")
    return 0 if v.passed else 1


def cmd_timing(cfg: RunConfig, args) -> int:
    nl = _load(cfg.inputs[0])
    if any(n.kind == "DFF" for n in nl.nodes):
        raise UsageError(f"{nl.name} holds flip-flops; convert it first")
    if cfg.tc is None:
        raise UsageError("timing needs --tc")
    try:
        sched = schedule_for(nl, cfg.tc, cfg.rho)
        rep = smo_analyze(nl, sched, cfg.latch)
    except (ValueError, NetlistError) as e:
        raise UsageError(str(e)) from None
    out = {"schema": SCHEMA, "design": nl.name, "rho": cfg.rho, **rep.to_json()}
    if args.min_cycle:
        out["min_cycle"] = _min_cycle_or_none(nl, cfg.rho, cfg.latch)
    if cfg.as_json:
        print(json.dumps(out, sort_keys=True))
    else:
        print(f"{nl.name} at tc={cfg.tc}: {'feasible' if rep.feasible else 'INFEASIBLE'}"
              f" (worst setup slack {rep.worst_setup})")
        for name, check, slack in rep.worst:
            print(f"  {check} violation at {name}: {slack:.6g}")
        if args.min_cycle:
            print(f"  min cycle {out['min_cycle']}")
    return 0 if rep.feasible else 1


def cmd_gen(cfg: RunConfig, args) -> int:
    try:
        spec = PipelineSpec(args.stages, args.width, args.gates, args.loops, cfg.seed)
    except ValueError as e:
        raise UsageError(str(e)) from None
    text = write_bench(generate_pipeline(spec))
    if cfg.output:
        _write(cfg.output, text)
    else:
        print(text, end="")
    return 0


def cmd_oracle(cfg: RunConfig, args) -> int:
    """Cross-check the exact solvers against exhaustive enumeration on one design."""
    ff = _load(cfg.inputs[0])
    g = extract_seq_graph(ff)
    out = {"schema": SCHEMA, "design": ff.name}
    ok = True
    if len(g.ff_nodes) <= MAX_BRUTE:
        bb = solve_branch_bound(g, cfg.limits)
        bf = brute_force_assign(g)
        out["ilp"] = {"branch_bound": bb.cost, "brute_force": bf.cost, "match": bb.cost == bf.cost}
        ok = ok and bb.cost == bf.cost
    else:
        out["ilp"] = {"skipped": f"more than {MAX_BRUTE} FFs"}
    a = solve_branch_bound(g, cfg.limits)
    tc = cfg.tc if cfg.tc is not None else (critical_delay(ff) or 1.0)
    regions = []
    for name, conv in (("3phase", to_three_phase(ff, a, g)), ("ms", to_master_slave(ff))):
        p = build_retime_problem(conv, tc)
        for i, r in enumerate(p.regions()):
            try:
                want = exhaustive_retime_oracle(r).latch_count
            except ValueError:
                continue
            got = min_cut_retime(r).latch_count
            regions.append({"scheme": name, "region": i, "min_cut": got, "oracle": want})
            ok = ok and got == want
    out["retime"] = regions
    out["passed"] = ok
    if cfg.as_json:
        print(json.dumps(out, sort_keys=True))
    else:
        ilp = out["ilp"]
        print(f"{ff.name}: ILP " + (f"branch-bound {ilp['branch_bound']} vs brute-force {ilp['brute_force']}"
                                    if "match" in ilp else ilp["skipped"]))
        bad = [r for r in regions if r["min_cut"] != r["oracle"]]
        print(f"  retiming regions checked: {len(regions)}, mismatches: {len(bad)}")
        print("PASS" if ok else "FAIL")
    return 0 if ok else 1


# -- argument parsing -------------------------------------------------------------

def _common(p, sim=True):
    p.add_argument("--json", action="store_true", help="print a JSON report")
    if sim:
        p.add_argument("--vectors", type=int, default=10000)
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--init", choices=("zero", "x"), default="zero")


def _timing_args(p):
    p.add_argument("--tc", type=float, help="cycle time (default: FF critical path delay)")
    p.add_argument("--rho", type=_rho, default=1 / 6, help="pulse width as a fraction of tc (default 1/6)")
    p.add_argument("--setup", type=float, default=0.0)
    p.add_argument("--hold", type=float, default=0.0)
    p.add_argument("--clk2q-min", type=float, default=0.0)
    p.add_argument("--clk2q-max", type=float, default=0.0)


def _solver_args(p):
    p.add_argument("--max-nodes", type=int, default=SolveLimits.max_nodes)
    p.add_argument("--max-seconds", type=float, default=SolveLimits.max_seconds)


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latchconv", description="Flip-flop to 3-phase latch conversion.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert an FF netlist and verify the result")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--scheme", choices=("3phase", "ms"), default="3phase")
    p.add_argument("--retime", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--strict-timing", action="store_true", help="also require setup to hold at --tc")
    p.add_argument("--dump-seqgraph")
    p.add_argument("--dump-trace")
    p.add_argument("--lp", help="write the phase-assignment ILP in LP format")
    _timing_args(p)
    _solver_args(p)
    _common(p)

    p = sub.add_parser("table", help="register-count table over a directory of benches")
    p.add_argument("dir")
    p.add_argument("--csv")
    p.add_argument("--report", help="write the JSON table here")
    p.add_argument("--verify", action="store_true", help="also check equivalence of both conversions")
    p.add_argument("--retime", action=argparse.BooleanOptionalAction, default=True)
    _solver_args(p)
    _common(p)

    p = sub.add_parser("verify", help="compare the PO streams of two netlists")
    p.add_argument("golden")
    p.add_argument("dut")
    p.add_argument("--dump-trace")
    p.add_argument("--toggles", help="write the DUT toggle report as CSV")
    _common(p)

    p = sub.add_parser("timing", help="multi-phase setup/hold analysis of a latch netlist")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--min-cycle", action="store_true")
    _timing_args(p)
    _common(p, sim=False)

    p = sub.add_parser("gen", help="generate a synthetic FF pipeline")
    p.add_argument("--stages", type=int, default=3)
    p.add_argument("--width", type=int, default=1)
    p.add_argument("--gates", type=int, default=1)
    p.add_argument("--loops", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("oracle", help="check exact solvers against exhaustive search on one design")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--tc", type=float)
    _solver_args(p)
    _common(p, sim=False)
    return ap


def config_from_args(args) -> RunConfig:
    g = lambda k, d=None: getattr(args, k, d)
    inputs = tuple(x for x in (g("input"), g("dir"), g("golden"), g("dut")) if x)
    if g("vectors") is not None and args.vectors < 1:
        raise UsageError("--vectors must be positive")
    try:
        latch = LatchTiming(g("setup", 0.0), g("hold", 0.0), g("clk2q_min", 0.0), g("clk2q_max", 0.0))
    except ValueError as e:
        raise UsageError(str(e)) from None
    rho = g("rho", 1 / 6)
    if not 0 < rho <= 0.25:
        raise UsageError("--rho must lie in (0, 1/4]")
    return RunConfig(
        command=args.command, inputs=inputs, output=g("out"), report=g("report"),
        scheme=g("scheme", "3phase"), tc=g("tc"), rho=rho, retime=g("retime", True),
        vectors=g("vectors", 10000), seed=g("seed", 42), init=g("init", "zero"),
        limits=SolveLimits(g("max_nodes", SolveLimits.max_nodes), g("max_seconds", SolveLimits.max_seconds)),
        latch=latch, strict_timing=g("strict_timing", False), as_json=g("json", False),
    )


COMMANDS = {"convert": cmd_convert, "table": cmd_table, "verify": cmd_verify,
            "timing": cmd_timing, "gen": cmd_gen, "oracle": cmd_oracle}


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg, args)
    except UsageError as e:
        print(f"latchconv: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
