"""Time the numba kernels against the pure-Python fallback.

Each mode runs in its own interpreter because the backend is chosen at
import time from LATCHCONV_NO_JIT.

    python benchmarks/bench_kernels.py [--repeat N] [--json]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def workloads():
    from importlib.resources import files

    from latchconv import _kernels
    from latchconv.netlist import PipelineSpec, generate_pipeline, read_bench
    from latchconv.phase_ilp import brute_force_assign
    from latchconv.seqgraph import extract_seq_graph
    from latchconv.sim import Stimulus, simulate_ff, simulate_latch
    from latchconv.transform import to_master_slave

    s27 = read_bench(files("latchconv") / "data" / "s27.bench")
    pipe = generate_pipeline(PipelineSpec(6, 6, 4, 0.3, 1))
    g16 = extract_seq_graph(generate_pipeline(PipelineSpec(4, 4, 2, 0.3, 2)))
    return {
        "xorshift 1e5 bits": lambda: _kernels.xorshift_bits(42, 100_000),
        "sim s27 2k cycles": lambda: simulate_ff(s27, Stimulus(42, 2000)),
        "sim pipe ms 2k cycles": lambda: simulate_latch(to_master_slave(pipe), None, Stimulus(42, 2000)),
        f"brute force ILP {len(g16.ff_nodes)} FFs": lambda: brute_force_assign(g16),
    }


def run_mode(repeat):
    from latchconv import _kernels

    out = {"jit": _kernels.HAVE_NUMBA, "times": {}}
    for name, fn in workloads().items():
        fn()  # warm-up, includes compilation
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        out["times"][name] = best
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", action="store_true")
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(run_mode(args.repeat)))
        return 0
    res = {}
    for mode, flag in (("jit", "0"), ("fallback", "1")):
        env = dict(os.environ, LATCHCONV_NO_JIT=flag)
        p = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(args.repeat)],
                           env=env, capture_output=True, text=True, check=True)
        res[mode] = json.loads(p.stdout.strip().splitlines()[-1])
    if args.json:
        print(json.dumps(res, indent=2, sort_keys=True))
        return 0
    if not res["jit"]["jit"]:
        print("numba not installed: both columns use the fallback")
    print(f"{'workload':<28}{'jit (s)':>12}{'fallback (s)':>14}{'speedup':>10}")
    for name, t_jit in res["jit"]["times"].items():
        t_py = res["fallback"]["times"][name]
        print(f"{name:<28}{t_jit:>12.5f}{t_py:>14.5f}{t_py / t_jit:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
