from pathlib import Path

import pytest

from latchconv.netlist import make_netlist, read_bench

DATA = Path(__file__).resolve().parents[1] / "src" / "latchconv" / "data"
CORPUS = sorted(DATA.glob("*.bench"))


def load(name):
    return read_bench(DATA / f"{name}.bench")


def chain(n, gates=0, pi_gates=None, name=None):
    """PI -> [gates BUFFs] -> DFF -> ... n DFFs in series; PO is the last DFF."""
    pi_gates = gates if pi_gates is None else pi_gates
    nodes, prev = [], "a"
    for s in range(n):
        for t in range(pi_gates if s == 0 else gates):
            g = f"b{s}_{t}"
            nodes.append((g, "BUFF", [prev]))
            prev = g
        q = f"q{s}"
        nodes.append((q, "DFF", [prev]))
        prev = q
    return make_netlist(name or f"chain{n}", nodes, ["a"], [prev])


@pytest.fixture(params=CORPUS, ids=[p.stem for p in CORPUS])
def corpus_netlist(request):
    return read_bench(request.param)
