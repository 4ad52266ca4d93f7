import os
import subprocess
import sys
import textwrap

from latchconv import _kernels

DIGEST = textwrap.dedent("""
    import hashlib
    from latchconv import _kernels
    from latchconv.netlist import PipelineSpec, generate_pipeline
    from latchconv.phase_ilp import brute_force_assign
    from latchconv.seqgraph import extract_seq_graph
    from latchconv.sim import Stimulus, simulate
    from latchconv.transform import to_master_slave
    h = hashlib.sha256()
    h.update(_kernels.xorshift_bits(7, 4096).tobytes())
    nl = generate_pipeline(PipelineSpec(3, 3, 2, 0.3, 4))
    for d in (nl, to_master_slave(nl)):
        t = simulate(d, Stimulus(9, 300))
        h.update(t.states.tobytes() + t.pos.tobytes() + t.toggles.tobytes())
    a = brute_force_assign(extract_seq_graph(nl))
    h.update(repr(sorted(a.K.items())).encode())
    print(_kernels.HAVE_NUMBA, h.hexdigest())
""")


def _digest(no_jit):
    env = dict(os.environ, LATCHCONV_NO_JIT="1" if no_jit else "0")
    out = subprocess.run([sys.executable, "-W", "error::RuntimeWarning", "-c", DIGEST], env=env,
                         capture_output=True, text=True, check=True).stdout.split()
    return out[0] == "True", out[1]


def test_fallback_matches_jit():
    _, a = _digest(False)
    fb, b = _digest(True)
    assert not fb
    assert a == b


def test_flag_disables_numba():
    assert _kernels.JIT_DISABLED == (os.environ.get("LATCHCONV_NO_JIT", "0") not in ("", "0"))
