"""Hot loops: cycle simulation and exhaustive phase enumeration.

Each kernel is plain Python over numpy arrays.  When numba is importable and
``LATCHCONV_NO_JIT`` is unset (or "0"), the kernels are compiled with
``numba.njit``; otherwise the same source runs interpreted.  The
uncompiled function is always reachable as ``kernel.py_func``.
"""

import os

import numpy as np

JIT_DISABLED = os.environ.get("LATCHCONV_NO_JIT", "0") not in ("", "0")

HAVE_NUMBA = False
if not JIT_DISABLED:
    try:
        import numba

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover
        pass


def _jit(fn):
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    fn.py_func = fn
    return fn


# 3-valued logic codes
ZERO = 0
ONE = 1
X = 2

OP_AND, OP_OR, OP_NAND, OP_NOR, OP_XOR, OP_XNOR, OP_NOT, OP_BUFF = range(8)
OPCODES = {"AND": OP_AND, "OR": OP_OR, "NAND": OP_NAND, "NOR": OP_NOR,
           "XOR": OP_XOR, "XNOR": OP_XNOR, "NOT": OP_NOT, "BUFF": OP_BUFF}


@_jit
def _eval_gate(op, vals, in_idx, lo, hi):
    if op == 0 or op == 2:  # AND / NAND
        r = 1
        for k in range(lo, hi):
            v = vals[in_idx[k]]
            if v == 0:
                r = 0
                break
            if v == 2:
                r = 2
        if op == 2 and r != 2:
            r = 1 - r
        return r
    if op == 1 or op == 3:  # OR / NOR
        r = 0
        for k in range(lo, hi):
            v = vals[in_idx[k]]
            if v == 1:
                r = 1
                break
            if v == 2:
                r = 2
        if op == 3 and r != 2:
            r = 1 - r
        return r
    if op == 4 or op == 5:  # XOR / XNOR
        r = 0
        for k in range(lo, hi):
            v = vals[in_idx[k]]
            if v == 2:
                return 2
            r ^= v
        if op == 5:
            r = 1 - r
        return r
    v = vals[in_idx[lo]]
    if op == 6 and v != 2:
        return 1 - v
    return v


@_jit
def _settle(ops, gate_out, in_ptr, in_idx, vals, toggles):
    for g in range(ops.shape[0]):
        r = _eval_gate(ops[g], vals, in_idx, in_ptr[g], in_ptr[g + 1])
        o = gate_out[g]
        old = vals[o]
        if old != r:
            if old != 2 and r != 2:
                toggles[o] += 1
            vals[o] = r


@_jit
def simulate_cycles(ops, gate_out, in_ptr, in_idx, pi_net, pi_vals,
                    seq_net, seq_d, seq_en, seq_group, n_groups, po_group,
                    po_net, init, n_nets, hold_group):
    """Run ``pi_vals.shape[0]`` cycles.

    Per cycle: PIs applied, settle, then for each capture group in order:
    (POs sampled when the group index equals ``po_group``), all members of
    the group capture simultaneously, settle.  Group ``hold_group`` keeps
    its reset value through cycle 0 (-1 disables this).
    Returns (states[cycles, n_seq], pos[cycles, n_po], toggles[n_nets]).
    """
    n_cyc = pi_vals.shape[0]
    n_seq = seq_net.shape[0]
    n_po = po_net.shape[0]
    vals = np.full(n_nets, 2, np.int8)
    for s in range(n_seq):
        vals[seq_net[s]] = init
    toggles = np.zeros(n_nets, np.int64)
    states = np.empty((n_cyc, n_seq), np.int8)
    pos = np.empty((n_cyc, n_po), np.int8)
    nxt = np.empty(n_seq, np.int8)
    for c in range(n_cyc):
        for i in range(pi_net.shape[0]):
            o = pi_net[i]
            v = pi_vals[c, i]
            if vals[o] != v and vals[o] != 2:
                toggles[o] += 1
            vals[o] = v
        _settle(ops, gate_out, in_ptr, in_idx, vals, toggles)
        for g in range(n_groups):
            if g == po_group:
                for p in range(n_po):
                    pos[c, p] = vals[po_net[p]]
            if c == 0 and g == hold_group:
                continue
            for s in range(n_seq):
                if seq_group[s] != g:
                    continue
                old = vals[seq_net[s]]
                d = vals[seq_d[s]]
                if seq_en[s] < 0:
                    nxt[s] = d
                else:
                    en = vals[seq_en[s]]
                    if en == 1:
                        nxt[s] = d
                    elif en == 0 or d == old:
                        nxt[s] = old
                    else:
                        nxt[s] = 2
            for s in range(n_seq):
                if seq_group[s] != g:
                    continue
                o = seq_net[s]
                if vals[o] != nxt[s]:
                    if vals[o] != 2 and nxt[s] != 2:
                        toggles[o] += 1
                    vals[o] = nxt[s]
            _settle(ops, gate_out, in_ptr, in_idx, vals, toggles)
        if po_group >= n_groups:
            for p in range(n_po):
                pos[c, p] = vals[po_net[p]]
        for s in range(n_seq):
            states[c, s] = vals[seq_net[s]]
    return states, pos, toggles


@_jit
def enumerate_phase_costs(n, fo_mask, pi_mask):
    """Exhaustive K enumeration for the phase ILP.

    Node ``i`` maps to bit ``n-1-i`` so ascending masks run in lexicographic
    order of the K vector.  Returns (best_cost, best_mask); ties keep the
    smallest mask.
    """
    full = (1 << n) - 1
    best = n + pi_mask.shape[0] + 1
    best_mask = 0
    for k in range(full + 1):
        cost = 0
        for i in range(n):
            bit = 1 << (n - 1 - i)
            if k & bit == 0:
                cost += 1
            elif fo_mask[i] & k != 0:
                cost += 1
        for p in range(pi_mask.shape[0]):
            if pi_mask[p] & k != 0:
                cost += 1
        if cost < best:
            best = cost
            best_mask = k
    return best, best_mask


@_jit
def xorshift_bits(seed, n):
    """``n`` bits from xorshift64* (Vigna 2016): shifts 12/25/27, multiplier
    0x2545F4914F6CDD1D, one bit (the top one) per draw.  A zero seed is
    replaced by 0x9E3779B97F4A7C15 because the generator has no zero state."""
    x = np.uint64(seed)
    if x == np.uint64(0):
        x = np.uint64(0x9E3779B97F4A7C15)
    mult = np.uint64(0x2545F4914F6CDD1D)
    out = np.empty(n, np.int8)
    for i in range(n):
        x ^= x >> np.uint64(12)
        x ^= x << np.uint64(25)
        x ^= x >> np.uint64(27)
        out[i] = np.int8((x * mult) >> np.uint64(63))
    return out


if not HAVE_NUMBA:
    _xorshift_py = xorshift_bits

    def xorshift_bits(seed, n):  # noqa: F811  wrapping multiply is intended
        with np.errstate(over="ignore"):
            return _xorshift_py(seed, n)

    xorshift_bits.py_func = _xorshift_py
