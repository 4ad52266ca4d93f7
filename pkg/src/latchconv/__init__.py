"""Flip-flop to 3-phase latch conversion with p2 retiming."""

from .netlist import Netlist, NetlistError, make_netlist, parse_bench, read_bench, write_bench
from .seqgraph import SeqGraph, extract_seq_graph
from .phase_ilp import PhaseAssignment, build_ilp, solve_branch_bound
from .transform import to_master_slave, to_three_phase

__version__ = "0.1.0"

__all__ = [
    "Netlist", "NetlistError", "make_netlist", "parse_bench", "read_bench", "write_bench",
    "SeqGraph", "extract_seq_graph", "PhaseAssignment", "build_ilp", "solve_branch_bound",
    "to_master_slave", "to_three_phase",
]
