"""Tensor-network simulation of random quantum circuits with stem-aware planning."""

from .circuit import (
    Circuit,
    Gate,
    Layout,
    circuit_to_network,
    generate_random_circuit,
    grid_layout,
    parse_circuit,
    serialize_circuit,
    sycamore_layout,
)
from .network import (
    TensorNetwork,
    contract_all,
    contract_pair,
    feynman_value,
    simplify,
    slice_network,
)
from .planner import PlannerParams, build_tree_by_decomposition, dynamic_slice, local_optimize, plan
from .runtime import BranchCache, compile_scheme, run_scheme, run_subtask
from .sampler import frugal_sample, porter_thomas_check, xeb
from .tree import (
    ContractionScheme,
    ContractionTree,
    extract_stem,
    parse_scheme,
    scheme_costs,
    serialize_scheme,
    tree_costs,
)

__version__ = "0.1.0"
