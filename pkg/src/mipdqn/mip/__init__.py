"""Mixed-integer programming layer: model container, ReLU encoder, backends."""

from .backends import EnumerationBackend, HighsBackend, get_backend, solve
from .encoder import (UnitBounds, encode_network, fix_inputs, linear_bound, propagate_bounds,
                      set_objective_max_output)
from .lpformat import export_lp, read_lp, to_lp_string
from .model import INFEASIBLE, OPTIMAL, TIME_LIMIT, MipModel, SolveResult
from .reference import reference_solve
from .search import maximize_network

__all__ = [
    "EnumerationBackend", "HighsBackend", "get_backend", "solve",
    "UnitBounds", "encode_network", "fix_inputs", "linear_bound", "propagate_bounds", "set_objective_max_output",
    "export_lp", "read_lp", "to_lp_string",
    "INFEASIBLE", "OPTIMAL", "TIME_LIMIT", "MipModel", "SolveResult",
    "reference_solve", "maximize_network",
]
