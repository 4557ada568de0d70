"""Feedforward networks as nonlinear weighted DAGs: evaluation, weighted path
norms, architecture builders, approximation and generalization tooling."""
from .adjacency import evaluate, forward_fixed_point, nilpotency_index, symbol
from .dag import Edge, EdgeKind, InvalidDagError, NonlinearDag, NumericError, validate
from .io import load_dag, save_dag
from .pathnorm import edge_counts, path_norm, path_norm_enumerate, path_norm_neumann

__version__ = "0.1.0"

__all__ = [
    "Edge", "EdgeKind", "InvalidDagError", "NonlinearDag", "NumericError", "validate",
    "evaluate", "forward_fixed_point", "nilpotency_index", "symbol",
    "load_dag", "save_dag",
    "edge_counts", "path_norm", "path_norm_enumerate", "path_norm_neumann",
]
