"""Weighted path norm: sum over input-to-output paths of 3**p * prod |w|.

Two independent routes are provided. :func:`path_norm_neumann` sums
1_out^T A^s(|theta|, 3) 1_in over the (finite) power series;
:func:`path_norm_enumerate` walks every path explicitly and is only usable on
small graphs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjacency import symbol
from .dag import FIXED, NONLINEAR, PARAM, NonlinearDag, check_theta

# weight of a ReLU edge in the path norm
RELU_FACTOR = 3.0


class PathBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class PathNormReport:
    value: float
    method: str  # "neumann" or "enumeration"
    paths_counted: int | None = None
    terms: int | None = None


@dataclass(frozen=True)
class EdgeCounts:
    n_para: int
    n_fix: int
    n_non: int

    @property
    def total(self) -> int:
        return self.n_para + self.n_fix + self.n_non


def path_norm_neumann(dag: NonlinearDag, theta) -> PathNormReport:
    dag.require_valid()
    a = symbol(dag, theta, RELU_FACTOR, absolute=True)
    v = np.zeros(dag.n)
    v[: dag.d] = 1.0
    total = v[-1]
    terms = 1 if total else 0
    while True:
        v = a @ v
        if not v.any():
            break
        if v[-1]:
            total += v[-1]
            terms += 1
    return PathNormReport(float(total), "neumann", terms=terms)


def path_norm_enumerate(dag: NonlinearDag, theta, max_paths: int = 10**6) -> PathNormReport:
    """Depth-first enumeration of all input-to-output paths.

    Raises :class:`PathBudgetExceeded` once more than ``max_paths`` complete
    paths have been seen; use the Neumann route for large graphs.
    """
    dag.require_valid()
    theta = check_theta(dag, theta)
    slot = {pos: k for k, pos in enumerate(dag.param_order)}
    out_edges = dag.outgoing
    total = 0.0
    paths = 0
    for s in dag.sources:
        # stack of (node, |weight product|, relu count)
        stack = [(s, 1.0, 0)]
        while stack:
            node, prod, p = stack.pop()
            if node == dag.sink:
                paths += 1
                if paths > max_paths:
                    raise PathBudgetExceeded(f"more than {max_paths} paths; use the Neumann method")
                total += RELU_FACTOR**p * prod
                continue
            for e in out_edges[node]:
                if e.kind is PARAM:
                    stack.append((e.dst, prod * abs(theta[slot[(e.dst, e.src)]]), p))
                elif e.kind is FIXED:
                    stack.append((e.dst, prod * abs(e.weight), p))
                else:
                    stack.append((e.dst, prod, p + 1))
    return PathNormReport(float(total), "enumeration", paths_counted=paths)


def path_norm(dag: NonlinearDag, theta) -> float:
    return path_norm_neumann(dag, theta).value


def node_path_norms(dag: NonlinearDag, theta) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward path sums per node (0-based arrays).

    ``fwd[i]`` is the weighted path norm of all input-to-node-i paths (1 on
    inputs); ``bwd[i]`` the same for node-i-to-output paths (1 on the sink).
    """
    dag.require_valid()
    theta = check_theta(dag, theta)
    blocks = list(dag.sweep.blocks(theta, absolute=True, xi=RELU_FACTOR))
    fwd = np.zeros(dag.n)
    fwd[: dag.d] = 1.0
    for idx, lin, nl in blocks:
        fwd[idx] = lin @ fwd + nl @ fwd
    bwd = np.zeros(dag.n)
    bwd[-1] = 1.0
    # successors sit on deeper levels, so bwd[idx] is final when its level is reached
    for idx, lin, nl in reversed(blocks):
        g = bwd[idx]
        bwd += lin.T @ g + nl.T @ g
    return fwd, bwd


def edge_counts(dag: NonlinearDag) -> EdgeCounts:
    dag.require_valid()
    kinds = [e.kind for e in dag.edges]
    return EdgeCounts(kinds.count(PARAM), kinds.count(FIXED), kinds.count(NONLINEAR))
