"""Nonlinear weighted DAG data model.

Nodes are numbered 1..N. Nodes 1..d are the inputs (sources), node N is the
output (sink). Every edge points from a smaller index to a larger one, so the
adjacency matrix is strictly lower triangular.

Trainable weights are not stored on the graph: they live in a flat parameter
vector ``theta`` whose slot order is :func:`canonical_param_order`. Fixed
weights are stored on their edges.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class InvalidDagError(ValueError):
    pass


class NumericError(ArithmeticError):
    """A non-finite value showed up during evaluation."""


class EdgeKind(enum.Enum):
    PARAM = "param"
    FIXED = "fixed"
    NONLINEAR = "nonlinear"


PARAM = EdgeKind.PARAM
FIXED = EdgeKind.FIXED
NONLINEAR = EdgeKind.NONLINEAR


@dataclass(frozen=True)
class Edge:
    dst: int
    src: int
    kind: EdgeKind
    weight: float | None = None

    def __post_init__(self):
        if not isinstance(self.kind, EdgeKind):
            object.__setattr__(self, "kind", EdgeKind(self.kind))


def _edge_key(e: Edge):
    return (e.dst, e.src, e.kind.value)


@dataclass(frozen=True)
class EdgeArrays:
    """Column view of the edge list, sorted by (dst, src).

    ``slot`` is the parameter slot of Param edges and -1 otherwise; ``value``
    holds the fixed weight of Fixed edges (0 elsewhere).
    """

    dst: np.ndarray
    src: np.ndarray
    kind: np.ndarray  # 0 param, 1 fixed, 2 nonlinear
    slot: np.ndarray
    value: np.ndarray


KIND_CODE = {PARAM: 0, FIXED: 1, NONLINEAR: 2}


@dataclass(frozen=True)
class NonlinearDag:
    n: int
    d: int
    edges: tuple[Edge, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=_edge_key)))

    @property
    def sources(self) -> range:
        return range(1, self.d + 1)

    @property
    def sink(self) -> int:
        return self.n

    @cached_property
    def violations(self) -> tuple[str, ...]:
        return tuple(_violations(self))

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def require_valid(self) -> None:
        if self.violations:
            raise InvalidDagError("; ".join(self.violations))

    @cached_property
    def param_order(self) -> tuple[tuple[int, int], ...]:
        return tuple((e.dst, e.src) for e in self.edges if e.kind is PARAM)

    @property
    def n_params(self) -> int:
        return len(self.param_order)

    @cached_property
    def incoming(self) -> dict[int, tuple[Edge, ...]]:
        groups: dict[int, list[Edge]] = {i: [] for i in range(1, self.n + 1)}
        for e in self.edges:
            groups.setdefault(e.dst, []).append(e)
        return {i: tuple(es) for i, es in groups.items()}

    @cached_property
    def outgoing(self) -> dict[int, tuple[Edge, ...]]:
        groups: dict[int, list[Edge]] = {i: [] for i in range(1, self.n + 1)}
        for e in self.edges:
            groups.setdefault(e.src, []).append(e)
        return {i: tuple(es) for i, es in groups.items()}

    @cached_property
    def arrays(self) -> EdgeArrays:
        self.require_valid()
        m = len(self.edges)
        dst = np.fromiter((e.dst - 1 for e in self.edges), dtype=np.int64, count=m)
        src = np.fromiter((e.src - 1 for e in self.edges), dtype=np.int64, count=m)
        kind = np.fromiter((KIND_CODE[e.kind] for e in self.edges), dtype=np.int8, count=m)
        slot = np.full(m, -1, dtype=np.int64)
        slot[kind == 0] = np.arange(int(np.sum(kind == 0)))
        value = np.array([e.weight if e.kind is FIXED else 0.0 for e in self.edges], dtype=float)
        return EdgeArrays(dst, src, kind, slot, value)

    @cached_property
    def depth(self) -> np.ndarray:
        """Longest path length (in edges) ending at each node, 0-based array."""
        self.require_valid()
        depth = np.zeros(self.n, dtype=np.int64)
        for i in range(1, self.n + 1):
            for e in self.incoming[i]:
                depth[i - 1] = max(depth[i - 1], depth[e.src - 1] + 1)
        return depth

    @cached_property
    def levels(self) -> tuple[np.ndarray, ...]:
        """Non-source node groups (0-based) by depth; each level depends only on earlier ones."""
        depth = self.depth
        out = []
        for k in range(1, int(depth.max(initial=0)) + 1):
            idx = np.flatnonzero(depth == k)
            if idx.size:
                out.append(idx)
        return tuple(out)

    @cached_property
    def sweep(self) -> "SweepPlan":
        return SweepPlan(self)


def _violations(dag: NonlinearDag) -> list[str]:
    out: list[str] = []
    if dag.d < 1:
        out.append(f"size: input dimension d={dag.d} must be >= 1")
    if dag.n < dag.d + 1:
        out.append(f"size: node count N={dag.n} must be >= d+1={dag.d + 1}")
    if out:
        return out

    seen: dict[tuple[int, int], Edge] = {}
    for e in dag.edges:
        tag = f"edge {e.dst}<-{e.src} ({e.kind.value})"
        if not (1 <= e.src <= dag.n and 1 <= e.dst <= dag.n):
            out.append(f"range: {tag} references a node outside 1..{dag.n}")
            continue
        if e.src >= e.dst:
            out.append(f"ordering: {tag} has src >= dst")
        if e.dst <= dag.d:
            out.append(f"source: {tag} enters input node {e.dst}")
        if (e.dst, e.src) in seen:
            out.append(f"duplicate: {tag} repeats position ({e.dst},{e.src})")
        else:
            seen[(e.dst, e.src)] = e
        if e.kind is FIXED:
            if e.weight is None or not np.isfinite(e.weight):
                out.append(f"weight: {tag} needs a finite fixed weight")
        elif e.weight is not None:
            out.append(f"weight: {tag} must not carry a stored weight")
    if out or not dag.edges:
        return out

    reached = set(dag.sources)
    for e in dag.edges:  # sorted by dst, so one forward pass suffices
        if e.src in reached:
            reached.add(e.dst)
    if dag.sink not in reached:
        out.append(f"reachability: sink {dag.sink} is not reachable from any input")
    return out


def validate(dag: NonlinearDag) -> list[str]:
    return list(dag.violations)


def canonical_param_order(dag: NonlinearDag) -> list[tuple[int, int]]:
    dag.require_valid()
    return list(dag.param_order)


def topological_nodes(dag: NonlinearDag) -> list[int]:
    dag.require_valid()
    return list(range(1, dag.n + 1))


def check_theta(dag: NonlinearDag, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (dag.n_params,):
        raise ValueError(f"theta has shape {theta.shape}, dag has {dag.n_params} parameter slots")
    return theta


def param_dict(dag: NonlinearDag, theta) -> dict[tuple[int, int], float]:
    theta = check_theta(dag, theta)
    return {pos: float(v) for pos, v in zip(dag.param_order, theta)}


def param_vector(dag: NonlinearDag, weights: dict[tuple[int, int], float]) -> np.ndarray:
    if set(weights) != set(dag.param_order):
        raise ValueError("weights must cover exactly the Param edges of the dag")
    return np.array([weights[pos] for pos in dag.param_order], dtype=float)


class SweepPlan:
    """Per-level sparse blocks used for batched forward and reverse sweeps.

    Level ``k`` gets two CSR matrices of shape (len(level), N): the linear part
    (Param and Fixed edges) and the nonlinear part (ReLU edges, all ones). The
    CSR structure is fixed; only the data array depends on theta.
    """

    def __init__(self, dag: NonlinearDag):
        arr = dag.arrays
        self.n = dag.n
        self.d = dag.d
        self.levels = dag.levels
        local = np.empty(dag.n, dtype=np.int64)
        self._lin = []
        self._nl = []
        for idx in self.levels:
            local[idx] = np.arange(idx.size)
            in_level = np.isin(arr.dst, idx)
            lin = in_level & (arr.kind != 2)
            nl = in_level & (arr.kind == 2)
            self._lin.append(self._structure(local[arr.dst[lin]], arr.src[lin], idx.size,
                                             arr.slot[lin], arr.value[lin]))
            self._nl.append(self._structure(local[arr.dst[nl]], arr.src[nl], idx.size,
                                            arr.slot[nl], np.ones(int(nl.sum()))))

    def _structure(self, rows, cols, nrows, slot, value):
        # Edges arrive sorted by (dst, src), which is CSR order already.
        indptr = np.zeros(nrows + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, cols.astype(np.int64), slot, value, (nrows, self.n)

    @staticmethod
    def _matrix(struct, theta, absolute=False, scale=1.0):
        indptr, cols, slot, value, shape = struct
        data = np.where(slot >= 0, theta[np.maximum(slot, 0)] if theta.size else 0.0, value)
        if absolute:
            data = np.abs(data)
        if scale != 1.0:
            data = data * scale
        return sp.csr_matrix((data, cols, indptr), shape=shape)

    def blocks(self, theta: np.ndarray, absolute: bool = False, xi: float = 1.0):
        """Yield (level_nodes, linear_block, relu_block) in topological order.

        With ``absolute`` the linear weights are replaced by their magnitudes;
        ``xi`` scales the ReLU block (used for symbol sweeps).
        """
        for idx, lin, nl in zip(self.levels, self._lin, self._nl):
            yield idx, self._matrix(lin, theta, absolute), self._matrix(nl, theta, scale=xi)


def random_dag(rng: np.random.Generator, n_max: int = 12, d_max: int = 3,
               p_edge: float = 0.4, kinds=(PARAM, FIXED, NONLINEAR),
               input_assumption: bool = False) -> tuple[NonlinearDag, np.ndarray]:
    """Draw a valid dag with mixed edge kinds and uniform(-1, 1) weights.

    Every non-input node receives at least one edge, which makes every node
    reachable from an input. With ``input_assumption`` edges leaving inputs are
    always Param.
    """
    d = int(rng.integers(1, d_max + 1))
    n = int(rng.integers(d + 1, max(n_max, d + 1) + 1))
    edges = []
    for i in range(d + 1, n + 1):
        chosen = [j for j in range(1, i) if rng.random() < p_edge]
        if not chosen:
            chosen = [int(rng.integers(1, i))]
        for j in chosen:
            kind = PARAM if (input_assumption and j <= d) else kinds[int(rng.integers(len(kinds)))]
            w = float(rng.uniform(-1.0, 1.0)) if kind is FIXED else None
            edges.append(Edge(i, j, kind, w))
    dag = NonlinearDag(n, d, tuple(edges))
    theta = rng.uniform(-1.0, 1.0, size=dag.n_params)
    return dag, theta
