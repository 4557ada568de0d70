"""Plain-text interchange format for weighted DAGs.

::

    nwdag v1 N=5 d=2
    3 1 param 0.5
    3 2 param -1
    4 3 nonlinear
    5 4 param 2

One edge per line as ``dst src kind [weight]``. Param lines carry the current
theta value, Fixed lines the fixed weight, Nonlinear lines nothing. Weights are
written with 17 significant digits so a save/load cycle is bit-exact. Blank
lines and ``#`` comments are ignored.
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .dag import FIXED, NONLINEAR, PARAM, Edge, EdgeKind, NonlinearDag

HEADER = re.compile(r"^nwdag\s+v1\s+N=(\d+)\s+d=(\d+)\s*$")


class DagFormatError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def format_weight(w: float) -> str:
    return format(float(w), ".17g")


def dumps(dag: NonlinearDag, theta=None) -> str:
    """Serialize ``dag``; Param weights come from ``theta`` (zeros if omitted)."""
    theta = np.zeros(dag.n_params) if theta is None else np.asarray(theta, dtype=float)
    if theta.shape != (dag.n_params,):
        raise ValueError("theta length does not match the dag's Param edges")
    values = iter(theta)
    lines = [f"nwdag v1 N={dag.n} d={dag.d}"]
    for e in dag.edges:
        if e.kind is PARAM:
            lines.append(f"{e.dst} {e.src} param {format_weight(next(values))}")
        elif e.kind is FIXED:
            lines.append(f"{e.dst} {e.src} fixed {format_weight(e.weight)}")
        else:
            lines.append(f"{e.dst} {e.src} nonlinear")
    return "\n".join(lines) + "\n"


def loads(text: str) -> tuple[NonlinearDag, np.ndarray]:
    """Parse the format. Structural problems (e.g. src >= dst) are left for
    :func:`nwdag.dag.validate`; only syntax errors raise."""
    header = None
    edges: list[Edge] = []
    param_vals: list[tuple[tuple, float]] = []
    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            m = HEADER.match(line)
            if not m:
                raise DagFormatError(lineno, "expected header 'nwdag v1 N=<N> d=<d>'")
            header = int(m.group(1)), int(m.group(2))
            continue
        tok = line.split()
        if len(tok) not in (3, 4):
            raise DagFormatError(lineno, f"expected 'dst src kind [weight]', got {len(tok)} fields")
        try:
            dst, src = int(tok[0]), int(tok[1])
        except ValueError:
            raise DagFormatError(lineno, "dst and src must be integers") from None
        try:
            kind = EdgeKind(tok[2])
        except ValueError:
            raise DagFormatError(lineno, f"unknown edge kind {tok[2]!r}") from None
        weight = None
        if kind is NONLINEAR:
            if len(tok) == 4:
                raise DagFormatError(lineno, "nonlinear edges take no weight")
        else:
            if len(tok) != 4:
                raise DagFormatError(lineno, f"{kind.value} edges need a weight")
            try:
                weight = float(tok[3])
            except ValueError:
                raise DagFormatError(lineno, f"bad weight {tok[3]!r}") from None
        if kind is PARAM:
            param_vals.append(((dst, src, kind.value), weight))
            edges.append(Edge(dst, src, kind))
        else:
            edges.append(Edge(dst, src, kind, weight))
    if header is None:
        raise DagFormatError(lineno + 1, "missing header")
    dag = NonlinearDag(header[0], header[1], tuple(edges))
    # same sort key as NonlinearDag so slots line up with dag.param_order
    param_vals.sort(key=lambda kv: kv[0])
    theta = np.array([w for _, w in param_vals], dtype=float)
    return dag, theta


def save_dag(path, dag: NonlinearDag, theta=None) -> None:
    Path(path).write_text(dumps(dag, theta))


def load_dag(path) -> tuple[NonlinearDag, np.ndarray]:
    return loads(Path(path).read_text())
