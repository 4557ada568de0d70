"""Adjacency operator A(theta, c, sigma), its numeric symbol, and evaluation.

Matrices here are 0-based: entry (i-1, j-1) corresponds to the edge i <- j.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .dag import NonlinearDag, NumericError, check_theta


def relu(x):
    return np.maximum(x, 0.0)


def symbol(dag: NonlinearDag, theta, xi: float, absolute: bool = False) -> sp.csr_matrix:
    """Numeric N x N matrix with theta on Param slots, c on Fixed slots, xi on ReLU slots."""
    theta = check_theta(dag, theta)
    arr = dag.arrays
    data = np.where(arr.kind == 0, theta[np.maximum(arr.slot, 0)] if theta.size else 0.0,
                    np.where(arr.kind == 1, arr.value, float(xi)))
    if absolute:
        data = np.abs(data)
    m = sp.csr_matrix((data, (arr.dst, arr.src)), shape=(dag.n, dag.n))
    m.eliminate_zeros()
    return m


def indicator_symbols(dag: NonlinearDag):
    """The three 0/1 symbols whose entrywise L1,1 norms count Param, Fixed and ReLU edges."""
    arr = dag.arrays
    out = []
    for code in (0, 1, 2):
        mask = arr.kind == code
        out.append(sp.csr_matrix((np.ones(int(mask.sum())), (arr.dst[mask], arr.src[mask])),
                                 shape=(dag.n, dag.n)))
    return tuple(out)


def _operator_parts(dag: NonlinearDag, theta):
    arr = dag.arrays
    lin = arr.kind != 2
    data = np.where(arr.kind[lin] == 0, theta[np.maximum(arr.slot[lin], 0)] if theta.size else 0.0,
                    arr.value[lin])
    a_lin = sp.csr_matrix((data, (arr.dst[lin], arr.src[lin])), shape=(dag.n, dag.n))
    nl = ~lin
    a_nl = sp.csr_matrix((np.ones(int(nl.sum())), (arr.dst[nl], arr.src[nl])), shape=(dag.n, dag.n))
    return a_lin, a_nl


def apply_operator(dag: NonlinearDag, theta, z) -> np.ndarray:
    """One application of A(theta, sigma) to a state vector (or an (N, batch) stack)."""
    theta = check_theta(dag, theta)
    z = np.asarray(z, dtype=float)
    if z.shape[0] != dag.n:
        raise ValueError(f"state has length {z.shape[0]}, dag has N={dag.n}")
    a_lin, a_nl = _operator_parts(dag, theta)
    return a_lin @ z + a_nl @ relu(z)


def matrix_power_is_zero(sym, s: int) -> bool:
    """Exact test of sym**s == 0 using sparse products with explicit zeros dropped."""
    if s < 1:
        raise ValueError("s must be >= 1")
    m = sp.csr_matrix(sym, copy=True)
    m.eliminate_zeros()
    power = m
    for _ in range(s - 1):
        if power.nnz == 0:
            return True
        power = power @ m
        power.eliminate_zeros()
    return power.nnz == 0


def nilpotency_index(dag: NonlinearDag) -> int:
    """Smallest s with A^s = 0 for the all-ones symbol: one plus the longest path length."""
    return int(dag.depth.max(initial=0)) + 1


def io_vectors(dag: NonlinearDag):
    """(one_in, one_out, P0) for the input/output layout."""
    one_in = np.zeros(dag.n)
    one_in[: dag.d] = 1.0
    one_out = np.zeros(dag.n)
    one_out[-1] = 1.0
    return one_in, one_out, sp.diags(one_in).tocsr()


class FixedPoint(NamedTuple):
    output: float
    z: np.ndarray
    steps: int


def forward_fixed_point(dag: NonlinearDag, theta, x) -> FixedPoint:
    """Iterate z_s = z_0 + A(theta, sigma) z_{s-1} until two iterates are identical.

    ``steps`` counts operator applications including the one that confirmed
    stationarity, so it never exceeds the nilpotency index.
    """
    dag.require_valid()
    theta = check_theta(dag, theta)
    x = np.asarray(x, dtype=float)
    if x.shape != (dag.d,):
        raise ValueError(f"input has shape {x.shape}, expected ({dag.d},)")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite input")
    a_lin, a_nl = _operator_parts(dag, theta)
    z0 = np.zeros(dag.n)
    z0[: dag.d] = x
    z = z0
    bound = nilpotency_index(dag)
    for step in range(1, bound + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = z0 + a_lin @ z + a_nl @ relu(z)
        if not np.all(np.isfinite(nxt)):
            raise NumericError(f"non-finite state after {step} iterations")
        if np.array_equal(nxt, z):
            return FixedPoint(float(nxt[-1]), nxt, step)
        z = nxt
    raise AssertionError("fixed-point iteration did not stabilise within the nilpotency index")


def iterates(dag: NonlinearDag, theta, x, count: int) -> list[np.ndarray]:
    """The first ``count`` + 1 iterates z_0 .. z_count (no early stop)."""
    theta = check_theta(dag, theta)
    a_lin, a_nl = _operator_parts(dag, theta)
    z0 = np.zeros(dag.n)
    z0[: dag.d] = np.asarray(x, dtype=float)
    out = [z0]
    for _ in range(count):
        z = out[-1]
        out.append(z0 + a_lin @ z + a_nl @ relu(z))
    return out


def evaluate(dag: NonlinearDag, theta, xs, states: bool = False):
    """Batched forward pass by sweeping depth levels.

    ``xs`` has shape (batch, d) or (d,). Returns the outputs, and with
    ``states`` also the full (N, batch) node-value matrix.
    """
    theta = check_theta(dag, theta)
    xs = np.asarray(xs, dtype=float)
    single = xs.ndim == 1
    xs = np.atleast_2d(xs)
    if xs.shape[1] != dag.d:
        raise ValueError(f"inputs have {xs.shape[1]} columns, dag has d={dag.d}")
    h = np.zeros((dag.n, xs.shape[0]))
    h[: dag.d] = xs.T
    with np.errstate(over="ignore", invalid="ignore"):
        for idx, lin, nl in dag.sweep.blocks(theta):
            h[idx] = lin @ h + nl @ relu(h)
    if not np.all(np.isfinite(h[-1])):
        raise NumericError("non-finite network output")
    out = h[-1].copy()
    if single:
        out = float(out[0])
    return (out, h) if states else out
