"""Architecture constructors, structural assumption checks, padding and sink decomposition.

Every builder lays nodes out block by block in the order the network computes
them (inputs first, output last), so the resulting adjacency matrix has the
familiar block lower-triangular picture:

* two-layer: inputs | W x | relu | a
* fully connected: inputs | W1 | relu | W2 | relu | ... | u
* block chain (ResNet, DenseNet and the shortcut form): inputs | V x |
  then per block ``W h | relu | S h + U g`` | u
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .adjacency import evaluate, relu
from .dag import FIXED, NONLINEAR, PARAM, Edge, NonlinearDag, check_theta, param_vector
from .pathnorm import node_path_norms

ARCHS = ("two_layer", "fc", "resnet", "densenet")


# --------------------------------------------------------------------------
# parameter containers and the direct layer recursions


def _arr(x, shape, name):
    x = np.asarray(x, dtype=float)
    if x.shape != shape:
        raise ValueError(f"{name} has shape {x.shape}, expected {shape}")
    return x


@dataclass
class TwoLayerParams:
    W: np.ndarray  # (m, d)
    a: np.ndarray  # (m,)
    arch = "two_layer"

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.a = _arr(self.a, (self.W.shape[0],), "a")

    @property
    def dims(self):
        return self.W.shape[1], self.W.shape[0]

    @classmethod
    def random(cls, rng, d, m, scale=1.0):
        return cls(rng.uniform(-scale, scale, (m, d)), rng.uniform(-scale, scale, m))

    def forward(self, xs):
        return relu(np.atleast_2d(xs) @ self.W.T) @ self.a


@dataclass
class FCParams:
    Ws: list  # W^[l] has shape (m_l, m_{l-1})
    u: np.ndarray
    arch = "fc"

    def __post_init__(self):
        self.Ws = [np.atleast_2d(np.asarray(w, dtype=float)) for w in self.Ws]
        for prev, w in zip(self.Ws, self.Ws[1:]):
            if w.shape[1] != prev.shape[0]:
                raise ValueError("consecutive FC weight shapes do not chain")
        self.u = _arr(self.u, (self.Ws[-1].shape[0],), "u")

    @property
    def dims(self):
        return (self.Ws[0].shape[1],) + tuple(w.shape[0] for w in self.Ws)

    @classmethod
    def random(cls, rng, dims, scale=1.0):
        Ws = [rng.uniform(-scale, scale, (dims[i + 1], dims[i])) for i in range(len(dims) - 1)]
        return cls(Ws, rng.uniform(-scale, scale, dims[-1]))

    def forward(self, xs):
        h = np.atleast_2d(xs).T
        for w in self.Ws:
            h = relu(w @ h)
        return self.u @ h


@dataclass
class ResNetParams:
    V: np.ndarray  # (D, d)
    Ws: list  # (m, D) each
    Us: list  # (D, m) each
    u: np.ndarray  # (D,)
    arch = "resnet"

    def __post_init__(self):
        self.V = np.atleast_2d(np.asarray(self.V, dtype=float))
        D = self.V.shape[0]
        if len(self.Ws) != len(self.Us) or not self.Ws:
            raise ValueError("ResNet needs L >= 1 matching W and U blocks")
        m = np.atleast_2d(self.Ws[0]).shape[0]
        self.Ws = [_arr(w, (m, D), "W") for w in self.Ws]
        self.Us = [_arr(U, (D, m), "U") for U in self.Us]
        self.u = _arr(self.u, (D,), "u")

    @property
    def dims(self):
        D, d = self.V.shape
        return d, D, self.Ws[0].shape[0], len(self.Ws)

    @classmethod
    def random(cls, rng, d, D, m, L, scale=1.0):
        return cls(rng.uniform(-scale, scale, (D, d)),
                   [rng.uniform(-scale, scale, (m, D)) for _ in range(L)],
                   [rng.uniform(-scale, scale, (D, m)) for _ in range(L)],
                   rng.uniform(-scale, scale, D))

    def forward(self, xs):
        h = self.V @ np.atleast_2d(xs).T
        for W, U in zip(self.Ws, self.Us):
            h = h + U @ relu(W @ h)
        return self.u @ h


@dataclass
class DenseNetParams:
    V: np.ndarray  # (k0, d)
    Ws: list  # W^[l]: (l m, k0 + (l-1) k)
    Us: list  # U^[l]: (k, l m)
    u: np.ndarray  # (k0 + L k,)
    arch = "densenet"

    def __post_init__(self):
        self.V = np.atleast_2d(np.asarray(self.V, dtype=float))
        k0 = self.V.shape[0]
        L = len(self.Ws)
        if L == 0 or len(self.Us) != L:
            raise ValueError("DenseNet needs L >= 1 matching W and U blocks")
        k = np.atleast_2d(self.Us[0]).shape[0]
        m = np.atleast_2d(self.Ws[0]).shape[0]
        self.Ws = [_arr(w, (l * m, k0 + (l - 1) * k), f"W[{l}]") for l, w in enumerate(self.Ws, 1)]
        self.Us = [_arr(U, (k, l * m), f"U[{l}]") for l, U in enumerate(self.Us, 1)]
        self.u = _arr(self.u, (k0 + L * k,), "u")

    @property
    def dims(self):
        k0, d = self.V.shape
        return d, k0, self.Us[0].shape[0], self.Ws[0].shape[0], len(self.Ws)

    @classmethod
    def random(cls, rng, d, k0, k, m, L, scale=1.0):
        return cls(rng.uniform(-scale, scale, (k0, d)),
                   [rng.uniform(-scale, scale, (l * m, k0 + (l - 1) * k)) for l in range(1, L + 1)],
                   [rng.uniform(-scale, scale, (k, l * m)) for l in range(1, L + 1)],
                   rng.uniform(-scale, scale, k0 + L * k))

    def forward(self, xs):
        h = self.V @ np.atleast_2d(xs).T
        for W, U in zip(self.Ws, self.Us):
            h = np.vstack([h, U @ relu(W @ h)])
        return self.u @ h


PARAM_TYPES = {"two_layer": TwoLayerParams, "fc": FCParams,
               "resnet": ResNetParams, "densenet": DenseNetParams}


def direct_forward(arch: str, params, x):
    """Evaluate the architecture's own layer recursion (no graph involved)."""
    if not isinstance(params, PARAM_TYPES[arch]):
        raise TypeError(f"{arch} expects {PARAM_TYPES[arch].__name__}, got {type(params).__name__}")
    x = np.asarray(x, dtype=float)
    out = params.forward(x)
    return float(out[0]) if x.ndim == 1 else out


# --------------------------------------------------------------------------
# graph construction


class _Layout:
    def __init__(self, d):
        self.d = d
        self.n = d
        self.edges: list[Edge] = []
        self.weights: dict[tuple[int, int], float] = {}

    def block(self, size) -> range:
        r = range(self.n + 1, self.n + size + 1)
        self.n += size
        return r

    def dense(self, dst: range, src: range, mat, rows=None):
        rows = range(len(dst)) if rows is None else rows
        for r in rows:
            for c, j in enumerate(src):
                self.edges.append(Edge(dst[r], j, PARAM))
                self.weights[(dst[r], j)] = float(mat[r, c])

    def relu_diag(self, dst: range, src: range):
        self.edges.extend(Edge(i, j, NONLINEAR) for i, j in zip(dst, src))

    def fixed(self, dst, src, w=1.0):
        self.edges.append(Edge(dst, src, FIXED, float(w)))

    def finish(self):
        dag = NonlinearDag(self.n, self.d, tuple(self.edges))
        return dag, param_vector(dag, self.weights)


def build_two_layer(d: int, m: int, params: TwoLayerParams | None = None):
    if m < 1:
        raise ValueError("two-layer network needs width m >= 1")
    params = params or TwoLayerParams(np.zeros((m, d)), np.zeros(m))
    if params.dims != (d, m):
        raise ValueError(f"params have (d, m) = {params.dims}, expected {(d, m)}")
    lay = _Layout(d)
    inputs = range(1, d + 1)
    pre = lay.block(m)
    lay.dense(pre, inputs, params.W)
    act = lay.block(m)
    lay.relu_diag(act, pre)
    out = lay.block(1)
    lay.dense(out, act, params.a[None, :])
    return lay.finish()


def build_fc(dims, params: FCParams | None = None):
    dims = tuple(int(x) for x in dims)
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError("fully connected network needs widths m_0..m_L with L >= 1, all >= 1")
    params = params or FCParams([np.zeros((dims[i + 1], dims[i])) for i in range(len(dims) - 1)],
                                np.zeros(dims[-1]))
    if params.dims != dims:
        raise ValueError(f"params have widths {params.dims}, expected {dims}")
    lay = _Layout(dims[0])
    prev = range(1, dims[0] + 1)
    for W in params.Ws:
        pre = lay.block(W.shape[0])
        lay.dense(pre, prev, W)
        act = lay.block(W.shape[0])
        lay.relu_diag(act, pre)
        prev = act
    out = lay.block(1)
    lay.dense(out, prev, params.u[None, :])
    return lay.finish()


@dataclass(frozen=True)
class BlockSpec:
    """Dimensions of the shortcut block form.

    ``form`` 1 is the two-layer shape (``p_seq`` = (m,), no skip blocks);
    form 2 is the block chain with skip widths ``d_seq`` = d_0..d_L and
    nonlinear widths ``p_seq`` = p_1..p_L. ``s_perms[l][r]`` is the row of
    h^[l+1] that receives row r of h^[l]; None means the stacked identity.
    """

    d: int
    d_seq: tuple = ()
    p_seq: tuple = ()
    s_perms: tuple | None = None
    form: int = 2

    @property
    def L(self) -> int:
        return len(self.p_seq) if self.form == 2 else 0

    def perms(self):
        if self.s_perms is not None:
            return [tuple(p) for p in self.s_perms]
        return [tuple(range(self.d_seq[l])) for l in range(self.L)]

    def dimension_problems(self) -> list[str]:
        if self.form == 1:
            return []
        out = []
        if len(self.d_seq) != self.L + 1:
            out.append("d_seq must have L+1 entries")
            return out
        floor = self.d + 1
        for name, seq, first in (("d", self.d_seq, 0), ("p", self.p_seq, 1)):
            for l, v in enumerate(seq, start=first):
                if v < floor:
                    out.append(f"{name}_{l}={v} < d+1={floor}")
        for l in range(1, self.L + 1):
            if self.d_seq[l] < self.d_seq[l - 1]:
                out.append(f"d_{l}={self.d_seq[l]} < d_{l - 1}={self.d_seq[l - 1]}: no row-permutation skip fits")
        return out


def build_block_chain(spec: BlockSpec, V, Ws, Us, u, u_rows=None):
    """Generic block-chain network: h0 = V x, h_l = S_l h_{l-1} + U_l relu(W_l h_{l-1}), out = u.h_L.

    ``Us[l]`` is d_l x p_l; ``u_rows[l]`` lists which of its rows are real
    Param edges (default: all). Skip blocks are Fixed weight-1 edges placed by
    ``spec.s_perms``.
    """
    d, L = spec.d, spec.L
    if spec.form != 2 or L < 1:
        raise ValueError("block chain needs form 2 with L >= 1")
    if len(spec.d_seq) != L + 1:
        raise ValueError("d_seq must have L+1 entries")
    V = _arr(V, (spec.d_seq[0], d), "V")
    u = _arr(u, (spec.d_seq[-1],), "u")
    if len(Ws) != L or len(Us) != L:
        raise ValueError(f"expected {L} W and U blocks")
    lay = _Layout(d)
    prev = lay.block(spec.d_seq[0])
    lay.dense(prev, range(1, d + 1), V)
    for l, (W, U, perm) in enumerate(zip(Ws, Us, spec.perms())):
        p, dl = spec.p_seq[l], spec.d_seq[l + 1]
        W = _arr(W, (p, len(prev)), f"W[{l + 1}]")
        U = _arr(U, (dl, p), f"U[{l + 1}]")
        if len(perm) != len(prev) or len(set(perm)) != len(perm) or not all(0 <= r < dl for r in perm):
            raise ValueError(f"skip permutation {l + 1} is not an injection of {len(prev)} rows into {dl}")
        pre = lay.block(p)
        lay.dense(pre, prev, W)
        act = lay.block(p)
        lay.relu_diag(act, pre)
        h = lay.block(dl)
        for q, r in enumerate(perm):
            lay.fixed(h[r], prev[q])
        lay.dense(h, act, U, rows=None if u_rows is None else u_rows[l])
        prev = h
    out = lay.block(1)
    lay.dense(out, prev, u[None, :])
    return lay.finish()


def build_resnet(d: int, D: int, m: int, L: int, params: ResNetParams | None = None):
    if D < d + 1:
        raise ValueError(f"ResNet needs D >= d+1, got D={D}, d={d}")
    if m < 1 or L < 1:
        raise ValueError("ResNet needs m >= 1 and L >= 1")
    params = params or ResNetParams(np.zeros((D, d)), [np.zeros((m, D))] * L,
                                    [np.zeros((D, m))] * L, np.zeros(D))
    if params.dims != (d, D, m, L):
        raise ValueError(f"params have (d, D, m, L) = {params.dims}, expected {(d, D, m, L)}")
    spec = BlockSpec(d, (D,) * (L + 1), (m,) * L)
    return build_block_chain(spec, params.V, params.Ws, params.Us, params.u)


def build_densenet(d: int, k0: int, k: int, m: int, L: int, params: DenseNetParams | None = None):
    if k0 < d + 1:
        raise ValueError(f"DenseNet needs k0 >= d+1, got k0={k0}, d={d}")
    if k < 1 or m < 1 or L < 1:
        raise ValueError("DenseNet needs k, m, L >= 1")
    if params is None:
        params = DenseNetParams(np.zeros((k0, d)),
                                [np.zeros((l * m, k0 + (l - 1) * k)) for l in range(1, L + 1)],
                                [np.zeros((k, l * m)) for l in range(1, L + 1)],
                                np.zeros(k0 + L * k))
    if params.dims != (d, k0, k, m, L):
        raise ValueError(f"params have (d, k0, k, m, L) = {params.dims}, expected {(d, k0, k, m, L)}")
    d_seq = tuple(k0 + l * k for l in range(L + 1))
    spec = BlockSpec(d, d_seq, tuple(l * m for l in range(1, L + 1)))
    # concatenation: the old rows are copied by the identity skip, U fills the k new rows
    Us, rows = [], []
    for l, U in enumerate(params.Us, 1):
        full = np.zeros((d_seq[l], l * m))
        full[d_seq[l - 1]:] = U
        Us.append(full)
        rows.append(range(d_seq[l - 1], d_seq[l]))
    return build_block_chain(spec, params.V, params.Ws, Us, params.u, u_rows=rows)


def build(arch: str, dims, params=None):
    """Dispatch on architecture name with the CLI's dims convention.

    two_layer: (d, m); fc: (m_0, ..., m_L); resnet: (d, D, m, L);
    densenet: (d, k0, k, m, L).
    """
    dims = tuple(int(x) for x in dims)
    if arch == "two_layer":
        return build_two_layer(*dims, params=params)
    if arch == "fc":
        return build_fc(dims, params=params)
    if arch == "resnet":
        return build_resnet(*dims, params=params)
    if arch == "densenet":
        return build_densenet(*dims, params=params)
    raise ValueError(f"unknown architecture {arch!r}; choose from {ARCHS}")


def random_params(arch: str, dims, rng, scale=1.0):
    dims = tuple(int(x) for x in dims)
    if arch == "fc":
        return FCParams.random(rng, dims, scale)
    return PARAM_TYPES[arch].random(rng, *dims, scale=scale)


def init_theta(dag: NonlinearDag, scheme="scaled", rng=None):
    """Initial parameters: "zero", ("uniform", a, b), or "scaled"
    (uniform on +-1/sqrt(fan_in), fan_in = Param edges entering the node)."""
    if scheme == "zero":
        return np.zeros(dag.n_params)
    rng = rng if rng is not None else np.random.default_rng(0)
    if scheme == "scaled":
        fan_in = {}
        for dst, _ in dag.param_order:
            fan_in[dst] = fan_in.get(dst, 0) + 1
        bound = np.array([1.0 / np.sqrt(fan_in[dst]) for dst, _ in dag.param_order])
        return rng.uniform(-1.0, 1.0, dag.n_params) * bound
    if isinstance(scheme, tuple) and scheme[0] == "uniform":
        return rng.uniform(scheme[1], scheme[2], dag.n_params)
    raise ValueError(f"unknown init scheme {scheme!r}")


# --------------------------------------------------------------------------
# structural assumptions


def validate_input_assumption(dag: NonlinearDag) -> bool:
    """Every edge leaving an input node is a trainable (Param) edge."""
    dag.require_valid()
    return all(e.kind is PARAM for e in dag.edges if e.src <= dag.d)


class ShortcutCheck(NamedTuple):
    ok: bool
    spec: BlockSpec | None
    reason: str


def validate_shortcut_form(dag: NonlinearDag) -> ShortcutCheck:
    """Recognise the shortcut block structure from the edge layout alone.

    Param values are ignored (a zero Param edge is still a slot); skip edges
    must be Fixed with weight exactly 1.
    """
    if not dag.is_valid:
        return ShortcutCheck(False, None, "invalid dag: " + "; ".join(dag.violations))
    d, N, inc = dag.d, dag.n, dag.incoming

    def fed_by(i, rng, kinds):
        es = inc[i]
        return bool(es) and all(e.kind in kinds and e.src in rng for e in es)

    def run(start, pred):
        i = start
        while i < N and pred(i):
            i += 1
        return i - start

    def relu_diag(start, pre):
        if start + len(pre) > N:
            return False
        return all(len(inc[start + j]) == 1 and inc[start + j][0].kind is NONLINEAR
                   and inc[start + j][0].src == pre[j] for j in range(len(pre)))

    def fail(msg):
        return ShortcutCheck(False, None, msg)

    pos = d + 1
    d0 = run(pos, lambda i: fed_by(i, range(1, d + 1), {PARAM}))
    if d0 == 0:
        return fail(f"node {pos}: expected a block fed by Param edges from the inputs")
    prev = range(pos, pos + d0)
    pos += d0

    if pos < N and relu_diag(pos, prev):
        act = range(pos, pos + d0)
        pos += d0
        if pos != N:
            return fail(f"two-layer shape needs the output right after the activations, found node {pos}")
        if not fed_by(N, act, {PARAM}):
            return fail("two-layer shape: output must be fed only by Param edges from the activations")
        return ShortcutCheck(True, BlockSpec(d, (), (d0,), None, form=1), "form (i): two-layer shape")

    d_seq, p_seq, perms = [d0], [], []
    while pos < N:
        l = len(p_seq) + 1
        p = run(pos, lambda i: fed_by(i, prev, {PARAM}))
        if p == 0:
            return fail(f"block {l}, node {pos}: expected pre-activations fed by Param edges from nodes "
                        f"{prev.start}..{prev.stop - 1}")
        pre = range(pos, pos + p)
        pos += p
        if not relu_diag(pos, pre):
            return fail(f"block {l}, node {pos}: expected a diagonal ReLU block of size {p}")
        act = range(pos, pos + p)
        pos += p
        start = pos
        while pos < N and all((e.kind is FIXED and e.src in prev) or (e.kind is PARAM and e.src in act)
                              for e in inc[pos]):
            pos += 1
        h = range(start, pos)
        if not h:
            return fail(f"block {l}, node {start}: expected the skip/update block")
        skips = sorted((e.src, e.dst, e.weight) for i in h for e in inc[i] if e.kind is FIXED)
        if [s for s, _, _ in skips] != list(prev):
            return fail(f"block {l}: skip edges do not copy every row of the previous block exactly once")
        if len({t for _, t, _ in skips}) != len(skips) or any(w != 1.0 for _, _, w in skips):
            return fail(f"block {l}: skip block is not a row permutation of a stacked identity")
        perms.append(tuple(t - start for _, t, _ in skips))
        d_seq.append(len(h))
        p_seq.append(p)
        prev = h
    if not p_seq:
        return fail("no blocks between the input block and the output")
    if not fed_by(N, prev, {PARAM}):
        return fail("output must be fed only by Param edges from the last block")
    spec = BlockSpec(d, tuple(d_seq), tuple(p_seq), tuple(perms), form=2)
    problems = spec.dimension_problems()
    if problems:
        return ShortcutCheck(False, spec, "block form found but " + ", ".join(problems))
    return ShortcutCheck(True, spec, f"form (ii): {spec.L} blocks")


# --------------------------------------------------------------------------
# padding and decomposition


def embed_pad(dag: NonlinearDag, theta, n_bar: int):
    """Embed into ``n_bar`` nodes: old sink relays to the new sink by one Fixed weight-1 edge."""
    dag.require_valid()
    theta = check_theta(dag, theta)
    if n_bar <= dag.n:
        raise ValueError(f"n_bar={n_bar} must exceed N={dag.n}")
    edges = dag.edges + (Edge(n_bar, dag.n, FIXED, 1.0),)
    new = NonlinearDag(n_bar, dag.d, edges)
    return new, theta.copy()


@dataclass
class Decomposition:
    """f^N(x) = sum_{i<=d} linear[i] x_i + sum_{d<i<N} nonlinear[i] relu(f^i(x)).

    ``coef[i]`` holds the expansion of every node i (0-based rows, 0-based
    columns over nodes): columns < d are input coefficients, the others are
    coefficients of relu(f^j). ``node_norms[i]`` is the weighted path norm of
    the sub-network ending at node i.
    """

    dag: NonlinearDag
    theta: np.ndarray
    coef: np.ndarray
    node_norms: np.ndarray = field(repr=False)

    @property
    def linear(self) -> np.ndarray:
        return self.coef[-1, : self.dag.d]

    @property
    def nonlinear(self) -> np.ndarray:
        """Coefficients of relu(f^i) for i = d+1 .. N-1."""
        return self.coef[-1, self.dag.d: self.dag.n - 1]

    def norm_lhs(self) -> float:
        d = self.dag.d
        return float(np.abs(self.linear).sum()
                     + 3.0 * np.abs(self.nonlinear) @ self.node_norms[d: self.dag.n - 1])

    def reconstruct(self, xs) -> np.ndarray:
        """Evaluate the expansion using sub-network outputs (node values)."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        _, h = evaluate(self.dag, self.theta, xs, states=True)
        d = self.dag.d
        return self.linear @ xs.T + self.nonlinear @ relu(h[d: self.dag.n - 1])

    def subnet(self, i: int):
        """The network truncated at node i (1-based) with node i as its output."""
        dag = self.dag
        if not dag.d < i <= dag.n:
            raise ValueError(f"subnet index must be in {dag.d + 1}..{dag.n}")
        keep = [(e, k) for k, e in enumerate(dag.edges) if e.dst <= i]
        slot = {pos: s for s, pos in enumerate(dag.param_order)}
        sub = NonlinearDag(i, dag.d, tuple(e for e, _ in keep))
        theta = np.array([self.theta[slot[pos]] for pos in sub.param_order])
        return sub, theta


def decompose_sink(dag: NonlinearDag, theta) -> Decomposition:
    """Expand every node into input terms and relu terms of earlier nodes.

    Node by node: an edge j -> i contributes its weight times node j's own
    expansion if it is linear (Param or Fixed) and j is hidden, its weight on
    x_j if j is an input, and a unit coefficient on relu(f^j) if it is a
    ReLU edge.
    """
    dag.require_valid()
    theta = check_theta(dag, theta)
    if not validate_input_assumption(dag):
        raise ValueError("decomposition needs every edge leaving an input to be a Param edge")
    slot = {pos: s for s, pos in enumerate(dag.param_order)}
    n, d = dag.n, dag.d
    coef = np.zeros((n, n))
    for i in range(d + 1, n + 1):
        row = coef[i - 1]
        for e in dag.incoming[i]:
            j = e.src
            if e.kind is NONLINEAR:
                row[j - 1] += 1.0
                continue
            w = theta[slot[(e.dst, e.src)]] if e.kind is PARAM else e.weight
            if j <= d:
                row[j - 1] += w
            else:
                row += w * coef[j - 1]
    fwd, _ = node_path_norms(dag, theta)
    return Decomposition(dag, theta, coef, fwd)
