"""Barron-type targets, Monte Carlo two-layer approximants and their embedding
into shortcut block networks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjacency import relu
from .builders import BlockSpec, TwoLayerParams, build_block_chain, build_two_layer


@dataclass(frozen=True)
class BarronTarget:
    """f*(x) = sum_k c_k relu(w_k . x); labels are f*(x) + shift."""

    coeffs: np.ndarray  # (K,)
    weights: np.ndarray  # (K, d)
    shift: float = 0.0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if c.shape[0] != w.shape[0] or c.size == 0:
            raise ValueError("need one weight vector per coefficient, at least one atom")
        if np.any(np.abs(w).sum(axis=1) == 0):
            raise ValueError("atoms with a zero weight vector carry no function")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, atoms, shift=0.0):
        cs, ws = zip(*atoms)
        return cls(np.array(cs, dtype=float), np.array(ws, dtype=float), shift)

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    @property
    def atoms(self):
        return list(zip(self.coeffs, self.weights))

    @property
    def barron_bound(self) -> float:
        return float(np.abs(self.coeffs) @ np.abs(self.weights).sum(axis=1))

    def __call__(self, xs):
        xs = np.asarray(xs, dtype=float)
        out = relu(np.atleast_2d(xs) @ self.weights.T) @ self.coeffs
        return float(out[0]) if xs.ndim == 1 else out

    def labels(self, xs):
        return self(xs) + self.shift

    def sampler(self):
        """Discrete representing distribution: (masses, amplitudes, weights).

        Mass on atom k is |c_k| |w_k|_1 / B and its amplitude sign(c_k) B / |w_k|_1,
        so E[a relu(w.x)] = f*(x) and E[a^2 |w|_1^2] = B^2.
        """
        norms = np.abs(self.weights).sum(axis=1)
        B = self.barron_bound
        return np.abs(self.coeffs) * norms / B, np.sign(self.coeffs) * B / norms, self.weights


def make_target(seed: int, d: int, atom_count: int, sparsity: int | None = None,
                signed: bool = False) -> BarronTarget:
    """Random target with ``sparsity`` nonzeros per atom.

    Unsigned targets use c_k >= 0 scaled to B = 1, so 0 <= f* <= 1 on the unit
    cube. Signed targets are scaled to B = 1/2 and shifted by 1/2.
    """
    if atom_count < 1:
        raise ValueError("atom_count must be >= 1")
    sparsity = d if sparsity is None else sparsity
    if not 1 <= sparsity <= d:
        raise ValueError(f"sparsity must be in 1..{d}")
    rng = np.random.default_rng(seed)
    weights = np.zeros((atom_count, d))
    for k in range(atom_count):
        cols = rng.choice(d, size=sparsity, replace=False)
        weights[k, cols] = rng.normal(size=sparsity)
    c = rng.uniform(0.2, 1.0, atom_count)
    if signed:
        c *= rng.choice([-1.0, 1.0], atom_count)
    B = np.abs(c) @ np.abs(weights).sum(axis=1)
    if signed:
        return BarronTarget(c * 0.5 / B, weights, shift=0.5)
    return BarronTarget(c / B, weights)


@dataclass(frozen=True)
class MCBudget:
    m: int
    retries: int = 100
    risk_mc_samples: int = 20000

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("width m must be >= 1")


@dataclass(frozen=True)
class TwoLayerSample:
    params: TwoLayerParams
    retries: int  # rejected draws before acceptance
    risk: float  # MC estimate of E 1/2 (f - f*)^2
    risk_stderr: float
    weighted_sum: float  # sum_k |a_k| |w_k|_1 of the accepted network


class ApproximationRetriesExhausted(RuntimeError):
    pass


def mc_risk(params: TwoLayerParams, target: BarronTarget, xs):
    r = 0.5 * (params.forward(xs) - target(xs)) ** 2
    return float(r.mean()), float(r.std(ddof=1) / np.sqrt(len(r))) if len(r) > 1 else 0.0


def sample_two_layer(target: BarronTarget, budget: MCBudget, rng) -> TwoLayerSample:
    """Draw width-m networks (a_k/m, w_k), (a_k, w_k) ~ rho, until both acceptance events hold.

    Risk event: MC risk + 2 stderr < 3 B^2 / (2m). Norm event:
    sum_k |a_k/m| |w_k|_1 < 2 B.
    """
    mass, amp, weights = target.sampler()
    B, m = target.barron_bound, budget.m
    threshold = 3.0 * B**2 / (2.0 * m)
    for attempt in range(budget.retries + 1):
        idx = rng.choice(len(mass), size=m, p=mass)
        params = TwoLayerParams(weights[idx].copy(), amp[idx] / m)
        xs = rng.random((budget.risk_mc_samples, target.d))
        risk, se = mc_risk(params, target, xs)
        wsum = float(np.abs(params.a) @ np.abs(params.W).sum(axis=1))
        if risk + 2.0 * se < threshold and wsum < 2.0 * B:
            return TwoLayerSample(params, attempt, risk, se, wsum)
    raise ApproximationRetriesExhausted(f"no accepted draw in {budget.retries + 1} attempts at m={m}")


def approx_error_bound(barron_bound: float, n_non: int) -> float:
    if n_non < 1:
        raise ValueError("n_non must be >= 1")
    return 3.0 * barron_bound**2 / (2.0 * n_non)


def embed_two_layer_into_blocks(params: TwoLayerParams, spec: BlockSpec):
    """Realise a two-layer network inside a shortcut block network.

    Units are handed out to the blocks in order (p_1 to block 1, ...). The
    inputs ride along in the top d skip rows, the last skip row accumulates
    sum a_j relu(b_j . x), and the output reads that row.
    """
    W, a = params.W, params.a
    m, d = W.shape
    if spec.d != d:
        raise ValueError(f"spec has d={spec.d}, network has d={d}")
    if spec.form == 1:
        if spec.p_seq != (m,):
            raise ValueError(f"two-layer shape needs width {spec.p_seq}, network has {m}")
        return build_two_layer(d, m, params)
    if sum(spec.p_seq) != m:
        raise ValueError(f"partition {spec.p_seq} does not sum to the width m={m}")
    problems = spec.dimension_problems()
    if problems:
        raise ValueError("spec violates the shortcut assumption: " + ", ".join(problems))
    d_seq = spec.d_seq
    V = np.zeros((d_seq[0], d))
    V[:d, :d] = np.eye(d)
    Ws, Us, perms = [], [], []
    start = 0
    for l, p in enumerate(spec.p_seq):
        Wl = np.zeros((p, d_seq[l]))
        Wl[:, :d] = W[start: start + p]
        Ul = np.zeros((d_seq[l + 1], p))
        Ul[-1] = a[start: start + p]
        Ws.append(Wl)
        Us.append(Ul)
        # top rows stay put, the accumulator row moves to the new last row
        perm = list(range(d_seq[l]))
        perm[-1] = d_seq[l + 1] - 1
        perms.append(tuple(perm))
        start += p
    u = np.zeros(d_seq[-1])
    u[-1] = 1.0
    chain = BlockSpec(d, d_seq, spec.p_seq, tuple(perms))
    return build_block_chain(chain, V, Ws, Us, u)
