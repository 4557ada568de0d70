"""Truncated square loss, reverse-mode gradients, path-norm regularised training,
generalization bounds and an empirical Rademacher complexity estimator.

Kink conventions: relu'(0) = 0, the clamp has derivative 0 at (and beyond) its
boundary, sign(0) = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adjacency import evaluate
from .builders import init_theta, validate_input_assumption
from .dag import PARAM, NonlinearDag, NumericError, check_theta
from .pathnorm import node_path_norms


def truncate(v):
    return np.clip(v, 0.0, 1.0)


@dataclass(frozen=True)
class Dataset:
    xs: np.ndarray  # (n, d)
    ys: np.ndarray  # (n,)

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        ys = np.atleast_1d(np.asarray(self.ys, dtype=float))
        if xs.shape[0] < 1 or ys.shape != (xs.shape[0],):
            raise ValueError("dataset needs n >= 1 points with one label each")
        if xs.min() < 0 or xs.max() > 1 or ys.min() < 0 or ys.max() > 1:
            raise ValueError("inputs and labels must lie in [0, 1]")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def d(self) -> int:
        return self.xs.shape[1]

    @classmethod
    def sample(cls, target, n, rng):
        xs = rng.random((n, target.d))
        return cls(xs, np.clip(target.labels(xs), 0.0, 1.0))


def loss(dag: NonlinearDag, theta, x, y) -> float:
    return float(0.5 * (truncate(evaluate(dag, theta, x)) - y) ** 2)


def empirical_risk(dag: NonlinearDag, theta, data: Dataset) -> float:
    out = evaluate(dag, theta, data.xs)
    return float(np.mean(0.5 * (truncate(out) - data.ys) ** 2))


def _param_endpoints(dag: NonlinearDag):
    arr = dag.arrays
    mask = arr.kind == 0
    return arr.dst[mask], arr.src[mask]


def backprop(dag: NonlinearDag, theta, xs, out_grad):
    """Gradient of sum_b out_grad[b] * f(xs[b]) with respect to theta.

    ``out_grad`` may be a callable taking the raw outputs and returning the
    per-sample output derivatives; the outputs are returned alongside.
    """
    theta = check_theta(dag, theta)
    out, h = evaluate(dag, theta, xs, states=True)
    g_out = out_grad(out) if callable(out_grad) else np.asarray(out_grad, dtype=float)
    G = np.zeros_like(h)
    G[-1] = g_out
    active = h > 0
    for idx, lin, nl in reversed(list(dag.sweep.blocks(theta))):
        g = G[idx]
        G += lin.T @ g
        G += (nl.T @ g) * active
    dst, src = _param_endpoints(dag)
    grad = np.einsum("ij,ij->i", G[dst], h[src])
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")
    return grad, out


def risk_and_grad(dag: NonlinearDag, theta, xs, ys):
    """Mean truncated loss over the batch and its gradient."""
    ys = np.asarray(ys, dtype=float)
    n = len(ys)
    cache = {}

    def dloss(out):
        t = truncate(out)
        cache["risk"] = float(np.mean(0.5 * (t - ys) ** 2))
        return (t - ys) * ((out > 0) & (out < 1)) / n

    grad, _ = backprop(dag, theta, np.atleast_2d(xs), dloss)
    return cache["risk"], grad


def grad(dag: NonlinearDag, theta, x, y) -> np.ndarray:
    return risk_and_grad(dag, theta, np.atleast_2d(x), [y])[1]


def path_norm_subgradient(dag: NonlinearDag, theta) -> np.ndarray:
    """sign(theta_e) times the path sum through edge e with |theta_e| factored out."""
    theta = check_theta(dag, theta)
    fwd, bwd = node_path_norms(dag, theta)
    dst, src = _param_endpoints(dag)
    return np.sign(theta) * fwd[src] * bwd[dst]


def path_norm_value(dag: NonlinearDag, theta) -> float:
    fwd, _ = node_path_norms(dag, theta)
    return float(fwd[-1])


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    lam: float = 0.0
    epochs: int = 100
    lr: float = 0.1
    batch_size: int | None = 32  # None: full batch with backtracking
    seed: int = 0
    init: object = "scaled"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.epochs < 0 or self.lr <= 0:
            raise ValueError("epochs must be >= 0 and lr > 0")


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    r_s: float
    path_norm: float
    objective: float


class TrainingDiverged(NumericError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


def objective(dag, theta, data: Dataset, lam: float):
    r = empirical_risk(dag, theta, data)
    pn = path_norm_value(dag, theta)
    return r + lam / math.sqrt(data.n) * pn, r, pn


def train_regularized(dag: NonlinearDag, data: Dataset, config: TrainConfig, theta0=None):
    """Minimise R_S + lam/sqrt(n) * path norm.

    Mini-batch mode takes a risk step of size lr/sqrt(t) followed by a
    proximal shrink of each weight by step * lam/sqrt(n) * (its path-sum
    factor), which is stable for large lam. Full-batch mode (batch_size None)
    backtracks until the objective does not increase, so the trace is
    monotone. Returns (theta, trace) with one trace row per epoch plus the
    initial state.
    """
    if not validate_input_assumption(dag):
        raise ValueError("training needs every edge leaving an input to be a Param edge")
    rng = np.random.default_rng(config.seed)
    theta = init_theta(dag, config.init, rng) if theta0 is None else check_theta(dag, theta0).copy()
    reg = config.lam / math.sqrt(data.n)
    trace = []

    def record(epoch):
        try:
            j, r, pn = objective(dag, theta, data, config.lam)
        except NumericError as exc:
            raise TrainingDiverged(f"non-finite state at epoch {epoch}: {exc}", trace) from exc
        trace.append(TraceRow(epoch, r, pn, j))
        if not math.isfinite(j):
            raise TrainingDiverged(f"objective became non-finite at epoch {epoch}", trace)
        return j

    j = record(0)
    if config.batch_size is None:
        step = config.lr
        for epoch in range(1, config.epochs + 1):
            _, g = risk_and_grad(dag, theta, data.xs, data.ys)
            g = g + reg * path_norm_subgradient(dag, theta)
            for _ in range(40):
                cand = theta - step * g
                with np.errstate(over="ignore", invalid="ignore"):
                    j_new = objective(dag, cand, data, config.lam)[0]
                if j_new <= j:
                    break
                step *= 0.5
            else:
                cand = theta  # no decrease found: stay put
            theta = cand
            j = record(epoch)
            step *= 2.0
        return theta, trace

    t = 0
    dst, src = _param_endpoints(dag)
    bs = max(1, min(config.batch_size, data.n))
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(data.n)
        for start in range(0, data.n, bs):
            batch = order[start: start + bs]
            t += 1
            _, g = risk_and_grad(dag, theta, data.xs[batch], data.ys[batch])
            eta = config.lr / math.sqrt(t)
            # risk step, then a soft-threshold on the penalty with per-edge weights
            # frozen at the current point; a weight never crosses zero
            fwd, bwd = node_path_norms(dag, theta)
            shrink = eta * reg * fwd[src] * bwd[dst]
            half = theta - eta * g
            theta = np.sign(half) * np.maximum(np.abs(half) - shrink, 0.0)
        j = record(epoch)
    return theta, trace


# --------------------------------------------------------------------------
# bounds


def _check_common(n, d, delta):
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")


def aposteriori_bound(path_norm: float, n: int, d: int, delta: float) -> float:
    _check_common(n, d, delta)
    if path_norm < 0:
        raise ValueError("path norm must be >= 0")
    c = 6.0 * math.sqrt(2.0 * math.log(2 * d)) + 1.0 / (2.0 * math.sqrt(2.0))
    return (path_norm + 1.0) * c / math.sqrt(n) + 0.5 * math.sqrt(math.log(math.pi**2 / (3.0 * delta)) / (2.0 * n))


def lambda0_threshold(d: int) -> float:
    return 2.0 + 1.0 / (12.0 * math.sqrt(math.log(2 * d)))


def regularization_lambda(lambda0: float, d: int) -> float:
    return 3.0 * lambda0 * math.sqrt(2.0 * math.log(2 * d))


def apriori_bound(barron_bound: float, n_non: int, n: int, d: int, lambda0: float, delta: float) -> float:
    _check_common(n, d, delta)
    if n_non < 1:
        raise ValueError("n_non must be >= 1")
    if lambda0 < lambda0_threshold(d):
        raise ValueError(f"lambda0={lambda0} is below the threshold {lambda0_threshold(d)}")
    approx = 3.0 * barron_bound**2 / (2.0 * n_non)
    c = 3.0 * (2.0 + lambda0) * math.sqrt(2.0 * math.log(2 * d)) + 1.0 / (2.0 * math.sqrt(2.0))
    return (approx + (6.0 * barron_bound + 1.0) * c / math.sqrt(n)
            + math.sqrt(math.log(2.0 * math.pi**2 / (3.0 * delta)) / (2.0 * n)))


def rademacher_bound(Q: float, n: int, d: int) -> float:
    return 3.0 * Q * math.sqrt(2.0 * math.log(2 * d) / n)


@dataclass(frozen=True)
class RiskReport:
    r_s: float
    r_d_hat: float
    r_d_stderr: float
    path_norm: float
    aposteriori_bound: float
    apriori_bound: float | None
    delta: float


def population_risk(dag, theta, target, samples: int, rng):
    """Held-out Monte Carlo estimate of the truncated risk under uniform inputs."""
    xs = rng.random((samples, target.d))
    ys = np.clip(target.labels(xs), 0.0, 1.0)
    r = 0.5 * (truncate(evaluate(dag, theta, xs)) - ys) ** 2
    return float(r.mean()), float(r.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0


# --------------------------------------------------------------------------
# Rademacher complexity


class ProjectionUnavailable(ValueError):
    pass


@dataclass
class _Projector:
    """Rescale theta onto the path-norm sphere of radius Q.

    Preferred: scale the Param edges entering the output (exact when every
    edge into the output is Param). Fallback for layered graphs, where every
    input-to-output path crosses the same number k of Param edges: scale all
    Param edges by (Q / norm)**(1/k).
    """

    dag: NonlinearDag
    mask: np.ndarray = field(init=False)
    power: float = field(init=False)

    def __post_init__(self):
        dag = self.dag
        sink_in = dag.incoming[dag.sink]
        if sink_in and all(e.kind is PARAM for e in sink_in):
            self.mask = np.array([dst == dag.sink for dst, _ in dag.param_order])
            self.power = 1.0
            return
        counts: dict[int, set] = {s: {0} for s in dag.sources}
        for i in range(dag.d + 1, dag.n + 1):
            got = set()
            for e in dag.incoming[i]:
                bump = 1 if e.kind is PARAM else 0
                got |= {c + bump for c in counts.get(e.src, set())}
            if got:
                counts[i] = got
        k = counts.get(dag.sink, set())
        if len(k) != 1 or 0 in k:
            raise ProjectionUnavailable(
                "output has non-Param incoming edges and paths cross differing numbers of Param "
                f"edges ({sorted(k)}); no exact path-norm rescaling available")
        self.mask = np.ones(dag.n_params, dtype=bool)
        self.power = 1.0 / k.pop()

    def __call__(self, theta, Q):
        pn = path_norm_value(self.dag, theta)
        if pn == 0.0:
            return theta
        out = theta.copy()
        out[self.mask] *= (Q / pn) ** self.power
        return out


@dataclass(frozen=True)
class RademacherResult:
    estimate: float
    stderr: float
    values: tuple
    rejected: int
    diagnostic: str = ""


def rademacher_trial(dag, xs, tau, Q, opt_budget, rng, project=None, lr=4.0, restarts=1):
    """Lower estimate of sup over the path-norm ball of (1/n) sum tau_i f(x_i).

    Ascends the scale-free ratio F(theta) / |theta|_P (its subgradient carries
    the path-norm term that pushes towards sparse maximisers), then projects
    onto the sphere of radius Q. The best projected value seen is returned.
    """
    project = project or _Projector(dag)
    n = len(tau)
    best = 0.0  # the zero network is always feasible
    if Q == 0:
        return best
    for _ in range(restarts):
        theta = project(init_theta(dag, "scaled", rng), Q)
        for t in range(1, opt_budget + 1):
            g, out = backprop(dag, theta, xs, tau / n)
            value = float(tau @ out) / n
            best = max(best, value)
            pn = path_norm_value(dag, theta)
            if pn == 0:
                break
            g = (g * pn - value * path_norm_subgradient(dag, theta)) / pn**2
            gn = np.linalg.norm(g)
            if gn == 0:
                break
            theta = project(theta + lr / math.sqrt(t) * np.linalg.norm(theta) / gn * g, Q)
        best = max(best, float(tau @ evaluate(dag, theta, xs)) / n)
    return best


def rademacher_estimate(xs, dag: NonlinearDag, Q: float, trials: int, opt_budget: int, rng,
                        trial_rngs=None) -> RademacherResult:
    """Mean and standard error over sign vectors of the inner supremum estimate.

    The inner supremum is only approximated from below, so the result is a
    lower estimate of the empirical Rademacher complexity. ``trial_rngs``
    may supply one generator per trial (for order-independent parallel runs).
    """
    if Q < 0:
        raise ValueError("Q must be >= 0")
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    try:
        project = _Projector(dag)
    except ProjectionUnavailable as exc:
        return RademacherResult(float("nan"), float("nan"), (), trials, str(exc))
    trial_rngs = trial_rngs or [rng] * trials
    values = []
    for r in trial_rngs[:trials]:
        tau = r.choice([-1.0, 1.0], size=xs.shape[0])
        values.append(rademacher_trial(dag, xs, tau, Q, opt_budget, r, project))
    v = np.array(values)
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return RademacherResult(float(v.mean()), se, tuple(values), 0)
