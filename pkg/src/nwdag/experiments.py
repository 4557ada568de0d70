"""Seeded experiment runners producing CSV rows with a fixed column order.

Every row repeats its full configuration so a CSV file is self-describing.
Trials draw from generators keyed on (seed, ...) rather than a shared stream,
so results do not depend on execution order or thread count.
"""
from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .approx import MCBudget, approx_error_bound, make_target, sample_two_layer
from .builders import build
from .learn import (Dataset, TrainConfig, aposteriori_bound, apriori_bound, empirical_risk,
                    lambda0_threshold, population_risk, rademacher_bound, rademacher_estimate,
                    regularization_lambda, train_regularized)
from .pathnorm import edge_counts

APPROX_COLUMNS = ("m", "accepted_risk", "bound", "path_norm", "retries",
                  "seed", "d", "atoms", "sparsity", "trials", "mc_samples")
RADEMACHER_COLUMNS = ("seed", "d", "n", "Q", "m", "trials", "opt_budget",
                      "estimate", "stderr", "bound", "rejected")
TRAIN_COLUMNS = ("seed", "arch", "dims", "n", "d", "lambda", "r_s", "r_d_hat",
                 "path_norm", "apost_bound", "apri_bound", "delta")
BOUNDS_COLUMNS = ("kind", "d", "n", "nnon", "barron", "lambda0", "pathnorm", "delta", "value")


def thread_count() -> int:
    env = os.environ.get("NWDAG_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def parallel_map(fn, items):
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # shortest exact round-trip
    return str(v)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def run_approx(seed=0, d=8, atoms=8, sparsity=None, widths=(8, 16, 32, 64, 128, 256, 512),
               trials=10, mc_samples=20000, retries=100):
    """One row per width; accepted_risk and path_norm are means over ``trials`` accepted draws."""
    sparsity = min(3, d) if sparsity is None else sparsity
    target = make_target(seed, d, atoms, sparsity)
    B = target.barron_bound

    def one(m):
        risks, norms, tries = [], [], 0
        for t in range(trials):
            s = sample_two_layer(target, MCBudget(m, retries, mc_samples),
                                 np.random.default_rng([seed, m, t]))
            risks.append(s.risk)
            norms.append(3.0 * s.weighted_sum)
            tries += s.retries
        return {"m": m, "accepted_risk": float(np.mean(risks)), "bound": approx_error_bound(B, m),
                "path_norm": float(np.mean(norms)), "retries": tries, "seed": seed, "d": d,
                "atoms": atoms, "sparsity": sparsity, "trials": trials, "mc_samples": mc_samples}

    return parallel_map(one, widths)


def run_rademacher(seed=0, cells=((2, 64), (8, 256), (32, 256)), Qs=(1.0, 4.0), m=16,
                   trials=64, opt_budget=40):
    def one(cell):
        (d, n), Q = cell
        dag, _ = build("two_layer", (d, m))
        xs = np.random.default_rng([seed, d, n]).random((n, d))
        rngs = [np.random.default_rng([seed, d, n, t]) for t in range(trials)]
        res = rademacher_estimate(xs, dag, Q, trials, opt_budget, None, trial_rngs=rngs)
        return {"seed": seed, "d": d, "n": n, "Q": float(Q), "m": m, "trials": trials,
                "opt_budget": opt_budget, "estimate": res.estimate, "stderr": res.stderr,
                "bound": rademacher_bound(Q, n, d), "rejected": res.rejected}

    return parallel_map(one, [(c, Q) for c in cells for Q in Qs])


def run_train(seed=0, arch="densenet", dims=(8, 9, 2, 4, 3), n=256, trials=20, lambda0="auto",
              delta=0.1, epochs=60, lr=0.05, batch_size=32, atoms=8, sparsity=None, target_seed=None,
              test_samples=20000):
    """Train on n labelled points per trial and compare risks with both bounds.

    Trial t uses seed + t for data, initialisation and held-out points. The
    target is fixed across trials (``target_seed``, default ``seed``).
    """
    dims = tuple(int(x) for x in dims)
    dag, _ = build(arch, dims)
    d = dag.d
    sparsity = min(3, d) if sparsity is None else sparsity
    target = make_target(seed if target_seed is None else target_seed, d, atoms, sparsity)
    lam0 = lambda0_threshold(d) if lambda0 == "auto" else float(lambda0)
    lam = regularization_lambda(lam0, d)
    n_non = edge_counts(dag).n_non
    # below the threshold the a priori display does not apply
    apri = (apriori_bound(target.barron_bound, n_non, n, d, lam0, delta)
            if lam0 >= lambda0_threshold(d) else float("nan"))

    def one(t):
        s = seed + t
        data = Dataset.sample(target, n, np.random.default_rng([s, 0]))
        theta, trace = train_regularized(dag, data, TrainConfig(lam, epochs, lr, batch_size, s))
        r_s = empirical_risk(dag, theta, data)
        r_d, _ = population_risk(dag, theta, target, test_samples, np.random.default_rng([s, 1]))
        pn = trace[-1].path_norm
        return {"seed": s, "arch": arch, "dims": "x".join(map(str, dims)), "n": n, "d": d,
                "lambda": lam, "r_s": r_s, "r_d_hat": r_d, "path_norm": pn,
                "apost_bound": aposteriori_bound(pn, n, d, delta),
                "apri_bound": apri,
                "delta": delta}

    return parallel_map(one, range(trials))
