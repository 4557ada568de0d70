"""Command-line front end.

Exit codes: 0 success, 1 domain error (invalid graph, bad file, numeric
failure), 2 usage error.
"""
from __future__ import annotations

import argparse
import re
import sys

import numpy as np

from . import experiments as ex
from .adjacency import forward_fixed_point, nilpotency_index
from .builders import ARCHS, build, init_theta, validate_input_assumption, validate_shortcut_form
from .dag import InvalidDagError, NumericError
from .io import DagFormatError, load_dag, save_dag
from .learn import aposteriori_bound, apriori_bound, lambda0_threshold
from .pathnorm import PathBudgetExceeded, edge_counts, path_norm_enumerate, path_norm_neumann


class UsageError(Exception):
    pass


def _ints(text):
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text):
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _lambda0(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--lambda0 takes a number or 'auto'") from None


def _init(text):
    if text in ("zero", "scaled"):
        return text
    m = re.fullmatch(r"uniform\(\s*([^,]+)\s*,\s*([^)]+)\s*\)", text)
    if m:
        try:
            return ("uniform", float(m.group(1)), float(m.group(2)))
        except ValueError:
            pass
    raise argparse.ArgumentTypeError("--init takes zero, scaled or uniform(a,b)")


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_build(a):
    dag, _ = build(a.arch, a.dims)
    theta = init_theta(dag, a.init, np.random.default_rng(a.seed))
    if a.out:
        save_dag(a.out, dag, theta)
    else:
        from .io import dumps
        sys.stdout.write(dumps(dag, theta))
    return 0


def cmd_validate(a):
    dag, _ = load_dag(a.inp)
    problems = dag.violations
    if problems:
        for p in problems:
            print(f"violation: {p}")
        return 1
    c = edge_counts(dag)
    print(f"valid: N={dag.n} d={dag.d} n_para={c.n_para} n_fix={c.n_fix} n_non={c.n_non} "
          f"nilpotency_index={nilpotency_index(dag)}")
    print(f"input_assumption: {validate_input_assumption(dag)}")
    chk = validate_shortcut_form(dag)
    print(f"shortcut_form: {chk.ok} ({chk.reason})")
    return 0


def cmd_pathnorm(a):
    dag, theta = load_dag(a.inp)
    dag.require_valid()
    neu = path_norm_neumann(dag, theta).value
    print(f"neumann: {neu:.17g}")
    try:
        rep = path_norm_enumerate(dag, theta, a.max_paths)
    except PathBudgetExceeded as exc:
        print(f"enumeration: skipped ({exc})")
        return 0
    print(f"enumeration: {rep.value:.17g} ({rep.paths_counted} paths)")
    print(f"delta: {abs(rep.value - neu):.3g}")
    return 0


def cmd_forward(a):
    dag, theta = load_dag(a.inp)
    dag.require_valid()
    if len(a.x) != dag.d:
        raise UsageError(f"--x needs {dag.d} values, got {len(a.x)}")
    fp = forward_fixed_point(dag, theta, np.array(a.x))
    print(f"output: {fp.output:.17g}")
    print(f"steps: {fp.steps} (nilpotency index {nilpotency_index(dag)})")
    return 0


def cmd_approx(a):
    rows = ex.run_approx(a.seed, a.d, a.atoms, a.sparsity, a.widths, a.trials, a.mc_samples, a.retries)
    _emit(ex.to_csv(ex.APPROX_COLUMNS, rows), a.out)
    return 0


def cmd_train(a):
    rows = ex.run_train(a.seed, a.arch, a.dims, a.n, a.trials, a.lambda0, a.delta, a.epochs, a.lr,
                        a.batch_size, a.atoms, a.sparsity, a.target_seed, a.test_samples)
    _emit(ex.to_csv(ex.TRAIN_COLUMNS, rows), a.out)
    return 0


def cmd_rademacher(a):
    if len(a.d) != len(a.n):
        raise UsageError("--d and --n must list the same number of values")
    rows = ex.run_rademacher(a.seed, tuple(zip(a.d, a.n)), a.Q, a.m, a.trials, a.opt_budget)
    _emit(ex.to_csv(ex.RADEMACHER_COLUMNS, rows), a.out)
    return 0


def cmd_bounds(a):
    lam0 = lambda0_threshold(a.d) if a.lambda0 == "auto" else a.lambda0
    rows = []
    if a.apriori:
        if a.nnon is None or a.barron is None:
            raise UsageError("--apriori needs --nnon and --barron")
        rows.append({"kind": "apriori", "d": a.d, "n": a.n, "nnon": a.nnon, "barron": a.barron,
                     "lambda0": lam0, "pathnorm": "", "delta": a.delta,
                     "value": apriori_bound(a.barron, a.nnon, a.n, a.d, lam0, a.delta)})
    if a.aposteriori:
        if a.pathnorm is None:
            raise UsageError("--aposteriori needs --pathnorm")
        rows.append({"kind": "aposteriori", "d": a.d, "n": a.n, "nnon": "", "barron": "",
                     "lambda0": "", "pathnorm": a.pathnorm, "delta": a.delta,
                     "value": aposteriori_bound(a.pathnorm, a.n, a.d, a.delta)})
    if not rows:
        raise UsageError("choose --apriori and/or --aposteriori")
    _emit(ex.to_csv(ex.BOUNDS_COLUMNS, rows), a.out)
    return 0


def make_parser():
    p = argparse.ArgumentParser(prog="nwdag", description="Nonlinear weighted DAG networks and path-norm bounds")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("build", help="construct an architecture and write it in the dag format")
    s.add_argument("--arch", choices=ARCHS, required=True)
    s.add_argument("--dims", type=_ints, required=True,
                   help="two_layer: d,m  fc: m0,...,mL  resnet: d,D,m,L  densenet: d,k0,k,m,L")
    s.add_argument("--init", type=_init, default="scaled", help="zero, scaled or uniform(a,b)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_build)

    s = sub.add_parser("validate", help="check a dag file and report structural assumptions")
    s.add_argument("--in", dest="inp", required=True)
    s.set_defaults(fn=cmd_validate)

    s = sub.add_parser("pathnorm", help="weighted path norm by both methods")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--max-paths", type=int, default=10**6)
    s.set_defaults(fn=cmd_pathnorm)

    s = sub.add_parser("forward", help="fixed-point forward pass at one input")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--x", type=_floats, required=True)
    s.set_defaults(fn=cmd_forward)

    s = sub.add_parser("approx", help="two-layer Monte Carlo approximation rate")
    s.add_argument("--d", type=int, default=8)
    s.add_argument("--atoms", type=int, default=8)
    s.add_argument("--sparsity", type=int, help="nonzeros per target atom (default min(3, d))")
    s.add_argument("--widths", type=_ints, default=(8, 16, 32, 64, 128, 256, 512))
    s.add_argument("--trials", type=int, default=10)
    s.add_argument("--mc-samples", type=int, default=20000)
    s.add_argument("--retries", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_approx)

    s = sub.add_parser("train", help="path-norm regularised training with both bounds")
    s.add_argument("--arch", choices=ARCHS, default="densenet")
    s.add_argument("--dims", type=_ints, default=(8, 9, 2, 4, 3))
    s.add_argument("--n", type=int, default=256)
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--lambda0", type=_lambda0, default="auto")
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--epochs", type=int, default=60)
    s.add_argument("--lr", type=float, default=0.05)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--atoms", type=int, default=8)
    s.add_argument("--sparsity", type=int, help="nonzeros per target atom (default min(3, d))")
    s.add_argument("--target-seed", type=int)
    s.add_argument("--test-samples", type=int, default=20000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("rademacher", help="empirical Rademacher complexity lower estimate")
    s.add_argument("--d", type=_ints, default=(2, 8, 32))
    s.add_argument("--n", type=_ints, default=(64, 256, 256))
    s.add_argument("--Q", type=_floats, default=(1.0, 4.0))
    s.add_argument("--m", type=int, default=16)
    s.add_argument("--trials", type=int, default=64)
    s.add_argument("--opt-budget", type=int, default=40)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_rademacher)

    s = sub.add_parser("bounds", help="evaluate the a priori / a posteriori bounds")
    s.add_argument("--apriori", action="store_true")
    s.add_argument("--aposteriori", action="store_true")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--nnon", type=int)
    s.add_argument("--barron", type=float)
    s.add_argument("--pathnorm", type=float)
    s.add_argument("--lambda0", type=_lambda0, default="auto")
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_bounds)
    return p


def run(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nwdag {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DagFormatError, InvalidDagError, NumericError, ValueError, RuntimeError, OSError) as exc:
        print(f"nwdag {args.command}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())
