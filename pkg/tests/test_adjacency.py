import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from nwdag.adjacency import (apply_operator, evaluate, forward_fixed_point, indicator_symbols,
                             io_vectors, iterates, matrix_power_is_zero, nilpotency_index, symbol)
from nwdag.builders import TwoLayerParams, build, build_densenet, build_resnet, build_two_layer
from nwdag.dag import FIXED, NONLINEAR, PARAM, Edge, NonlinearDag, NumericError, random_dag
from nwdag.pathnorm import edge_counts


def entries(m):
    c = m.tocoo()
    return {(int(i) + 1, int(j) + 1): float(v) for i, j, v in zip(c.row, c.col, c.data)}


def test_symbol_two_layer(tiny_net):
    dag, theta = tiny_net
    assert entries(symbol(dag, theta, 3.0, absolute=True)) == {(3, 1): 0.5, (3, 2): 1.0, (4, 3): 3.0, (5, 4): 2.0}


def test_symbol_zero():
    dag, _ = build_two_layer(3, 4)
    assert symbol(dag, np.zeros(dag.n_params), 0.0).nnz == 0


def test_symbol_resnet_identity_blocks():
    d, D, m = 2, 3, 2
    dag, theta = build_resnet(d, D, m, 1)
    a = symbol(dag, theta, 1.0).toarray()
    # layout: inputs 1-2 | h0 3-5 | pre 6-7 | relu 8-9 | h1 10-12 | out 13
    assert np.array_equal(a[9:12, 2:5], np.eye(D))


def test_symbol_strictly_lower_and_sparse_pattern():
    dag, theta = random_dag(np.random.default_rng(3))
    a = symbol(dag, theta, 1.7).toarray()
    assert np.all(np.triu(a) == 0)
    positions = {(e.dst, e.src) for e in dag.edges}
    assert set(entries(sp.csr_matrix(a))) <= positions


def test_indicator_counts():
    dag, _ = build_densenet(2, 3, 1, 3, 2)
    c = edge_counts(dag)
    p, f, n = indicator_symbols(dag)
    assert (p.sum(), f.sum(), n.sum()) == (c.n_para, c.n_fix, c.n_non)


def test_io_vectors():
    dag, _ = build_two_layer(3, 2)
    one_in, one_out, p0 = io_vectors(dag)
    assert one_in.sum() == 3 and one_out.sum() == 1 and one_out[-1] == 1
    assert np.array_equal((p0 @ p0).toarray(), p0.toarray())


def test_apply_operator_examples(tiny_net):
    dag, theta = tiny_net
    assert apply_operator(dag, theta, np.zeros(5)).tolist() == [0] * 5
    assert apply_operator(dag, theta, np.array([1.0, 1, 0, 0, 0])).tolist() == [0, 0, -0.5, 0, 0]
    assert apply_operator(dag, theta, np.array([0, 0, -0.5, 0, 0])).tolist() == [0] * 5


def test_matrix_power_examples(tiny_net):
    dag, theta = tiny_net
    a = symbol(dag, theta, 1.0)
    assert not matrix_power_is_zero(a, 3)
    assert matrix_power_is_zero(a, 4)
    assert matrix_power_is_zero(sp.csr_matrix((4, 4)), 1)
    tri = sp.csr_matrix(np.tril(np.random.default_rng(0).random((6, 6)), -1))
    assert matrix_power_is_zero(tri, 6)


def test_nilpotency_examples(tiny_net):
    assert nilpotency_index(tiny_net[0]) == 4
    assert nilpotency_index(NonlinearDag(3, 2)) == 1
    dag, theta = build_densenet(2, 3, 1, 3, 2)
    s0 = nilpotency_index(dag)
    ones = symbol(dag, np.ones(dag.n_params), 1.0)
    assert matrix_power_is_zero(ones, s0) and not matrix_power_is_zero(ones, s0 - 1)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5.0))
def test_nilpotency_property(seed, xi):
    dag, theta = random_dag(np.random.default_rng(seed))
    s0 = nilpotency_index(dag)
    a = symbol(dag, theta, xi)
    assert s0 <= dag.n
    assert matrix_power_is_zero(a, s0)
    if a.nnz and s0 > 1:
        # generic weights: no cancellation along the longest path
        assert not matrix_power_is_zero(symbol(dag, np.ones(dag.n_params), 1.0, absolute=True), s0 - 1)


def test_forward_example(tiny_net):
    fp = forward_fixed_point(*tiny_net, np.array([2.0, 0.0]))
    assert fp.output == 2.0 and fp.steps <= 4


@given(st.integers(0, 2**32 - 1))
def test_zero_input_gives_zero(seed):
    dag, theta = random_dag(np.random.default_rng(seed))
    assert forward_fixed_point(dag, theta, np.zeros(dag.d)).output == 0.0


@given(st.integers(0, 2**32 - 1))
def test_fixed_point_matches_level_sweep(seed):
    rng = np.random.default_rng(seed)
    dag, theta = random_dag(rng)
    x = rng.uniform(-1, 1, dag.d)
    fp = forward_fixed_point(dag, theta, x)
    out, h = evaluate(dag, theta, x, states=True)
    assert fp.steps <= nilpotency_index(dag) <= dag.n
    np.testing.assert_allclose(fp.z, h[:, 0], rtol=1e-12, atol=1e-12)
    # stationary: one more application changes nothing
    z0 = np.zeros(dag.n)
    z0[: dag.d] = x
    assert np.array_equal(z0 + apply_operator(dag, theta, fp.z), fp.z)


@given(st.integers(0, 2**32 - 1))
def test_contraction(seed):
    rng = np.random.default_rng(seed)
    dag, theta = random_dag(rng)
    x = rng.uniform(-2, 2, dag.d)
    s0 = nilpotency_index(dag)
    zs = iterates(dag, theta, x, s0 + 1)
    a_abs = symbol(dag, theta, 1.0, absolute=True)
    v = np.abs(zs[1] - zs[0])
    for s in range(s0 + 1):
        assert np.all(np.abs(zs[s + 1] - zs[s]) <= v + 1e-12)
        v = a_abs @ v


def test_homogeneity_two_layer():
    rng = np.random.default_rng(5)
    p = TwoLayerParams.random(rng, 3, 4)
    dag, theta = build_two_layer(3, 4, p)
    x = rng.random(3)
    for lam in (0.0, 0.5, 3.0):
        assert evaluate(dag, theta, lam * x) == pytest.approx(lam * evaluate(dag, theta, x), rel=1e-12, abs=1e-15)


def test_non_finite_input_raises(tiny_net):
    with pytest.raises(NumericError):
        forward_fixed_point(*tiny_net, np.array([np.inf, 0.0]))


def test_overflow_raises():
    dag = NonlinearDag(4, 1, (Edge(2, 1, PARAM), Edge(3, 2, PARAM), Edge(4, 3, PARAM)))
    with pytest.raises(NumericError):
        forward_fixed_point(dag, np.array([1e200, 1e200, 1e200]), np.array([1.0]))
    with pytest.raises(NumericError):
        evaluate(dag, np.array([1e200, 1e200, 1e200]), np.array([1.0]))


def test_bad_input_shape(tiny_net):
    with pytest.raises(ValueError):
        forward_fixed_point(*tiny_net, np.zeros(3))


def test_batched_evaluate_matches_pointwise():
    rng = np.random.default_rng(1)
    dag, theta = build("densenet", (2, 3, 1, 2, 2), None)
    theta = rng.normal(size=dag.n_params)
    xs = rng.random((7, 2))
    batch = evaluate(dag, theta, xs)
    assert np.allclose(batch, [forward_fixed_point(dag, theta, x).output for x in xs], rtol=1e-12, atol=1e-14)
