import numpy as np
import pytest
from hypothesis import given, strategies as st

from nwdag.adjacency import evaluate, forward_fixed_point
from nwdag.builders import (BlockSpec, DenseNetParams, FCParams, ResNetParams, TwoLayerParams,
                            build, build_block_chain, build_densenet, build_fc, build_resnet,
                            build_two_layer, decompose_sink, direct_forward, embed_pad, init_theta,
                            random_params, validate_input_assumption, validate_shortcut_form)
from nwdag.dag import FIXED, NONLINEAR, PARAM, Edge, NonlinearDag, random_dag, validate
from nwdag.pathnorm import edge_counts, path_norm

CASES = [("two_layer", (3, 4)), ("fc", (3, 4, 2, 3)), ("resnet", (2, 3, 3, 3)),
         ("densenet", (2, 3, 2, 3, 3))]


@pytest.mark.parametrize("arch, dims", CASES)
def test_builders_valid(arch, dims):
    dag, theta = build(arch, dims, random_params(arch, dims, np.random.default_rng(0)))
    assert validate(dag) == [] and validate_input_assumption(dag)
    assert theta.shape == (dag.n_params,)


@pytest.mark.parametrize("arch, dims", CASES)
def test_forward_matches_recursion(arch, dims):
    rng = np.random.default_rng(1)
    for _ in range(10):
        p = random_params(arch, dims, rng)
        dag, theta = build(arch, dims, p)
        x = rng.random(dag.d)
        want = direct_forward(arch, p, x)
        assert forward_fixed_point(dag, theta, x).output == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_two_layer_counts():
    dag, _ = build_two_layer(2, 1)
    c = edge_counts(dag)
    assert (dag.n, c.n_para, c.n_non) == (5, 3, 1)
    with pytest.raises(ValueError):
        build_two_layer(2, 0)


def test_fc_l1_equals_two_layer():
    rng = np.random.default_rng(2)
    W, a = rng.normal(size=(4, 3)), rng.normal(size=4)
    d1, t1 = build_fc((3, 4), FCParams([W], a))
    d2, t2 = build_two_layer(3, 4, TwoLayerParams(W, a))
    xs = rng.random((20, 3))
    assert np.array_equal(evaluate(d1, t1, xs), evaluate(d2, t2, xs))


def test_fc_counts():
    assert edge_counts(build_fc((3, 4, 5, 2))[0]).n_non == 11


def test_resnet_counts_and_zero():
    dag, theta = build_resnet(2, 4, 3, 5)
    assert edge_counts(dag).n_fix == 5 * 4
    assert evaluate(dag, theta, np.array([0.3, 0.9])) == 0.0
    with pytest.raises(ValueError):
        build_resnet(2, 2, 3, 1)


def test_resnet_zero_u_is_linear():
    rng = np.random.default_rng(3)
    p = ResNetParams.random(rng, 2, 3, 2, 2)
    p.Us = [np.zeros_like(U) for U in p.Us]
    x = rng.random(2)
    assert direct_forward("resnet", p, x) == pytest.approx(p.u @ p.V @ x, rel=1e-12)


def test_densenet_one_block_unrolled():
    rng = np.random.default_rng(4)
    p = DenseNetParams.random(rng, 2, 3, 2, 3, 1)
    x = rng.random(2)
    h0 = p.V @ x
    want = p.u @ np.concatenate([h0, p.Us[0] @ np.maximum(p.Ws[0] @ h0, 0)])
    assert direct_forward("densenet", p, x) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("m, L", [(2, 3), (1, 1), (3, 2), (2, 4)])
def test_densenet_n_non(m, L):
    assert edge_counts(build_densenet(2, 3, 1, m, L)[0]).n_non == L * (L + 1) * m // 2


def test_shape_mismatch():
    with pytest.raises(ValueError):
        build_two_layer(3, 2, TwoLayerParams(np.zeros((2, 2)), np.zeros(2)))
    with pytest.raises(ValueError):
        DenseNetParams(np.zeros((3, 2)), [np.zeros((2, 3)), np.zeros((2, 4))], [np.zeros((1, 2))] * 2, np.zeros(5))


def test_input_assumption_violations():
    base = [Edge(3, 2, PARAM), Edge(4, 3, NONLINEAR), Edge(5, 4, PARAM)]
    assert validate_input_assumption(NonlinearDag(5, 2, tuple(base + [Edge(3, 1, PARAM)])))
    assert not validate_input_assumption(NonlinearDag(5, 2, tuple(base + [Edge(3, 1, FIXED, 1.0)])))
    bad = [Edge(3, 1, PARAM), Edge(4, 2, NONLINEAR), Edge(5, 4, PARAM), Edge(5, 3, PARAM)]
    assert not validate_input_assumption(NonlinearDag(5, 2, tuple(bad)))


# ---- shortcut form


def test_shortcut_two_layer():
    chk = validate_shortcut_form(build_two_layer(2, 1)[0])
    assert chk.ok and chk.spec.form == 1


@pytest.mark.parametrize("d, k0, k, m, L", [(2, 3, 1, 3, 3), (1, 2, 2, 2, 2), (2, 3, 1, 3, 1), (3, 5, 3, 4, 2)])
def test_shortcut_densenet(d, k0, k, m, L):
    chk = validate_shortcut_form(build_densenet(d, k0, k, m, L)[0])
    assert chk.ok, chk.reason
    assert chk.spec.p_seq == tuple(l * m for l in range(1, L + 1))
    assert chk.spec.d_seq == tuple(k0 + l * k for l in range(L + 1))


def test_shortcut_densenet_narrow_block_fails_dimension_check():
    chk = validate_shortcut_form(build_densenet(8, 9, 2, 4, 3)[0])
    assert not chk.ok and chk.spec is not None and "p_1=4" in chk.reason


def test_shortcut_resnet():
    chk = validate_shortcut_form(build_resnet(2, 3, 4, 2)[0])
    assert chk.ok and chk.spec.d_seq == (3, 3, 3) and chk.spec.p_seq == (4, 4)


def test_shortcut_fc_rejected():
    assert not validate_shortcut_form(build_fc((2, 3, 3))[0]).ok
    assert not validate_shortcut_form(build_fc((2, 3, 3, 3))[0]).ok


def test_shortcut_permuted_skip_accepted():
    spec = BlockSpec(1, (2, 3), (2,), ((2, 0),))
    rng = np.random.default_rng(0)
    dag, _ = build_block_chain(spec, rng.random((2, 1)), [rng.random((2, 2))], [rng.random((3, 2))], rng.random(3))
    chk = validate_shortcut_form(dag)
    assert chk.ok and chk.spec.s_perms == ((2, 0),)


def test_shortcut_non_unit_skip_rejected():
    dag, theta = build_resnet(1, 2, 2, 1)
    edges = tuple(Edge(e.dst, e.src, e.kind, 2.0) if e.kind is FIXED else e for e in dag.edges)
    assert not validate_shortcut_form(NonlinearDag(dag.n, dag.d, edges)).ok


# ---- padding and decomposition


def test_embed_pad():
    rng = np.random.default_rng(6)
    dag, theta = build("densenet", (2, 3, 1, 2, 2), random_params("densenet", (2, 3, 1, 2, 2), rng))
    for extra in (1, 5):
        padded, t2 = embed_pad(dag, theta, dag.n + extra)
        assert validate(padded) == []
        xs = rng.random((30, 2))
        assert np.array_equal(evaluate(padded, t2, xs), evaluate(dag, theta, xs))
        assert path_norm(padded, t2) == pytest.approx(path_norm(dag, theta), rel=1e-12)
    with pytest.raises(ValueError):
        embed_pad(dag, theta, dag.n)


def test_decompose_two_layer(tiny_net):
    dec = decompose_sink(*tiny_net)
    assert dec.linear.tolist() == [0.0, 0.0]
    assert dec.nonlinear.tolist() == [2.0, 0.0]  # f = 2 relu(f^3); node 4 is relu(f^3) itself


def test_decompose_linear_tight():
    dag = NonlinearDag(4, 2, (Edge(3, 1, PARAM), Edge(3, 2, PARAM), Edge(4, 3, PARAM), Edge(4, 1, PARAM)))
    theta = np.array([0.5, -2.0, 3.0, 1.0])  # order (3,1),(3,2),(4,1),(4,3)
    dec = decompose_sink(dag, theta)
    assert dec.norm_lhs() == pytest.approx(path_norm(dag, theta), rel=1e-12)


def test_decompose_requires_input_assumption():
    dag = NonlinearDag(3, 1, (Edge(2, 1, FIXED, 1.0), Edge(3, 2, PARAM)))
    with pytest.raises(ValueError):
        decompose_sink(dag, np.array([1.0]))


@given(st.integers(0, 2**32 - 1))
def test_decompose_random(seed):
    rng = np.random.default_rng(seed)
    dag, theta = random_dag(rng, n_max=10, input_assumption=True)
    dec = decompose_sink(dag, theta)
    xs = rng.uniform(-1, 1, (20, dag.d))
    np.testing.assert_allclose(dec.reconstruct(xs), evaluate(dag, theta, xs), rtol=1e-9, atol=1e-9)
    assert dec.norm_lhs() <= path_norm(dag, theta) + 1e-12 * (1 + path_norm(dag, theta))


@given(st.integers(0, 2**32 - 1))
def test_subnet_norms(seed):
    rng = np.random.default_rng(seed)
    dag, theta = random_dag(rng, n_max=9, input_assumption=True)
    dec = decompose_sink(dag, theta)
    x = rng.uniform(-1, 1, dag.d)
    _, h = evaluate(dag, theta, x, states=True)
    for i in range(dag.d + 1, dag.n + 1):
        sub, t = dec.subnet(i)
        assert path_norm(sub, t) == pytest.approx(dec.node_norms[i - 1], rel=1e-12, abs=1e-300)
        assert evaluate(sub, t, x) == pytest.approx(h[i - 1, 0], rel=1e-12, abs=1e-12)


def test_init_schemes():
    dag, _ = build_two_layer(4, 3)
    assert not init_theta(dag, "zero").any()
    t = init_theta(dag, ("uniform", 2.0, 3.0), np.random.default_rng(0))
    assert t.min() >= 2 and t.max() <= 3
    t = init_theta(dag, "scaled", np.random.default_rng(0))
    fan = np.array([4 if dst <= 7 else 3 for dst, _ in dag.param_order])
    assert np.all(np.abs(t) <= 1 / np.sqrt(fan))
    with pytest.raises(ValueError):
        init_theta(dag, "he")
