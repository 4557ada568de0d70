import numpy as np
import pytest
from hypothesis import given, strategies as st

from nwdag.builders import build, build_densenet, build_resnet
from nwdag.dag import (FIXED, NONLINEAR, PARAM, Edge, InvalidDagError, NonlinearDag,
                       canonical_param_order, param_dict, param_vector, random_dag,
                       topological_nodes, validate)
from nwdag.io import DagFormatError, dumps, load_dag, loads, save_dag


def test_builder_output_is_valid(tiny_net):
    assert validate(tiny_net[0]) == []


def test_backward_edge_is_one_ordering_violation():
    dag = NonlinearDag(5, 2, (Edge(3, 1, PARAM), Edge(3, 5, PARAM), Edge(5, 3, PARAM)))
    problems = validate(dag)
    assert [p for p in problems if p.startswith("ordering")] and len(problems) == 1


def test_duplicate_position_is_one_violation():
    dag = NonlinearDag(4, 1, (Edge(4, 1, PARAM), Edge(4, 1, FIXED, 1.0)))
    problems = validate(dag)
    assert len(problems) == 1 and problems[0].startswith("duplicate")


@pytest.mark.parametrize("edges, prefix", [
    ((Edge(2, 1, PARAM),), "source"),
    ((Edge(3, 1, FIXED),), "weight"),
    ((Edge(3, 1, NONLINEAR, 2.0),), "weight"),
    ((Edge(3, 1, PARAM), Edge(7, 3, PARAM)), "range"),
    ((Edge(3, 1, PARAM),), None),
])
def test_violation_kinds(edges, prefix):
    dag = NonlinearDag(3, 2, edges) if prefix != "range" else NonlinearDag(4, 2, edges)
    problems = validate(dag)
    if prefix is None:
        assert problems == []
    else:
        assert any(p.startswith(prefix) for p in problems)


def test_unreachable_sink():
    dag = NonlinearDag(4, 2, (Edge(3, 1, PARAM),))
    assert validate(dag)[0].startswith("reachability")


def test_size_bounds():
    with pytest.raises(InvalidDagError):
        topological_nodes(NonlinearDag(1, 1))
    assert validate(NonlinearDag(2, 0)) != []


def test_param_order_two_layer(tiny_net):
    assert canonical_param_order(tiny_net[0]) == [(3, 1), (3, 2), (5, 4)]


def test_param_order_resnet_minimal():
    # d=1 needs D >= 2; layout: x1 | h0 (2,3) | pre 4 | relu 5 | h1 (6,7) | out 8
    dag, _ = build_resnet(1, 2, 1, 1)
    assert canonical_param_order(dag) == [(2, 1), (3, 1), (4, 2), (4, 3), (6, 5), (7, 5), (8, 6), (8, 7)]


def test_no_param_edges():
    dag = NonlinearDag(3, 1, (Edge(2, 1, FIXED, 1.0), Edge(3, 2, NONLINEAR)))
    assert canonical_param_order(dag) == []


def test_topological_nodes():
    assert topological_nodes(NonlinearDag(5, 2, (Edge(5, 1, PARAM),))) == [1, 2, 3, 4, 5]
    dag, _ = build_densenet(2, 3, 1, 3, 2)
    nodes = topological_nodes(dag)
    assert nodes == list(range(1, dag.n + 1))


def test_edge_order_does_not_matter():
    edges = [Edge(4, 2, PARAM), Edge(3, 1, PARAM), Edge(4, 3, NONLINEAR), Edge(5, 4, PARAM), Edge(5, 1, PARAM)]
    a = NonlinearDag(5, 2, tuple(edges))
    b = NonlinearDag(5, 2, tuple(reversed(edges)))
    assert a.param_order == b.param_order == ((3, 1), (4, 2), (5, 1), (5, 4))


@given(st.integers(0, 2**32 - 1))
def test_random_dags_valid_and_slot_roundtrip(seed):
    dag, theta = random_dag(np.random.default_rng(seed))
    assert validate(dag) == []
    assert all(e.src < e.dst for e in dag.edges)
    assert np.array_equal(param_vector(dag, param_dict(dag, theta)), theta)


# ---- interchange format


@pytest.mark.parametrize("arch, dims", [("two_layer", (2, 3)), ("fc", (3, 2, 2)),
                                        ("resnet", (2, 3, 2, 2)), ("densenet", (2, 3, 1, 2, 2))])
def test_roundtrip_bit_identical(arch, dims, tmp_path):
    rng = np.random.default_rng(0)
    dag, _ = build(arch, dims)
    theta = rng.normal(size=dag.n_params) * 1e3 ** rng.uniform(-1, 1, dag.n_params)
    path = tmp_path / "net.dag"
    save_dag(path, dag, theta)
    dag2, theta2 = load_dag(path)
    assert dag2 == dag
    assert theta2.tobytes() == theta.tobytes()
    assert dumps(dag2, theta2) == path.read_text()


@given(st.integers(0, 2**32 - 1))
def test_roundtrip_random(seed):
    dag, theta = random_dag(np.random.default_rng(seed))
    dag2, theta2 = loads(dumps(dag, theta))
    assert dag2 == dag and np.array_equal(theta2, theta)


def test_backward_edge_parses_then_fails_validation():
    dag, _ = loads("nwdag v1 N=5 d=2\n3 5 param 1.0\n5 3 param 1.0\n")
    assert any(p.startswith("ordering") for p in validate(dag))


@pytest.mark.parametrize("text, line", [
    ("", 1),
    ("nwdag v1 N=5 d=2\n3 1 param\n", 2),
    ("# comment\nnwdag v1 N=5 d=2\n3 1 param 1\n4 3 nonlinear 2\n", 4),
    ("nwdag v1 N=5 d=2\n3 1 banana 1\n", 2),
    ("nwdag v1 N=5 d=2\n3 1 fixed x\n", 2),
    ("nwdag v2 N=5 d=2\n", 1),
    ("nwdag v1 N=5 d=2\n3\n", 2),
])
def test_format_errors_report_line(text, line):
    with pytest.raises(DagFormatError) as info:
        loads(text)
    assert info.value.lineno == line


def test_comments_and_blank_lines():
    dag, theta = loads("nwdag v1 N=4 d=1  # header\n\n2 1 param 0.5\n3 2 nonlinear\n4 3 fixed -2 # relay\n")
    assert validate(dag) == [] and theta.tolist() == [0.5]
