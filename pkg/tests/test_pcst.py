import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphstoiht.graph import Graph, GraphError, connected_component_count, grid_graph
from graphstoiht.pcst import PcstInstance, penalty, solve_pcst

from oracles import pcst_optimum, random_small_graph


def _two_nodes(p0, p1, cost=1.0):
    return Graph(2, np.array([[0, 1]]), np.array([cost])), np.array([p0, p1])


def test_single_node():
    g = Graph(1, np.zeros((0, 2), dtype=int), np.zeros(0))
    inst = PcstInstance(g, np.array([5.0]))
    f = solve_pcst(inst)
    assert f.nodes.tolist() == [0]
    assert penalty(inst, f) == 0.0


def test_two_nodes_joined():
    g, prizes = _two_nodes(3, 3)
    inst = PcstInstance(g, prizes)
    f = solve_pcst(inst)
    assert f.nodes.tolist() == [0, 1] and f.edges.tolist() == [0]
    assert penalty(inst, f) == pytest.approx(1.0)


def test_two_nodes_cheap_side_dropped():
    g, prizes = _two_nodes(3, 0.5)
    inst = PcstInstance(g, prizes)
    f = solve_pcst(inst)
    assert f.nodes.tolist() == [0] and len(f.edges) == 0
    assert penalty(inst, f) == pytest.approx(0.5)


@pytest.mark.parametrize("p0,p1,cost", [(3, 3, 1), (3, 0.5, 1), (0.2, 0.3, 1), (1, 1, 1.9),
                                        (1, 1, 2.1), (0, 0, 1), (2, 0, 0.5)])
def test_two_node_cases_exact(p0, p1, cost):
    g, prizes = _two_nodes(p0, p1, cost)
    inst = PcstInstance(g, prizes)
    assert penalty(inst, solve_pcst(inst)) == pytest.approx(pcst_optimum(g, prizes, 1))


def test_validation():
    g = grid_graph(2, 2)
    with pytest.raises(GraphError):
        PcstInstance(g, np.ones(3))
    with pytest.raises(GraphError):
        PcstInstance(g, -np.ones(4))
    with pytest.raises(GraphError):
        PcstInstance(g, np.ones(4), target_components=0)
    with pytest.raises(GraphError):
        PcstInstance(g, np.ones(4), cost_scale=0.0)


def _check_forest(inst, f):
    g = inst.graph
    nodes = set(f.nodes.tolist())
    for e in f.edges:
        assert g.edges[e, 0] in nodes and g.edges[e, 1] in nodes
    # acyclic: a forest on k nodes with c trees has k - c edges
    parent = list(range(g.num_nodes))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    for e in f.edges:
        ra, rb = find(g.edges[e, 0]), find(g.edges[e, 1])
        assert ra != rb
        parent[ra] = rb
    trees = len(nodes) - len(f.edges)
    assert trees <= inst.target_components


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_two_approximation(seed, g):
    rng = np.random.default_rng(seed)
    graph = random_small_graph(rng, 8)
    prizes = rng.exponential(1.0, graph.num_nodes) * (rng.random(graph.num_nodes) < 0.8)
    inst = PcstInstance(graph, prizes, g)
    f = solve_pcst(inst)
    _check_forest(inst, f)
    assert penalty(inst, f) <= 2 * pcst_optimum(graph, prizes, g) + 1e-9


def test_objective_is_prize_minus_cost():
    rng = np.random.default_rng(1)
    g = grid_graph(5, 5)
    prizes = rng.exponential(1.0, 25)
    inst = PcstInstance(g, prizes, 2, 0.7)
    f = solve_pcst(inst)
    expected = prizes[f.nodes].sum() - 0.7 * g.weights[f.edges].sum()
    assert f.objective == pytest.approx(expected)


def test_scale_extremes():
    rng = np.random.default_rng(2)
    g = grid_graph(6, 6)
    prizes = rng.exponential(1.0, 36)
    prizes[[3, 17]] = 0.0
    positive = set(np.flatnonzero(prizes).tolist())
    small = solve_pcst(PcstInstance(g, prizes, 1, 1e-9))
    assert positive <= set(small.nodes.tolist())
    for k in (1, 3):
        big = solve_pcst(PcstInstance(g, prizes, k, 1e9))
        assert set(big.nodes.tolist()) == set(np.argsort(-prizes)[:k].tolist())
        assert len(big.edges) == 0


def test_monotone_trend_in_scale():
    rng = np.random.default_rng(4)
    g = grid_graph(8, 8)
    prizes = rng.exponential(1.0, 64)
    sizes = [len(solve_pcst(PcstInstance(g, prizes, 1, sc)).nodes)
             for sc in (1e-4, 1e-2, 1e-1, 1.0, 10.0)]
    assert sizes[0] == 64 and sizes[-1] == 1
    assert sizes == sorted(sizes, reverse=True)


def test_g_components_respected():
    rng = np.random.default_rng(5)
    g = grid_graph(8, 8)
    for k in (1, 2, 4):
        for _ in range(10):
            prizes = rng.exponential(1.0, 64) ** 3
            f = solve_pcst(PcstInstance(g, prizes, k, 0.5))
            assert connected_component_count(g, f.nodes) <= k


def test_deterministic():
    rng = np.random.default_rng(6)
    g = grid_graph(7, 7)
    prizes = np.round(rng.exponential(1.0, 49), 1)  # many ties
    a = solve_pcst(PcstInstance(g, prizes, 2, 0.3))
    b = solve_pcst(PcstInstance(g, prizes, 2, 0.3))
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.edges, b.edges)


def test_disconnected_graph():
    g = Graph(4, np.array([[0, 1], [2, 3]]), np.array([1.0, 1.0]))
    f = solve_pcst(PcstInstance(g, np.array([5.0, 5.0, 5.0, 5.0]), 1))
    assert connected_component_count(g, f.nodes) == 1
    f2 = solve_pcst(PcstInstance(g, np.array([5.0, 5.0, 5.0, 5.0]), 2))
    assert f2.nodes.tolist() == [0, 1, 2, 3]
