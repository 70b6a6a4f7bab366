import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from bftlearn.topology import (
    DirectedGraph,
    Scenario,
    check_reachability_condition,
    count_reduced_graphs,
    enumerate_reduced_graphs,
    iter_reduced_graphs,
    source_components,
    strongly_connected_components,
)


def _reach(n, edges):
    """Transitive closure by repeated squaring of a boolean matrix; oracle only."""
    r = [[i == j for j in range(n)] for i in range(n)]
    for u, v in edges:
        r[u][v] = True
    for k in range(n):
        for i in range(n):
            if r[i][k]:
                for j in range(n):
                    if r[k][j]:
                        r[i][j] = True
    return r


def scc_oracle(n, edges):
    r = _reach(n, edges)
    groups = {}
    for i in range(n):
        key = frozenset(j for j in range(n) if r[i][j] and r[j][i])
        groups[key] = True
    return sorted(groups, key=min)


def source_oracle(n, edges):
    comps = scc_oracle(n, edges)
    out = []
    for c in comps:
        if not any(u not in c and v in c for u, v in edges):
            out.append(c)
    return out


digraphs = st.integers(1, 12).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] != e[1]), max_size=40),
    )
)


def test_three_cycle_single_component():
    g = DirectedGraph(3, frozenset({(0, 1), (1, 2), (2, 0)}))
    assert strongly_connected_components(g) == [frozenset({0, 1, 2})]


def test_chain_singletons():
    g = DirectedGraph(3, frozenset({(0, 1), (1, 2)}))
    assert strongly_connected_components(g) == [frozenset({0}), frozenset({1}), frozenset({2})]
    assert [c.members for c in source_components(g)] == [frozenset({0})]
    assert check_reachability_condition(g)


def test_two_disjoint_two_cycles():
    edges = frozenset({(0, 1), (1, 0), (2, 3), (3, 2)})
    g = DirectedGraph(4, edges)
    got = strongly_connected_components(g)
    assert got == scc_oracle(4, edges) == [frozenset({0, 1}), frozenset({2, 3})]
    assert [c.members for c in source_components(g)] == got


def test_cycle_with_pendant():
    edges = frozenset({(0, 1), (1, 2), (2, 0), (2, 3)})
    g = DirectedGraph(4, edges)
    assert [c.members for c in source_components(g)] == [frozenset({0, 1, 2})]
    assert source_oracle(4, edges) == [frozenset({0, 1, 2})]


def test_edgeless_graph_every_singleton_is_source():
    g = DirectedGraph(3)
    assert len(source_components(g)) == 3
    assert check_reachability_condition(g)


def test_random_six_node_reachability():
    rng = random.Random(7)
    edges = frozenset((u, v) for u in range(6) for v in range(6) if u != v and rng.random() < 0.3)
    assert check_reachability_condition(DirectedGraph(6, edges))


@settings(max_examples=1000, deadline=None)
@given(digraphs)
def test_scc_and_sources_match_oracle(data):
    n, edges = data
    g = DirectedGraph(n, frozenset(edges))
    comps = strongly_connected_components(g)
    assert comps == scc_oracle(n, edges)
    assert sorted(set().union(*comps)) == list(range(n))
    srcs = source_components(g)
    assert srcs, "a non-empty graph always has a source component"
    assert [c.members for c in srcs] == source_oracle(n, edges)
    assert check_reachability_condition(g)


@settings(max_examples=200, deadline=None)
@given(digraphs, st.randoms(use_true_random=False))
def test_source_components_permutation_equivariant(data, rnd):
    n, edges = data
    perm = list(range(n))
    rnd.shuffle(perm)
    g = DirectedGraph(n, frozenset(edges))
    h = g.relabel(perm)
    inv = {perm[v]: v for v in range(n)}
    back = sorted((frozenset(inv[v] for v in c.members) for c in source_components(h)), key=min)
    assert back == [c.members for c in source_components(g)]


def test_graph_validation():
    with pytest.raises(ValueError):
        DirectedGraph(2, frozenset({(0, 0)}))
    with pytest.raises(ValueError):
        DirectedGraph(2, frozenset({(0, 2)}))
    with pytest.raises(ValueError):
        Scenario(DirectedGraph.complete(3), frozenset({0, 1}), 1, 2)


def test_graph_dict_round_trip():
    g = DirectedGraph(3, frozenset({(0, 1), (2, 1)}))
    assert DirectedGraph.from_dict(g.to_dict()) == g
    assert DirectedGraph.from_dict({"n": 4, "complete": True}) == DirectedGraph.complete(4)


def test_f_zero_single_reduced_graph():
    s = Scenario(DirectedGraph(3, frozenset({(0, 1), (1, 2)})), frozenset(), 0, 2)
    graphs, exhaustive = enumerate_reduced_graphs(s, 10)
    assert exhaustive and len(graphs) == 1
    assert graphs[0].kept_edges == s.graph.edges
    assert count_reduced_graphs(s) == 1


def test_three_node_example_four_graphs():
    s = Scenario(DirectedGraph.complete(3), frozenset({2}), 1, 1)
    graphs, exhaustive = enumerate_reduced_graphs(s, 100)
    assert exhaustive and len(graphs) == 4 == count_reduced_graphs(s)
    assert len({h.kept_edges for h in graphs}) == 4


def test_four_node_example_sixty_four_graphs():
    s = Scenario(DirectedGraph.complete(4), frozenset({3}), 1, 2)
    # per kept node: in-degree 2 within N, drop 0, 1 or 2 links -> 1 + 2 + 1 choices
    oracle = 1
    for _ in range(3):
        oracle *= sum(1 for k in range(3) for _ in itertools.combinations(range(2), k))
    graphs, exhaustive = enumerate_reduced_graphs(s, 10**6)
    assert oracle == 64 == len(graphs) == count_reduced_graphs(s)
    assert exhaustive
    for h in graphs:
        assert 3 not in h.kept_nodes
        assert all(3 not in e for e in h.kept_edges)


def test_enumeration_cap():
    s = Scenario(DirectedGraph.complete(4), frozenset({3}), 1, 2)
    graphs, exhaustive = enumerate_reduced_graphs(s, 10)
    assert len(graphs) == 10 and not exhaustive
    with pytest.raises(ValueError):
        enumerate_reduced_graphs(s, 0)
    with pytest.raises(OverflowError):
        count_reduced_graphs(s, max_count=10)


scenarios = st.integers(2, 6).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] != e[1]), max_size=12),
        st.sets(st.integers(0, n - 1), max_size=1),
        st.integers(0, 1),
        st.integers(1, 2),
    )
)


@settings(max_examples=150, deadline=None)
@given(scenarios)
def test_reduced_graph_invariants(data):
    n, edges, faulty, f, m = data
    f = max(f, len(faulty))
    s = Scenario(DirectedGraph(n, frozenset(edges)), frozenset(faulty), f, m)
    count = count_reduced_graphs(s)
    graphs, exhaustive = enumerate_reduced_graphs(s, 5000)
    if count <= 5000:
        assert exhaustive and len(graphs) == count
        assert len({h.kept_edges for h in graphs}) == count
    kept = set(s.non_faulty)
    for h in graphs:
        assert set(h.kept_nodes) == kept
        for v in h.kept_nodes:
            orig = sum(1 for u in s.graph.in_neighbors(v) if u in kept)
            now = sum(1 for u, w in h.kept_edges if w == v)
            assert now >= orig - m * f
        assert all(u in kept and v in kept for u, v in h.kept_edges)
        assert h.kept_edges <= s.graph.edges


def test_iteration_order_is_deterministic():
    s = Scenario(DirectedGraph.complete(4), frozenset({3}), 1, 2)
    a = [h.kept_edges for h in iter_reduced_graphs(s)]
    b = [h.kept_edges for h in iter_reduced_graphs(s)]
    assert a == b
    assert a[0] == frozenset(e for e in s.graph.edges if 3 not in e)
