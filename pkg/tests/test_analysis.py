import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bftlearn.analysis import (
    ExtractionError,
    TransitionMatrix,
    collect_source_components,
    empirical_beta,
    extract_transition_matrix,
    is_block_diagonal,
    lemma1_window_check,
    lemma3_statistic,
    log_likelihood_series,
    phi_product,
    psi_reconstruction_check,
    psi_trace,
)
from bftlearn.observation import StateSpace, compute_C0, h_value
from bftlearn.geometry import TverbergResult
from bftlearn.protocol import AdversaryStrategy, AgentRound, RoundRecord, World, step_round
from bftlearn.topology import DirectedGraph, Scenario, enumerate_reduced_graphs

from conftest import binary_model, complete_scenario, uniform_model


def simulate(scenario, model, T, seed=0, strategies=None, state=None):
    state = state or StateSpace.of_size(scenario.state_count, 0)
    w = World.create(scenario, model, state, strategies, seed=seed)
    agents = w.honest
    beliefs = [w.beliefs()]
    signals, mats, recs = [], {}, []
    for t in range(1, T + 1):
        rec = step_round(w)
        recs.append(rec)
        mats[t] = extract_transition_matrix(rec, beliefs[-1])
        beliefs.append(w.beliefs())
        signals.append([rec.agents[i].signal for i in agents])
    return agents, np.array(beliefs), np.array(signals), mats, recs


def random_stochastic(rng, n):
    x = rng.random((n, n))
    return x / x.sum(axis=1, keepdims=True)


def test_extraction_f0_closed_form_on_sparse_graph():
    # in-degrees differ per node, so do the closed-form weights
    g = DirectedGraph(4, frozenset({(0, 1), (2, 1), (3, 1), (1, 0), (0, 2), (2, 3)}))
    s = Scenario(g, frozenset(), 0, 2)
    _, _, _, mats, _ = simulate(s, binary_model(4), 5)
    for mat in mats.values():
        for i in range(4):
            nbrs = g.in_neighbors(i)
            expected = np.zeros(4)
            expected[i] = 2 / (len(nbrs) + 2)
            expected[nbrs] = 1 / (len(nbrs) + 2)
            assert np.max(np.abs(mat.entries[i] - expected)) <= 1e-9
        assert mat.residual <= 1e-7


def test_extraction_single_agent():
    s = Scenario(DirectedGraph(1), frozenset(), 0, 2)
    _, _, _, mats, _ = simulate(s, binary_model(1), 3)
    for mat in mats.values():
        assert np.array_equal(mat.entries, np.ones((1, 1)))


def test_extraction_byzantine_rounds(scenario_a_cfg):
    cfg = scenario_a_cfg
    for kind in ("split_equivocate", "constant_push", "random_noise"):
        strat = {4: AdversaryStrategy(kind, theta_bad=1, magnitude=10.0, scale=3.0)}
        _, _, _, mats, _ = simulate(cfg.scenario, cfg.model, 40, seed=5, strategies=strat)
        for mat in mats.values():
            assert mat.entries.min() >= 0
            assert np.max(np.abs(mat.entries.sum(axis=1) - 1)) <= 1e-9
            assert mat.residual <= 1e-6
            assert mat.agents == (0, 1, 2, 3)


def _fake_round(point, subset):
    z = TverbergResult(np.asarray(point, dtype=float), ((0,), (1,)), (np.ones(1), np.ones(1)))
    x = np.log([0.5, 0.5])
    eta = (x + z.point) / 2
    ar = AgentRound(0, x, ((3, np.zeros(2)),), (subset,), (z,), eta, 0, eta)
    return RoundRecord(1, {0: ar}, {3: {0: np.zeros(2)}}), {0: x}


def test_extraction_flags_points_outside_honest_hull():
    # a certificate that only holds if agent 3 were honest: more than f faulty senders
    rec, prev = _fake_round([0.0, 0.0], (0, 3))
    with pytest.raises(ExtractionError, match="outside the hull"):
        extract_transition_matrix(rec, prev)
    rec, prev = _fake_round([0.0, 0.0], (3,))
    with pytest.raises(ExtractionError, match="no non-faulty member"):
        extract_transition_matrix(rec, prev)
    rec, prev = _fake_round(np.log([0.5, 0.5]), (0, 3))
    assert np.array_equal(extract_transition_matrix(rec, prev).entries, [[1.0]])


def test_phi_conventions():
    rng = np.random.default_rng(0)
    mats = {t: random_stochastic(rng, 3) for t in range(1, 6)}
    assert np.array_equal(phi_product(mats, 4, 5).entries, np.eye(3))
    assert np.array_equal(phi_product(mats, 4, 4).entries, mats[4])
    p = phi_product(mats, 5, 1).entries
    assert np.allclose(p, mats[5] @ mats[4] @ mats[3] @ mats[2] @ mats[1])
    with pytest.raises(KeyError):
        phi_product({1: mats[1], 3: mats[3]}, 3, 1)
    with pytest.raises(ValueError):
        phi_product(mats, 3, 5)
    with pytest.raises(ValueError):
        phi_product(mats, 3, 0)


def test_phi_two_by_two_row_sums():
    a = np.array([[0.3, 0.7], [0.5, 0.5]])
    b = np.array([[1.0, 0.0], [0.2, 0.8]])
    p = phi_product({1: a, 2: b}, 2, 1)
    assert np.allclose(p.entries.sum(axis=1), 1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 8))
def test_phi_associativity_and_stochasticity(seed, n, t):
    rng = np.random.default_rng(seed)
    mats = {k: random_stochastic(rng, n) for k in range(1, t + 1)}
    r = int(rng.integers(1, t + 1))
    s = int(rng.integers(r, t + 1))
    whole = phi_product(mats, t, r).entries
    split = phi_product(mats, t, s + 1).entries @ phi_product(mats, s, r).entries
    assert np.max(np.abs(whole - split)) <= 1e-9
    assert np.max(np.abs(whole.sum(axis=1) - 1)) <= 1e-9
    assert whole.min() >= 0


def test_transition_matrices_from_run_are_stochastic(scenario_a_cfg):
    cfg = scenario_a_cfg
    _, _, _, mats, _ = simulate(cfg.scenario, cfg.model, 30, strategies=cfg.strategies)
    for t in (1, 10, 30):
        p = phi_product(mats, t, 1).entries
        assert np.max(np.abs(p.sum(axis=1) - 1)) <= 1e-9


def test_empirical_beta_examples():
    s = Scenario(DirectedGraph(3), frozenset(), 0, 2)
    graphs, _ = enumerate_reduced_graphs(s, 10)
    res = empirical_beta(np.eye(3), graphs)
    assert res.beta == 1.0 and res.graph_index == 0

    n = 4
    sc = complete_scenario(n)
    graphs, _ = enumerate_reduced_graphs(sc, 10)
    a = (np.ones((n, n)) + np.eye(n)) / (n + 1)
    assert empirical_beta(a, graphs).beta == pytest.approx(1 / (n - 1 + 2))

    a0 = a.copy()
    a0[0, 1] = 0.0
    assert empirical_beta(a0, graphs).beta == 0.0 and empirical_beta(a0, graphs).graph is None
    with pytest.raises(ValueError):
        empirical_beta(a, [])


def test_empirical_beta_picks_best_reduced_graph():
    s = complete_scenario(4, (3,), 1, 1)
    graphs, _ = enumerate_reduced_graphs(s, 100)
    a = np.array([[0.5, 0.5, 0.0], [0.0, 0.6, 0.4], [0.3, 0.0, 0.7]])
    res = empirical_beta(TransitionMatrix(1, a, 0.0, (0, 1, 2)), graphs)
    assert res.beta == pytest.approx(0.3)
    assert res.graph.kept_edges == frozenset({(1, 0), (2, 1), (0, 2)})


def test_window_check_identity_singletons():
    s = Scenario(DirectedGraph(3), frozenset(), 0, 2)
    graphs, _ = enumerate_reduced_graphs(s, 10)
    rows = lemma1_window_check(np.eye(3), graphs, 0.5)
    assert [r.component for r in rows] == [(0,), (1,), (2,)]
    assert all(r.passed and r.min_entry == 1.0 for r in rows)


def test_window_check_connected_run_whole_graph_witness():
    n = 4
    s = complete_scenario(n)
    _, _, _, mats, _ = simulate(s, binary_model(n), 30)
    graphs, _ = enumerate_reduced_graphs(s, 10)
    rows = lemma1_window_check(phi_product(mats, 30, 1), graphs, 1 / n)
    assert all(r.passed and r.component == (0, 1, 2, 3) for r in rows)


def test_window_check_disconnected_run_uses_own_part(scenario_b_cfg):
    cfg = scenario_b_cfg
    _, _, _, mats, _ = simulate(cfg.scenario, cfg.model, 20)
    graphs, _ = enumerate_reduced_graphs(cfg.scenario, 10)
    phi = phi_product(mats, 20, 1).entries
    assert is_block_diagonal(phi, [[0, 1, 2], [3, 4, 5]])
    rows = lemma1_window_check(phi, graphs, 1e-4)
    for r in rows:
        part = {0, 1, 2} if r.agent < 3 else {3, 4, 5}
        assert set(r.component) == part and r.passed


def test_collect_source_components_first_graph():
    s = Scenario(DirectedGraph(3, frozenset({(0, 1), (1, 2)})), frozenset(), 0, 2)
    graphs, _ = enumerate_reduced_graphs(s, 10)
    assert collect_source_components(graphs) == {frozenset({0}): 0}


def test_psi_trace_examples():
    b = np.log(np.array([[[0.5, 0.5]], [[0.5, 0.5]]]))
    assert np.array_equal(psi_trace(b, 0, 1, 0).values, [0.0])
    b = np.log(np.array([[[0.5, 0.5]], [[0.9, 0.1]]]))
    assert psi_trace(b, 0, 1, 0).values[0] == pytest.approx(math.log(1 / 9))


def test_psi_trace_converged_run(scenario_a_cfg):
    cfg = scenario_a_cfg
    _, beliefs, _, _, _ = simulate(cfg.scenario, cfg.model, 300, strategies=cfg.strategies)
    for k in range(beliefs.shape[1]):
        tr = psi_trace(beliefs, k, 1, 0)
        assert np.allclose(tr.values, beliefs[1:, k, 1] - beliefs[1:, k, 0], atol=1e-10)
        assert tr.values[-1] <= math.log(0.01 / 0.99)


def test_psi_reconstruction_single_agent():
    s = Scenario(DirectedGraph(1), frozenset(), 0, 2)
    model = binary_model(1)
    agents, beliefs, signals, mats, _ = simulate(s, model, 60)
    ll = log_likelihood_series(model, signals, agents)
    assert psi_reconstruction_check(beliefs, ll, mats, 0) <= 1e-6
    # the double sum collapses to a sum of cumulative ratios
    S = np.cumsum(ll[:, 0, :] - ll[:, 0, :1], axis=0)
    direct = np.cumsum(S, axis=0)
    assert np.allclose(beliefs[1:, 0, 1] - beliefs[1:, 0, 0], direct[:, 1], atol=1e-9)


def test_psi_reconstruction_two_agents():
    s = complete_scenario(2)
    model = binary_model(2)
    agents, beliefs, signals, mats, _ = simulate(s, model, 10, seed=3)
    ll = log_likelihood_series(model, signals, agents)
    assert psi_reconstruction_check(beliefs, ll, mats, 0) <= 1e-6


def test_psi_reconstruction_zero_information():
    s = complete_scenario(3)
    model = uniform_model(3, 2)
    agents, beliefs, signals, mats, _ = simulate(s, model, 10)
    ll = log_likelihood_series(model, signals, agents)
    assert np.all(beliefs[:, :, 1] - beliefs[:, :, 0] == 0)
    assert psi_reconstruction_check(beliefs, ll, mats, 0) == 0.0
    q = lemma3_statistic(ll, mats, 1, 0, model, agents)
    assert np.all(q == 0)


def test_centred_statistic_recursion_matches_double_sum(scenario_a_cfg):
    cfg = scenario_a_cfg
    agents, beliefs, signals, mats, _ = simulate(cfg.scenario, cfg.model, 40, strategies=cfg.strategies)
    ll = log_likelihood_series(cfg.model, signals, agents)
    ts = [1, 5, 17, 40]
    a = lemma3_statistic(ll, mats, 1, 0, cfg.model, agents, ts)
    b = lemma3_statistic(ll, mats, 1, 0, cfg.model, agents, ts, direct=True)
    assert np.allclose(a, b, rtol=1e-9, atol=1e-12)


def test_centred_statistic_single_agent_two_range_bound():
    s = Scenario(DirectedGraph(1), frozenset(), 0, 2)
    model = binary_model(1)
    agents, _, signals, mats, _ = simulate(s, model, 3000, seed=9)
    ll = log_likelihood_series(model, signals, agents)
    c0 = compute_C0(model)
    H = h_value(model, 0, 1, 0)
    L = ll[:, 0, 1] - ll[:, 0, 0]
    S = np.cumsum(L)
    r = np.arange(1, len(L) + 1)
    dev = np.abs(S / r - H)
    ts = [100, 500, 1000, 2000, 3000]
    q = lemma3_statistic(ll, mats, 1, 0, model, agents, ts)[:, 0]
    for k, t in enumerate(ts):
        root = int(math.isqrt(t))
        eps_half = dev[root:t].max()
        assert q[k] <= c0 * (1 / t + t**-1.5) + eps_half / 2 + 1e-12
    assert q[-1] < q[0]


def test_block_diagonal_check():
    a = np.array([[0.5, 0.5, 0, 0], [1, 0, 0, 0], [0, 0, 0.2, 0.8], [0, 0, 1, 0]])
    assert is_block_diagonal(a, [[0, 1], [2, 3]])
    a[0, 2] = 1e-3
    assert not is_block_diagonal(a, [[0, 1], [2, 3]])
    assert is_block_diagonal(a, [[0, 1], [2, 3]], tol=1e-2)
