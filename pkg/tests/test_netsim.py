import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extrapush import graph as G
from extrapush.netsim import (Agent, MissingMessageError, message_count, simulate_extrapush,
                              simulate_push_sum, write_message_log)
from extrapush.solver import AlgorithmConfig, run_extrapush
from conftest import small_ls


def cfg(rounds, alpha=0.05):
    return AlgorithmConfig("extrapush", alpha=alpha, max_iters=rounds)


def max_dev(a, b):
    return max(np.abs(x - y).max() for x, y in zip(a.x_history, b.x_history))


def test_matches_matrix_engine_five_node(net5, ls_exp):
    g, m, phi = net5
    obj = ls_exp.objective
    sim = simulate_extrapush(g, m, obj, cfg(100, 0.1), phi=phi, history=True)
    mat = run_extrapush(m, obj, cfg(100, 0.1), phi=phi, history=True)
    assert len(sim.x_history) == 101
    assert max_dev(sim, mat) <= 1e-12


def test_threaded_rounds_identical(net5):
    g, m, phi = net5
    obj = small_ls(5)
    a = simulate_extrapush(g, m, obj, cfg(50), phi=phi, history=True)
    b = simulate_extrapush(g, m, obj, cfg(50), phi=phi, history=True, workers=4)
    assert max_dev(a, b) == 0.0


def test_single_agent_gradient_descent():
    g = G.DirectedGraph.from_edges(1, [])
    obj = small_ls(1)
    tr = simulate_extrapush(g, np.array([[1.0]]), obj, cfg(100, 0.1), history=True)
    x = np.zeros(obj.p)
    for t in range(1, 101):
        x = x - 0.1 * obj.grad(0, x)
        assert np.abs(tr.x_history[t][0] - x).max() <= 1e-12 * (1 + np.abs(x).max())


def test_locality(net5):
    g, m, phi = net5
    tr = simulate_extrapush(g, m, small_ls(5), cfg(20), phi=phi)
    for ag in tr.agents:
        expect = tuple(j for j in g.in_neighbors(ag.id) if j != ag.id)
        assert ag.consumed == [expect] * 20


def test_missing_message_detected():
    ag = Agent(0, [(0, 0.5), (1, 0.5)], [1], lambda v: v, 0.1, np.zeros(2))
    with pytest.raises(MissingMessageError):
        ag.update(1, {})


def test_message_log_deterministic(net5, tmp_path):
    g, m, phi = net5
    logs = []
    for k in range(2):
        log = []
        simulate_extrapush(g, m, small_ls(5), cfg(15), phi=phi, message_log=log)
        write_message_log(log, tmp_path / f"m{k}.csv")
        logs.append((tmp_path / f"m{k}.csv").read_bytes())
    assert logs[0] == logs[1]
    assert len(log) == message_count(g, 15)


def test_push_sum_limits(net5):
    g, m, phi = net5
    w = simulate_push_sum(g, m, rounds=100)
    assert np.linalg.norm(w[100] / 5 - phi.phi) <= 1e-10
    assert (w > 0).all()
    ds = G.complete_digraph(3)
    assert np.array_equal(simulate_push_sum(ds, G.build_out_degree_mixing(ds), rounds=20), np.ones((21, 3)))
    one = G.DirectedGraph.from_edges(1, [])
    assert np.array_equal(simulate_push_sum(one, np.array([[1.0]]), rounds=5), np.ones((6, 1)))


def test_message_counts():
    assert message_count(G.five_node_graph(), 10) == 100
    assert message_count(G.DirectedGraph.from_edges(1, []), 10) == 0
    assert message_count(G.complete_digraph(3), 1) == 6


def test_graph_matrix_mismatch(net5):
    g, _, _ = net5
    with pytest.raises(ValueError):
        simulate_extrapush(g, G.build_out_degree_mixing(G.complete_digraph(5)), small_ls(5), cfg(2))


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2 ** 32 - 1))
def test_prop_matrix_agent_equivalence(n, seed):
    g = G.random_strongly_connected(n, np.random.default_rng(seed))
    m = G.build_out_degree_mixing(g)
    obj = small_ls(n, seed=seed % 100)
    sim = simulate_extrapush(g, m, obj, cfg(150), history=True)
    mat = run_extrapush(m, obj, cfg(150), history=True)
    assert max_dev(sim, mat) <= 1e-12
