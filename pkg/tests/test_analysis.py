import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extrapush import analysis as an
from extrapush import graph as G
from extrapush.objective import AverageConsensus
from extrapush.solver import AlgorithmConfig, run_normalized_extrapush
from oracles import certificate_constants, jacobi_eigvals
from conftest import small_ls

# pinned from the Jacobi oracle on the five-node example
NET5_MARGIN = 0.5810046406430842
NET5_C1 = 14.087230140388494
NET5_C2 = 16.014413977690403
NET5_C3 = 131.33393179705914
NET5_C7 = 6.425726920488899e-4
LS_N5_LF = 6.735219355567921


def test_jacobi_oracle_sanity():
    s = np.random.default_rng(0).standard_normal((6, 6))
    s = s + s.T
    assert np.allclose(jacobi_eigvals(s), np.linalg.eigvalsh(s), atol=1e-12)


# -- residuals ----------------------------------------------------------------

def test_exact_triple_residuals(net5, ls_exp):
    _, m, phi = net5
    tri = an.optimal_triple(m, phi, 0.1, ls_exp.objective, ls_exp.x_star)
    r = an.residual_opt(tri, m, phi, 0.1, ls_exp.objective)
    assert r.max() <= 1e-10 and r.sum_y <= 1e-10


def test_random_state_residuals_positive(net5, ls_exp, rng):
    _, m, phi = net5
    tri = an.OptimalityTriple(*(rng.standard_normal((5, 256)) for _ in range(3)))
    r = an.residual_opt(tri, m, phi, 0.1, ls_exp.objective)
    assert min(r.r_null, r.r_grad, r.r_link) > 0


def test_accumulators_zero_history():
    zh = np.zeros((4, 3, 2))
    assert not an.accumulate_y(zh, np.full((3, 3), 1 / 3)).any()
    assert not an.accumulate_u(zh).any()


def test_accumulated_y_sums_to_zero(net5):
    _, m, phi = net5
    tr = run_normalized_extrapush(m, phi, small_ls(5), AlgorithmConfig("normalized-extrapush", alpha=0.1,
                                                                        max_iters=100), history=True)
    y = an.accumulate_y(tr.z_history, m)
    assert np.abs(y.sum(axis=1)).max() <= 1e-10
    assert np.allclose(y[-1], tr.final.y, atol=1e-12)
    assert np.allclose(an.accumulate_u(tr.z_history)[-1], tr.final.u, atol=1e-12)


def test_stationary_run_has_zero_y(net5):
    _, m, phi = net5
    z0 = np.outer(5 * phi.phi, [2.0])
    tr = run_normalized_extrapush(m, phi, AverageConsensus(np.full((5, 1), 2.0)),
                                  AlgorithmConfig("normalized-extrapush", alpha=0.1, max_iters=20), z0,
                                  history=True)
    assert np.abs(an.accumulate_y(tr.z_history, m)).max() <= 1e-12


# -- metric objects -------------------------------------------------------------

def test_metric_objects_five_node(net5):
    _, m, phi = net5
    mo = an.build_metric_objects(m, phi)
    assert mo.lam_min_M_sym >= -1e-10 and mo.psd_ok
    assert jacobi_eigvals(mo.M + mo.M.T)[0] >= -1e-10
    d = np.diag(5 * phi.phi)
    assert np.allclose(mo.M + mo.M.T, np.linalg.inv(np.sqrt(d)) @ mo.Lambda @ np.linalg.inv(np.sqrt(d)))


def test_metric_objects_symmetric_case():
    m = G.build_out_degree_mixing(G.ring_graph(5))
    mo = an.build_metric_objects(m, np.full(5, 0.2))
    assert np.allclose(mo.N, m.a_bar) and np.allclose(mo.N, mo.N.T)
    assert np.allclose(mo.M, (np.eye(5) - m.a) / 2)
    assert np.linalg.eigvalsh(mo.M)[0] >= -1e-12


def test_metric_objects_single_node():
    mo = an.build_metric_objects(np.array([[1.0]]), np.array([1.0]))
    assert mo.N.tolist() == [[1.0]] and mo.M.tolist() == [[0.0]]
    assert mo.G.tolist() == [[1.0, 0.0], [0.0, 0.0]] and not mo.S.any()


def test_assumption4(net5):
    _, m, phi = net5
    ok, margin = an.check_assumption4(m, phi)
    assert ok and margin == pytest.approx(NET5_MARGIN, rel=1e-12)
    d = 5 * phi.phi
    da = m.a_bar / d[:, None]
    assert jacobi_eigvals(da + da.T)[0] == pytest.approx(margin, rel=1e-10)
    lazy = np.array([[0.8, 0.2], [0.2, 0.8]])
    assert an.check_assumption4(lazy, [0.5, 0.5])[0]


def test_g_norm_basics(net5):
    _, m, phi = net5
    mo = an.build_metric_objects(m, phi)
    assert an.g_norm(np.zeros((10, 3)), mo.G) == 0.0
    with pytest.raises(ValueError):
        an.g_norm(np.ones((2, 1)), -np.eye(2))


def test_observed_g_norm_contraction(net5, ls_exp):
    # not a certified step size; this records the contraction actually observed
    _, m, phi = net5
    tr = run_normalized_extrapush(m, phi, ls_exp.objective,
                                  AlgorithmConfig("normalized-extrapush", alpha=0.1, max_iters=400),
                                  history=True)
    mo = an.build_metric_objects(m, phi)
    vs = an.v_star(m, phi, 0.1, ls_exp.objective, ls_exp.x_star)
    vh = [np.vstack([z, u]) for z, u in zip(tr.z_history, an.accumulate_u(tr.z_history))]
    assert an.g_norm(vs - vs, mo.G) == 0.0
    assert an.g_norm_contraction_check(vh, mo.G, vs, delta=0.01, start=2)
    assert not an.g_norm_contraction_check(vh, mo.G, vs, delta=0.5, start=2)


# -- rate fitting --------------------------------------------------------------------

def test_fit_geometric():
    rate, r2 = an.fit_linear_rate(0.9 ** np.arange(60))
    assert rate == pytest.approx(0.9, abs=1e-9) and r2 == pytest.approx(1.0)
    assert an.fit_linear_rate(np.full(10, 3.0)) == (1.0, 1.0)
    with pytest.raises(ValueError):
        an.fit_linear_rate([1.0, 0.0])


def test_decaying_window():
    e = np.concatenate([0.5 ** np.arange(50), np.full(10, 1e-16)])
    w = an.decaying_window(e)
    assert w.stop <= 50 and e[w.stop - 1] <= 1e-10


# -- certificate ---------------------------------------------------------------------

def _compare(ours, ref, keys, rel=1e-9):
    for k in keys:
        a, b = ours[k], ref[k]
        if math.isnan(b):
            assert math.isnan(a), k
        else:
            assert a == pytest.approx(b, rel=rel, abs=1e-300), k


CHAIN_KEYS = ("c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "Delta1", "Delta2", "Delta3",
              "mu_required", "a_lo", "eta_lo", "eta_hi", "sigma_lo", "sigma_hi", "alpha_lo", "alpha_hi")


@pytest.mark.parametrize("L_f,S_f,a,eta,sigma,alpha", [
    (LS_N5_LF, 0.0, 0.9, 1.0, 0.01, 0.001),
    (1.0, 200.0, 0.9999, 30.0, 0.005, 0.01),
    (1.0, 2000.0, 0.99995, 10.0, 0.002, 0.02),
])
def test_chain_matches_oracle(net5, L_f, S_f, a, eta, sigma, alpha):
    _, m, phi = net5
    gc = an.graph_constants(m, phi)
    d = 5 * phi.phi
    Lb, mb = L_f / d.min() ** 2, S_f / d.max() ** 2
    with np.errstate(all="ignore"):
        ref = certificate_constants(m.a, phi.phi, L_f, S_f, a, eta, sigma, alpha)
    ours = an.chain_constants(gc, Lb, mb, a, eta, sigma)
    ours["delta"] = an.delta_bound(gc, Lb, mb, eta, sigma, alpha)
    _compare(ours, ref, CHAIN_KEYS + ("delta",))


def test_graph_constants_pinned(net5):
    _, m, phi = net5
    gc = an.graph_constants(m, phi)
    assert gc.c1 == pytest.approx(NET5_C1, rel=1e-9)
    assert gc.c2 == pytest.approx(NET5_C2, rel=1e-9)
    assert gc.c3 == pytest.approx(NET5_C3, rel=1e-9)
    assert gc.c7 == pytest.approx(NET5_C7, rel=1e-9)


def test_certificate_ls_n5(net5, ls_exp):
    _, m, phi = net5
    obj = ls_exp.objective
    assert obj.lipschitz == pytest.approx(LS_N5_LF, rel=1e-12)
    cert = an.certificate(m, phi, obj.lipschitz, obj.strong_convexity)
    assert cert.applicable and not cert.feasible
    assert cert.failed == "no strong convexity"
    assert not cert.certifies(0.1)
    assert "first failing condition: no strong convexity" in an.format_certificate(cert)


def test_certificate_hypothetical_strong_convexity(net5):
    # with S_f > 0 the chain proceeds; the a-window is the first link to fail here
    _, m, phi = net5
    cert = an.certificate(m, phi, 1.0, 1.0)
    assert cert.failed.startswith("a window")
    cert = an.certificate(m, phi, 1.0, 1.0, a=0.9999)
    assert cert.failed.startswith("mu_bar lower bound")


def test_certificate_single_node():
    cert = an.certificate(np.array([[1.0]]), np.array([1.0]), 1.0, 1.0)
    assert not cert.applicable and cert.failed == "not applicable: M = 0"


def test_certificate_doubly_stochastic_unit_scale():
    m = G.build_out_degree_mixing(G.ring_graph(6))
    cert = an.certificate(m, np.full(6, 1 / 6), 3.0, 2.0)
    assert cert.unit_scale and cert.L_bar == 3.0 and cert.mu_bar == 2.0
    assert "D = I" in an.format_certificate(cert)


def test_mu_requirement_exceeds_lipschitz(net5):
    # c1 >= 1 because MM^T and M^TM share their nonzero spectrum, so the mu_bar
    # condition asks for mu_bar > sqrt(6) L_bar, above any admissible mu_bar <= L_bar
    _, m, phi = net5
    gc = an.graph_constants(m, phi)
    assert gc.c1 >= 1
    for a in (0.9994, 0.9999, 0.999999):
        c = an.chain_constants(gc, 1.0, 1.0, a, 1.0, 1.0)
        assert c["mu_required"] > math.sqrt(6)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 100.0), st.integers(3, 7), st.integers(0, 10_000))
def test_prop_chain_scaling(k, n, seed):
    g = G.random_strongly_connected(n, np.random.default_rng(seed))
    m = G.build_out_degree_mixing(g)
    phi = G.stationary_distribution(m)
    gc = an.graph_constants(m, phi)
    a = (1 + (2 - gc.c7) / (2 + gc.c7)) / 2
    base = an.chain_constants(gc, 1.0, 200.0, a, 30.0, 0.005)
    scaled = an.chain_constants(gc, k, 200.0 * k, a, 30.0 * k, 0.005)
    for key in ("alpha_lo", "alpha_hi"):
        if math.isnan(base[key]):
            assert math.isnan(scaled[key])
        else:
            assert scaled[key] * k == pytest.approx(base[key], rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 9), st.integers(0, 2 ** 32 - 1), st.integers(0, 10_000))
def test_prop_g_norm_nonnegative_and_laplacian(n, seed, vseed):
    g = G.random_strongly_connected(n, np.random.default_rng(seed))
    m = G.build_out_degree_mixing(g)
    phi = G.stationary_distribution(m)
    mo = an.build_metric_objects(m, phi)
    assert mo.lam_min_M_sym >= -1e-10
    v = np.random.default_rng(vseed).standard_normal((2 * n, 3))
    assert an.g_norm(v, mo.G) >= 0


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 8), st.floats(0.1, 10.0), st.floats(0.01, 5.0))
def test_prop_unit_scale_for_doubly_stochastic(n, L, S):
    m = G.build_out_degree_mixing(G.ring_graph(n) if n > 2 else G.complete_digraph(n))
    phi = G.stationary_distribution(m)
    cert = an.certificate(m, phi, L, min(S, L))
    if cert.applicable:
        assert cert.L_bar == pytest.approx(L, rel=1e-12) and cert.mu_bar == pytest.approx(min(S, L), rel=1e-12)
