import numpy as np
import pytest

import droopcert as dc
from droopcert.jacobian import make_projection
from droopcert.margins import (contraction_rate, decompose_angle_block,
                               directional_coupling_max,
                               heterogeneity_residual, weighted_laplacian,
                               worst_edge_weights)
from droopcert.sampling import SearchSettings


def uniform_params(n, m_p=0.04, n_q=0.02, tau=0.5):
    return dc.DroopParams(np.full(n, m_p), np.full(n, n_q), np.full(n, tau),
                          2 * np.pi * 50, np.ones(n), np.zeros(n), np.zeros(n))


def test_lossless_uniform_droop_weights_and_penalty():
    # ideal limit: delta_theta = 0 and w = m_p V_min^2 B cos(gamma)
    net = dc.NetworkModel.from_lines(
        3, [(0, 1, 0.0, 0.1), (0, 2, 0.0, 0.1), (1, 2, 0.0, 0.12)])
    params = uniform_params(3)
    dom = dc.AdmissibleDomain(0.95, 1.05, np.deg2rad(20))
    am = dc.angle_margin(net, params, dom,
                         SearchSettings(grid_points=7, polish_starts=2))
    assert am.delta_theta == 0.0
    w = worst_edge_weights(net, params, dom)
    for i, k in net.edges:
        expected = 0.04 * 0.95**2 * net.susceptance[i, k] * np.cos(dom.gamma_max)
        assert w[i, k] == pytest.approx(expected, rel=1e-12)


def test_complete_graph_unit_weights_connectivity():
    # K3 with unit weights has lambda2 = 3
    w = np.ones((3, 3)) - np.eye(3)
    lap = weighted_laplacian(w)
    proj = make_projection(3)
    lam2 = np.linalg.eigvalsh(proj.r_theta @ lap @ proj.r_theta.T)[0]
    assert lam2 == pytest.approx(3.0, abs=1e-12)


def test_case_3bus_angle_margin_evidence(scn_paper):
    am = dc.angle_margin(scn_paper.network, scn_paper.droop, scn_paper.domain)
    # lambda2 is a closed-form eigensolve of the worst-case Laplacian
    assert am.lambda2 == pytest.approx(0.5275937414675865, abs=1e-9)
    # heterogeneity penalty located by the domain maximizer (grid + polish)
    assert am.delta_theta == pytest.approx(0.18044077700, abs=1e-6)
    assert am.c_theta == pytest.approx(am.lambda2 - am.delta_theta, abs=2e-6)
    assert scn_paper.domain.contains(scn_paper.network, am.maximizer)


def test_negative_worst_weights_warn_and_are_kept():
    # strongly heterogeneous droop on a very lossy line turns the bound
    # negative; it is reported as computed, not clamped
    net = dc.NetworkModel.from_lines(2, [(0, 1, 0.5, 0.05)])
    params = dc.DroopParams(np.array([0.5, 0.001]), np.zeros(2),
                            np.ones(2), 2 * np.pi * 50, np.ones(2),
                            np.zeros(2), np.zeros(2))
    dom = dc.AdmissibleDomain(0.95, 1.05, np.deg2rad(30))
    w = worst_edge_weights(net, params, dom)
    assert w[0, 1] < 0
    with pytest.warns(UserWarning, match="negative"):
        dc.angle_margin(net, params, dom,
                        SearchSettings(grid_points=5, polish_starts=1))


def test_heterogeneity_residual_equals_row_sums(scn_paper, rng):
    net, params = scn_paper.network, scn_paper.droop
    th = rng.uniform(-0.3, 0.3, 3)
    v = rng.uniform(0.95, 1.05, 3)
    jac = dc.jacobian(net, params, dc.SystemState(th, v))
    m_sym = 0.5 * (jac.j_tt + jac.j_tt.T)
    np.testing.assert_allclose(heterogeneity_residual(net, params, th, v),
                               m_sym.sum(axis=1), atol=1e-12)


def test_decomposition_identity(scn_paper, rng):
    net, params = scn_paper.network, scn_paper.droop
    for _ in range(10):
        st_ = dc.SystemState(rng.uniform(-0.3, 0.3, 3),
                             rng.uniform(0.95, 1.05, 3))
        jac = dc.jacobian(net, params, st_)
        _, lap, delta = decompose_angle_block(jac)
        m_sym = 0.5 * (jac.j_tt + jac.j_tt.T)
        np.testing.assert_allclose(-lap + np.diag(delta), m_sym, atol=1e-10)


# -- voltage margin -----------------------------------------------------------

def test_single_bus_voltage_lag():
    net = dc.NetworkModel(1, np.zeros((1, 1)), np.array([[-1.0]]), ())
    params = uniform_params(1, n_q=0.0, tau=0.5)
    vm = dc.voltage_margin(net, params,
                           dc.AdmissibleDomain(0.9, 1.1, np.deg2rad(10)))
    assert vm.c_bar[0] == pytest.approx(-2.0)  # -1/tau
    assert vm.r_bar[0] == 0.0
    assert vm.c_v == pytest.approx(2.0, abs=1e-6)
    assert vm.all_negative


def test_two_identical_buses_closed_form_radius():
    # G = 0: the inner maximum of |B cos t| sits at t = 0 and equals B, so
    # r_bar = (n_q / tau) * V_max * B12 (hand maximization)
    net = dc.NetworkModel.from_lines(2, [(0, 1, 0.0, 0.2)])
    params = uniform_params(2, n_q=0.02, tau=0.5)
    dom = dc.AdmissibleDomain(0.95, 1.05, np.deg2rad(20))
    vm = dc.voltage_margin(net, params, dom)
    b12 = net.susceptance[0, 1]
    assert vm.r_bar[0] == pytest.approx((0.02 / 0.5) * 1.05 * b12, rel=1e-12)


def test_directional_coupling_max_cases():
    gamma = np.deg2rad(20)
    # stationary point outside the window: endpoint wins
    b, g = 5.94594594594, -4.32432432432
    expected = abs(b * np.cos(gamma) + abs(g) * np.sin(gamma))
    assert directional_coupling_max(b, g, gamma) == pytest.approx(expected)
    # stationary point inside: amplitude sqrt(b^2 + g^2)
    assert directional_coupling_max(1.0, -0.1, np.deg2rad(20)) == \
        pytest.approx(np.hypot(1.0, 0.1))
    # pure susceptance: max at t = 0
    assert directional_coupling_max(2.0, 0.0, gamma) == pytest.approx(2.0)


def test_infeasible_gershgorin_flags_not_errors():
    # absurdly strong reactive droop defeats the restoring action
    net = dc.NetworkModel.from_lines(2, [(0, 1, 0.02, 0.1)])
    params = uniform_params(2, n_q=5.0, tau=0.5)
    dom = dc.AdmissibleDomain(0.95, 1.05, np.deg2rad(20))
    vm = dc.voltage_margin(net, params, dom)
    assert not vm.all_negative
    assert vm.c_v < 0


# -- coupling margin ----------------------------------------------------------

def test_vanishing_droop_gains_kill_coupling():
    # both coupling blocks scale with the droop gains (m_p must stay positive
    # per the type invariant, so use a negligible value)
    net = dc.NetworkModel.from_lines(2, [(0, 1, 0.02, 0.1)])
    params = uniform_params(2, m_p=1e-9, n_q=0.0)
    dom = dc.AdmissibleDomain(0.95, 1.05, np.deg2rad(10))
    cm = dc.coupling_margin(net, params, dom,
                            SearchSettings(grid_points=5, polish_starts=1))
    assert cm.beta <= 1e-6  # conservative 1e-6 ceiling of ~1e-8
    assert cm.validated


def test_coupling_spot_check_at_symmetric_state():
    # lossless symmetric two-bus system at the aligned state: hand evaluation
    # of the cross blocks gives J_tv = 0 (P_ik = 0, P_i + V^2 G_ii = 0) and
    # J_vt = 0, so S_tv vanishes there
    net = dc.NetworkModel.from_lines(2, [(0, 1, 0.0, 0.1)])
    params = uniform_params(2)
    st_ = dc.SystemState([0.2, 0.2], [1.0, 1.0])
    jac = dc.jacobian(net, params, st_)
    np.testing.assert_allclose(jac.j_tv, 0.0, atol=1e-14)
    np.testing.assert_allclose(jac.j_vt, 0.0, atol=1e-14)
    s = dc.projected_symmetric(jac, make_projection(2))
    np.testing.assert_allclose(s.s_tv, 0.0, atol=1e-14)


def test_coupling_margin_dominates_fresh_samples(cert_certified, scn_certified):
    from droopcert.jacobian import symmetric_blocks
    from droopcert.sampling import sample_states

    net, params = scn_certified.network, scn_certified.droop
    proj = make_projection(3)
    sample = sample_states(net, scn_certified.domain, 2000,
                           np.random.default_rng(99))
    _, s_tv, _ = symmetric_blocks(net, params, proj, sample.theta, sample.v)
    norms = np.linalg.svd(s_tv, compute_uv=False)[:, 0]
    assert norms.max() <= cert_certified.beta + 1e-12
    assert cert_certified.coupling.validated


# -- certificate --------------------------------------------------------------

def test_rate_decoupled_case():
    assert contraction_rate(0.7, 0.7, 0.0) == pytest.approx(0.7)


def test_rate_two_one_one():
    # eigenvalues of [[-2, 1], [1, -1]]: rate = (3 - sqrt(5)) / 2
    assert contraction_rate(2.0, 1.0, 1.0) == \
        pytest.approx((3 - np.sqrt(5)) / 2, rel=1e-12)


def test_certificate_on_certified_domain(cert_certified):
    cert = cert_certified
    assert cert.feasible
    assert cert.c_theta * cert.c_v > cert.beta**2
    assert cert.rate == pytest.approx(0.103729, abs=1e-4)
    # conservative truncation: the reported rate never exceeds the raw value
    assert cert.rate <= contraction_rate(cert.c_theta, cert.c_v, cert.beta)


def test_certificate_infeasible_on_full_benchmark_domain(cert_paper_timed):
    cert, _ = cert_paper_timed
    assert not cert.feasible
    assert cert.rate is None
    # margins are still reported for audit
    assert cert.c_theta == pytest.approx(0.347152, abs=1e-4)
    assert cert.c_v == pytest.approx(0.729801, abs=1e-6)
    assert cert.beta == pytest.approx(0.946362, abs=1e-3)


def test_domain_monotonicity(scn_certified, cert_certified):
    # enlarging the box never increases the reported rate
    net, params = scn_certified.network, scn_certified.droop
    shrunk = scn_certified.domain.scaled(0.6)
    cert_small = dc.certificate(net, params, shrunk,
                                SearchSettings(grid_points=9))
    assert cert_small.feasible
    assert cert_small.rate >= cert_certified.rate


def test_parallel_evaluation_is_deterministic(scn_certified):
    net, params, dom = scn_certified.network, scn_certified.droop, \
        scn_certified.domain
    a = dc.certificate(net, params, dom, SearchSettings(grid_points=9, jobs=1))
    b = dc.certificate(net, params, dom, SearchSettings(grid_points=9, jobs=4))
    assert a.rate == b.rate
    assert a.c_theta == b.c_theta
    assert a.beta == b.beta


def test_droop_homogenization_mean_preserving(scn_paper):
    params = scn_paper.droop
    for eta in (0.0, 0.3, 1.0):
        h = dc.droop_homogenization(params, eta)
        assert h.m_p.mean() == pytest.approx(params.m_p.mean(), rel=1e-12)
    np.testing.assert_allclose(dc.droop_homogenization(params, 1.0).m_p,
                               params.m_p)
    assert np.ptp(dc.droop_homogenization(params, 0.0).m_p) == 0.0
