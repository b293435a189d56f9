import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import droopcert as dc
from droopcert.network import coupling_terms


def two_bus(r=0.0, x=0.1):
    return dc.NetworkModel.from_lines(2, [(0, 1, r, x)])


def test_single_bus_self_terms():
    # P = V^2 G11, Q = -V^2 B11
    net = dc.NetworkModel(1, np.array([[0.5]]), np.array([[-1.0]]), ())
    p, q = dc.power_injections(net, dc.SystemState([0.0], [1.0]))
    assert p[0] == pytest.approx(0.5)
    assert q[0] == pytest.approx(1.0)


def test_two_identical_buses_symmetric_injections():
    net = two_bus(0.02, 0.1)
    st_ = dc.SystemState([0.3, 0.3], [1.02, 1.02])
    p, q = dc.power_injections(net, st_)
    assert p[0] == pytest.approx(p[1], abs=1e-14)
    assert q[0] == pytest.approx(q[1], abs=1e-14)


def test_case_3bus_flat_state_injections(scn_paper):
    # straight-from-formula evaluation, frozen: with a pure-series Y the rows
    # of G and B sum to zero, so the flat state carries no injection at all
    p, q = dc.power_injections(scn_paper.network,
                               dc.SystemState(np.zeros(3), np.ones(3)))
    np.testing.assert_allclose(p, 0.0, atol=1e-12)
    np.testing.assert_allclose(q, 0.0, atol=1e-12)


def test_case_3bus_reference_script_values(scn_paper):
    # frozen from an independent elementwise evaluation of the injection
    # formulas at theta = (0.05, -0.02, 0.00), V = (1.01, 0.99, 1.02)
    st_ = dc.SystemState([0.05, -0.02, 0.0], [1.01, 0.99, 1.02])
    p, q = dc.power_injections(scn_paper.network, st_)
    G, B = scn_paper.network.conductance, scn_paper.network.susceptance
    p_ref = np.zeros(3)
    q_ref = np.zeros(3)
    th = st_.theta
    v = st_.v
    for i in range(3):
        p_ref[i] = v[i] ** 2 * G[i, i]
        q_ref[i] = -v[i] ** 2 * B[i, i]
        for k in range(3):
            if k == i:
                continue
            p_ref[i] += v[i] * v[k] * (G[i, k] * np.cos(th[i] - th[k])
                                       + B[i, k] * np.sin(th[i] - th[k]))
            q_ref[i] += v[i] * v[k] * (G[i, k] * np.sin(th[i] - th[k])
                                       - B[i, k] * np.cos(th[i] - th[k]))
    np.testing.assert_allclose(p, p_ref, rtol=0, atol=1e-14)
    np.testing.assert_allclose(q, q_ref, rtol=0, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(-10.0, 10.0, allow_nan=False))
def test_uniform_angle_shift_invariance(alpha):
    net = dc.NetworkModel.from_lines(
        3, [(0, 1, 0.08, 0.11), (0, 2, 0.08, 0.11), (1, 2, 0.10, 0.12)])
    th = np.array([0.1, -0.05, 0.02])
    v = np.array([1.01, 0.98, 1.03])
    p0, q0 = dc.power_injections(net, dc.SystemState(th, v))
    p1, q1 = dc.power_injections(net, dc.SystemState(th + alpha, v))
    np.testing.assert_allclose(p1, p0, atol=1e-12)
    np.testing.assert_allclose(q1, q0, atol=1e-12)


def test_energy_balance_against_branch_currents(scn_paper, rng):
    # sum of active injections == total resistive branch loss (no shunts)
    net = scn_paper.network
    for _ in range(20):
        th = rng.uniform(-0.3, 0.3, 3)
        v = rng.uniform(0.9, 1.1, 3)
        p, _ = dc.power_injections(net, dc.SystemState(th, v))
        phasor = v * np.exp(1j * th)
        loss = 0.0
        for i, k in net.edges:
            y = net.series_admittance(i, k)
            current = y * (phasor[i] - phasor[k])
            loss += abs(current) ** 2 * (1.0 / y).real
        assert p.sum() == pytest.approx(loss, abs=1e-10)


def test_coupling_terms_match_injections(scn_paper, rng):
    net = scn_paper.network
    th = rng.uniform(-0.3, 0.3, (5, 3))
    v = rng.uniform(0.9, 1.1, (5, 3))
    _, _, p, q = coupling_terms(net, th, v)
    for i in range(5):
        pi, qi = dc.power_injections(net, dc.SystemState(th[i], v[i]))
        np.testing.assert_allclose(p[i], pi)
        np.testing.assert_allclose(q[i], qi)


def test_sign_convention_assertions(scn_paper):
    net = scn_paper.network
    assert np.all(np.diag(net.susceptance) <= 0)
    off = ~np.eye(3, dtype=bool)
    assert np.all(net.susceptance[off] >= 0)
    assert np.all(net.conductance[off] <= 0)


def test_network_rejects_asymmetric_matrix():
    G = np.array([[1.0, 0.1], [0.2, 1.0]])
    with pytest.raises(ValueError, match="symmetric"):
        dc.NetworkModel(2, G, np.zeros((2, 2)), ((0, 1),))


def test_dimension_mismatch_raises(scn_paper):
    with pytest.raises(ValueError, match="buses"):
        dc.power_injections(scn_paper.network,
                            dc.SystemState(np.zeros(2), np.ones(2)))


# -- Kron reduction ----------------------------------------------------------

def test_kron_identity_reduction(scn_paper):
    net = scn_paper.network
    red = dc.kron_reduce(net.conductance, net.susceptance, [0, 1, 2])
    np.testing.assert_allclose(red.conductance, net.conductance, atol=1e-14)
    np.testing.assert_allclose(red.susceptance, net.susceptance, atol=1e-14)


def test_kron_three_bus_chain_series_combination():
    # chain 1 - 2 - 3, middle bus eliminated: hand Schur complement gives the
    # series combination of the two line admittances
    y_a = 1.0 / complex(0.02, 0.10)
    y_b = 1.0 / complex(0.05, 0.15)
    Y = np.array([[y_a, -y_a, 0.0],
                  [-y_a, y_a + y_b, -y_b],
                  [0.0, -y_b, y_b]])
    red = dc.kron_reduce(Y.real, Y.imag, [0, 2])
    y_series = y_a * y_b / (y_a + y_b)
    expected = np.array([[y_series, -y_series], [-y_series, y_series]])
    np.testing.assert_allclose(red.conductance, expected.real, atol=1e-12)
    np.testing.assert_allclose(red.susceptance, expected.imag, atol=1e-12)
    assert red.edges == ((0, 1),)


def test_kron_disconnected_bus_leaves_retained_block():
    net = dc.NetworkModel.from_lines(3, [(0, 1, 0.05, 0.2)])
    # bus 2 isolated: add a self admittance so the eliminated block inverts
    G = net.conductance.copy()
    B = net.susceptance.copy()
    G[2, 2], B[2, 2] = 1.0, -2.0
    red = dc.kron_reduce(G, B, [0, 1])
    np.testing.assert_allclose(red.conductance, G[:2, :2], atol=1e-14)
    np.testing.assert_allclose(red.susceptance, B[:2, :2], atol=1e-14)


def test_kron_symmetry_and_elimination_order(rng):
    # random 5-bus network, eliminate two buses in either order
    lines = [(0, 1, 0.02, 0.1), (1, 2, 0.03, 0.12), (2, 3, 0.02, 0.09),
             (3, 4, 0.04, 0.15), (0, 4, 0.03, 0.1), (1, 3, 0.05, 0.2)]
    net = dc.NetworkModel.from_lines(5, lines)
    red_a = dc.kron_reduce(net.conductance, net.susceptance, [0, 1, 2])
    mid = dc.kron_reduce(net.conductance, net.susceptance, [0, 1, 2, 3])
    red_b = dc.kron_reduce(mid.conductance, mid.susceptance, [0, 1, 2])
    for a, b in ((red_a.conductance, red_b.conductance),
                 (red_a.susceptance, red_b.susceptance)):
        np.testing.assert_allclose(a, b, atol=1e-10)
        np.testing.assert_allclose(a, a.T, atol=1e-12)


def test_kron_singular_block_raises():
    Y = np.zeros((2, 2))
    with pytest.raises(np.linalg.LinAlgError):
        dc.kron_reduce(Y, Y, [0])
