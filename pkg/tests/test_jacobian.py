import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import droopcert as dc
from droopcert.jacobian import Projection, make_projection
from droopcert.sampling import sample_states


def params_for(n, m_p=0.04, n_q=0.02, tau=0.5):
    return dc.DroopParams(
        m_p=np.full(n, m_p), n_q=np.full(n, n_q), tau_v=np.full(n, tau),
        omega_nom=2 * np.pi * 50, v_nom=np.ones(n), p_ref=np.zeros(n),
        q_ref=np.zeros(n))


def fd_jacobian(net, params, state, step=1e-6):
    x = state.as_vector()
    J = np.empty((x.size, x.size))
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = step
        fp = dc.vector_field(net, params, dc.SystemState.from_vector(x + e))
        fm = dc.vector_field(net, params, dc.SystemState.from_vector(x - e))
        J[:, j] = (fp - fm) / (2 * step)
    return J


def test_two_bus_inductive_angle_entry():
    # symmetric purely inductive line at an aligned state:
    # [J_tt]_12 = -m1 * Q_12 with Q_12 = -V^2 B_12 cos(0), so m1 V^2 B_12
    net = dc.NetworkModel.from_lines(2, [(0, 1, 0.0, 0.1)])
    params = params_for(2, m_p=0.05)
    v = 1.02
    jac = dc.jacobian(net, params, dc.SystemState([0.3, 0.3], [v, v]))
    b12 = net.susceptance[0, 1]
    assert jac.j_tt[0, 1] == pytest.approx(0.05 * v**2 * b12, rel=1e-12)


def test_kernel_direction_annihilated(scn_paper, rng):
    net, params = scn_paper.network, scn_paper.droop
    ones_theta = np.concatenate([np.ones(3), np.zeros(3)])
    for _ in range(20):
        st_ = dc.SystemState(rng.uniform(-0.3, 0.3, 3), rng.uniform(0.9, 1.1, 3))
        full = dc.jacobian(net, params, st_).full()
        assert np.abs(full @ ones_theta).max() < 1e-10


def test_zero_row_sums_of_angle_blocks(scn_paper, rng):
    net, params = scn_paper.network, scn_paper.droop
    st_ = dc.SystemState(rng.uniform(-0.3, 0.3, 3), rng.uniform(0.9, 1.1, 3))
    jac = dc.jacobian(net, params, st_)
    np.testing.assert_allclose(jac.j_tt.sum(axis=1), 0.0, atol=1e-10)
    np.testing.assert_allclose(jac.j_vt.sum(axis=1), 0.0, atol=1e-10)


def test_finite_difference_agreement(scn_paper):
    net, params, dom = scn_paper.network, scn_paper.droop, scn_paper.domain
    sample = sample_states(net, dom, 100, np.random.default_rng(11))
    worst = 0.0
    for i in range(100):
        st_ = dc.SystemState(sample.theta[i], sample.v[i])
        J = dc.jacobian(net, params, st_).full()
        J_fd = fd_jacobian(net, params, st_)
        worst = max(worst, np.abs(J - J_fd).max() / np.abs(J_fd).max())
    assert worst < 1e-5


def test_inputs_do_not_affect_jacobian(scn_paper):
    # reference shifts enter additively; the Jacobian is input-independent
    net, params = scn_paper.network, scn_paper.droop
    st_ = dc.SystemState([0.05, -0.1, 0.02], [1.01, 0.97, 1.03])
    shifted = params.with_references(params.p_ref + 0.3, params.q_ref - 0.2)
    a = dc.jacobian(net, params, st_).full()
    b = dc.jacobian(net, shifted, st_).full()
    np.testing.assert_array_equal(a, b)


def test_nonpositive_voltage_rejected(scn_paper):
    with pytest.raises(ValueError, match="positive"):
        dc.jacobian(scn_paper.network, scn_paper.droop,
                    dc.SystemState(np.zeros(3), [1.0, -0.1, 1.0]))


# -- projection ---------------------------------------------------------------

def test_projection_two_buses_explicit():
    proj = make_projection(2)
    row = proj.r_theta[0]
    assert np.allclose(row, [1 / np.sqrt(2), -1 / np.sqrt(2)]) or \
        np.allclose(row, [-1 / np.sqrt(2), 1 / np.sqrt(2)])


@pytest.mark.parametrize("n", [1, 2, 3, 5, 12])
def test_projection_invariants(n):
    proj = make_projection(n)
    r = proj.r_theta
    assert r.shape == (n - 1, n)
    if n > 1:
        assert np.abs(r @ np.ones(n)).max() < 1e-12
        np.testing.assert_allclose(r @ r.T, np.eye(n - 1), atol=1e-12)
    R = proj.r_full
    np.testing.assert_allclose(R @ R.T, np.eye(2 * n - 1), atol=1e-12)
    pi = proj.projector()
    np.testing.assert_allclose(pi @ pi, pi, atol=1e-12)
    kernel = np.concatenate([np.ones(n), np.zeros(n)])
    assert np.abs(R @ kernel).max() < 1e-12


def test_projection_is_deterministic():
    a = make_projection(6).r_theta
    b = make_projection(6).r_theta
    np.testing.assert_array_equal(a, b)


@settings(max_examples=50, deadline=None)
@given(theta=arrays(np.float64, 4,
                    elements=st.floats(-100, 100, allow_nan=False)))
def test_projected_angle_norm_identity(theta):
    # ||R_theta theta||^2 == sum(theta^2) - N * mean(theta)^2
    proj = make_projection(4)
    lhs = np.linalg.norm(proj.r_theta @ theta) ** 2
    rhs = (theta**2).sum() - 4 * theta.mean() ** 2
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_projection_validates_basis():
    with pytest.raises(ValueError, match="orthonormal"):
        Projection(np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]]))


# -- projected symmetric part and measure -------------------------------------

def test_diagonal_voltage_jacobian_passthrough():
    # J with only a diagonal negative-definite V block: S_vv equals it,
    # the other projected blocks vanish
    n = 3
    z = np.zeros((n, n))
    diag = np.diag([-1.0, -2.0, -3.0])
    jac = dc.JacobianBlocks(z, z, z, diag)
    s = dc.projected_symmetric(jac, make_projection(n))
    np.testing.assert_allclose(s.s_vv, diag, atol=1e-14)
    np.testing.assert_allclose(s.s_tt, 0.0, atol=1e-14)
    np.testing.assert_allclose(s.s_tv, 0.0, atol=1e-14)


def test_measure_of_diagonal_projected_jacobian():
    n = 1  # transverse space is voltage-only; S is the 1x1 V block
    net = dc.NetworkModel(1, np.zeros((1, 1)), np.array([[-2.0]]), ())
    params = params_for(1, n_q=0.0, tau=1.0)
    # V block: dV/dV = -1/tau = -1
    assert dc.measure(net, params, dc.SystemState([0.0], [1.0])) == \
        pytest.approx(-1.0)


def svd_basis(n):
    center = np.eye(n) - np.ones((n, n)) / n
    u = np.linalg.svd(center)[0]
    return Projection(u[:, : n - 1].T)


def test_measure_matches_definition_level_oracle(scn_paper, rng):
    # oracle: lambda_max of Pi sym(J) Pi restricted to range(Pi), assembled
    # through an independently constructed orthonormal basis
    net, params = scn_paper.network, scn_paper.droop
    for _ in range(10):
        st_ = dc.SystemState(rng.uniform(-0.3, 0.3, 3), rng.uniform(0.95, 1.05, 3))
        mu = dc.measure(net, params, st_)
        full = dc.jacobian(net, params, st_).full()
        q = svd_basis(3).r_full
        oracle = np.linalg.eigvalsh(q @ (0.5 * (full + full.T)) @ q.T)[-1]
        assert mu == pytest.approx(oracle, abs=1e-9)


def test_measure_basis_invariance(scn_paper, rng):
    net, params = scn_paper.network, scn_paper.droop
    alt = svd_basis(3)
    for _ in range(10):
        st_ = dc.SystemState(rng.uniform(-0.3, 0.3, 3), rng.uniform(0.95, 1.05, 3))
        a = dc.measure(net, params, st_)
        b = dc.measure(net, params, st_, proj=alt)
        assert abs(a - b) < 1e-9


def test_projected_symmetric_consistency(scn_paper, rng):
    # assembled S equals (J_R + J_R^T) / 2 built directly from R J R^T
    net, params = scn_paper.network, scn_paper.droop
    proj = make_projection(3)
    st_ = dc.SystemState(rng.uniform(-0.3, 0.3, 3), rng.uniform(0.95, 1.05, 3))
    s = dc.projected_symmetric(dc.jacobian(net, params, st_), proj)
    R = proj.r_full
    j_r = R @ dc.jacobian(net, params, st_).full() @ R.T
    np.testing.assert_allclose(s.full(), 0.5 * (j_r + j_r.T), atol=1e-12)
    np.testing.assert_allclose(s.s_tt, s.s_tt.T, atol=1e-12)
    np.testing.assert_allclose(s.s_vv, s.s_vv.T, atol=1e-12)
