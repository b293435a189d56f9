"""Uniform block margins over the admissible domain and the contraction rate.

Three quantities bound the projected symmetric Jacobian blocks everywhere in
D: the synchronizing margin ``c_theta`` (worst-case Laplacian connectivity
minus the heterogeneity penalty), the voltage restoring margin ``c_V``
(Gershgorin, worst bus), and the cross-coupling norm bound ``beta``.  If
``c_theta * c_V > beta**2`` the system semi-contracts on D and the certified
rate follows from the 2x2 comparison matrix [[-c_theta, beta], [beta, -c_V]].

Reported margins are truncated at 1e-6 granularity in the conservative
direction (down for c_theta / c_V / rate, up for beta): a certificate must
never overstate the rate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .jacobian import JacobianBlocks, Projection, make_projection, symmetric_blocks
from .network import AdmissibleDomain, DroopParams, NetworkModel, SystemState
from .sampling import SearchSettings, maximize_over_domain, sample_states

__all__ = [
    "AngleMargin",
    "VoltageMargin",
    "CouplingMargin",
    "ContractionCertificate",
    "angle_margin",
    "voltage_margin",
    "coupling_margin",
    "certificate",
    "contraction_rate",
    "worst_edge_weights",
    "weighted_laplacian",
    "directional_coupling_max",
    "heterogeneity_residual",
    "decompose_angle_block",
    "droop_homogenization",
]

_GRAIN = 1e-6


def _floor(x: float) -> float:
    return float(np.floor(x / _GRAIN) * _GRAIN)


def _ceil(x: float) -> float:
    return float(np.ceil(x / _GRAIN) * _GRAIN)


# ---------------------------------------------------------------------------
# angle channel
# ---------------------------------------------------------------------------

def worst_edge_weights(net: NetworkModel, params: DroopParams,
                       dom: AdmissibleDomain) -> NDArray[np.float64]:
    """Worst-case synchronizing edge weights over D.

    w_ik = (V_min^2 / 2) * ((m_i + m_k) B_ik cos(gamma) -
           |m_i - m_k| |G_ik| sin(gamma)), zero off the edge set.

    Entries can turn negative for strongly heterogeneous lossy cases; they are
    reported as computed (a diagnostic is emitted, no clamping).
    """
    n = net.n_buses
    m = params.m_p
    cg, sg = np.cos(dom.gamma_max), np.sin(dom.gamma_max)
    w = np.zeros((n, n))
    for i, k in net.edges:
        w_ik = 0.5 * dom.v_min**2 * (
            (m[i] + m[k]) * net.susceptance[i, k] * cg
            - abs(m[i] - m[k]) * abs(net.conductance[i, k]) * sg)
        w[i, k] = w[k, i] = w_ik
    return w


def weighted_laplacian(w: NDArray[np.float64]) -> NDArray[np.float64]:
    """Graph Laplacian from a symmetric weight matrix (zero diagonal)."""
    return np.diag(w.sum(axis=1)) - w


def heterogeneity_residual(net: NetworkModel, params: DroopParams,
                           theta: NDArray, v: NDArray) -> NDArray:
    """Diagonal residual Delta_ii(x) of the angle-block decomposition, batched.

    Delta_ii is the i-th row sum of sym(J_tt); heterogeneous droop gains and
    network losses make it nonzero.  Closed form:

        Delta_ii = 1/2 sum_{k != i} V_i V_k ((m_i + m_k) G_ik sin(t_ik)
                                             - (m_i - m_k) B_ik cos(t_ik))
    """
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    m = params.m_p
    tik = theta[..., :, None] - theta[..., None, :]
    vv = v[..., :, None] * v[..., None, :]
    off = ~np.eye(net.n_buses, dtype=bool)
    mi, mk = m[:, None], m[None, :]
    terms = 0.5 * vv * ((mi + mk) * net.conductance * np.sin(tik)
                        - (mi - mk) * net.susceptance * np.cos(tik)) * off
    return terms.sum(axis=-1)


def decompose_angle_block(jac: JacobianBlocks):
    """Exact split sym(J_tt) = -L_sym + diag(delta).

    The Laplacian edge weights are the full off-diagonal entries of the
    symmetric part (synchronizing susceptance term plus the lossy-heterogeneity
    correction); the diagonal residual is then forced to diag(sym(J_tt) @ 1).
    """
    m_sym = 0.5 * (jac.j_tt + jac.j_tt.T)
    w = m_sym.copy()
    np.fill_diagonal(w, 0.0)
    delta = m_sym.sum(axis=1)
    return w, weighted_laplacian(w), delta


@dataclass(frozen=True)
class AngleMargin:
    """Evidence for the synchronizing margin c_theta = lambda2 - delta_theta."""

    w_lower: NDArray[np.float64]
    lambda2: float
    delta_theta: float
    c_theta: float
    maximizer: SystemState | None = None


def _angle_margin(net, params, dom, settings, delta_result) -> AngleMargin:
    w = worst_edge_weights(net, params, dom)
    if np.any(w[~np.eye(net.n_buses, dtype=bool)] < 0):
        warnings.warn("worst-case edge weights contain negative entries; the "
                      "synchronizing bound may be vacuous", stacklevel=3)
    if net.n_buses == 1:
        return AngleMargin(w, np.inf, 0.0, np.inf, None)
    proj = make_projection(net.n_buses)
    lam2 = float(np.linalg.eigvalsh(
        proj.r_theta @ weighted_laplacian(w) @ proj.r_theta.T)[0])
    d_val, d_theta, d_v, _ = delta_result
    return AngleMargin(w, lam2, d_val, _floor(lam2 - d_val),
                       SystemState(d_theta, d_v))


def angle_margin(net: NetworkModel, params: DroopParams, dom: AdmissibleDomain,
                 settings: SearchSettings | None = None) -> AngleMargin:
    """Synchronizing margin: lambda2 of the worst-case Laplacian minus the
    domain maximum of the heterogeneity residual."""
    settings = settings or SearchSettings()
    if net.n_buses == 1:
        return _angle_margin(net, params, dom, settings, None)

    def delta_obj(theta, v):
        return heterogeneity_residual(net, params, theta, v).max(axis=-1)

    (result,) = maximize_over_domain([delta_obj], net, dom, settings)
    return _angle_margin(net, params, dom, settings, result)


# ---------------------------------------------------------------------------
# voltage channel
# ---------------------------------------------------------------------------

def directional_coupling_max(b: float, g: float, gamma: float) -> float:
    """Closed-form max of |b cos(t) - g sin(t)| over |t| <= gamma.

    Candidates: the two endpoints and, when it falls inside the interval, the
    interior stationary point t* = atan2(-g, b) where the value is
    sqrt(b^2 + g^2).
    """
    cands = [abs(b * np.cos(gamma) - g * np.sin(gamma)),
             abs(b * np.cos(gamma) + g * np.sin(gamma))]
    t_star = np.arctan2(-g, b)
    if abs(t_star) <= gamma:
        cands.append(float(np.hypot(b, g)))
    return max(cands)


@dataclass(frozen=True)
class VoltageMargin:
    """Gershgorin evidence for the voltage restoring margin c_V."""

    c_bar: NDArray[np.float64]
    r_bar: NDArray[np.float64]
    c_v: float
    worst_node: int
    all_negative: bool  # True iff every disc satisfies c_bar + r_bar < 0


def voltage_margin(net: NetworkModel, params: DroopParams,
                   dom: AdmissibleDomain) -> VoltageMargin:
    """Worst-case Gershgorin centers/radii of the voltage block over D."""
    n = net.n_buses
    n_q, tau = params.n_q, params.tau_v
    B, G = net.susceptance, net.conductance
    k_max = np.zeros((n, n))
    for i, k in net.edges:
        k_max[i, k] = k_max[k, i] = directional_coupling_max(
            B[i, k], G[i, k], dom.gamma_max)
    c_bar = np.empty(n)
    r_bar = np.empty(n)
    nqt = n_q / tau
    for i in range(n):
        c_bar[i] = (2 * n_q[i] * dom.v_min * B[i, i] - 1.0) / tau[i] \
            + nqt[i] * k_max[i].sum()
        r_bar[i] = 0.5 * ((nqt[i] + nqt) * dom.v_max * k_max[i]).sum()
    worst = int(np.argmax(c_bar + r_bar))
    c_v = _floor(-(c_bar[worst] + r_bar[worst]))
    return VoltageMargin(c_bar, r_bar, c_v, worst,
                         bool(np.all(c_bar + r_bar < 0)))


# ---------------------------------------------------------------------------
# cross coupling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingMargin:
    """Domain bound on the projected cross-coupling block norm."""

    beta: float
    maximizer: SystemState | None
    method: str
    validated: bool  # search max dominated 10^4 fresh random states


def _coupling_objective(net, params, proj):
    def beta_obj(theta, v):
        _, s_tv, _ = symmetric_blocks(net, params, proj, theta, v)
        if s_tv.shape[-2] == 0:
            return np.zeros(theta.shape[0])
        return np.linalg.svd(s_tv, compute_uv=False)[..., 0]
    return beta_obj


def _coupling_margin(net, params, dom, settings, search_result,
                     proj) -> CouplingMargin:
    beta_obj = _coupling_objective(net, params, proj)
    val, theta, v, method = search_result
    rng = np.random.default_rng(settings.seed + 1)
    fresh = sample_states(net, dom, 10_000, rng)
    sampled_max = float(beta_obj(fresh.theta, fresh.v).max(initial=0.0))
    validated = sampled_max <= val + 1e-12
    if not validated:
        warnings.warn(
            f"coupling maximizer missed a larger sampled value "
            f"({sampled_max:.6g} > {val:.6g}); reporting the dominating bound",
            stacklevel=3)
        val = sampled_max
    return CouplingMargin(_ceil(val), SystemState(theta, v), method, validated)


def coupling_margin(net: NetworkModel, params: DroopParams,
                    dom: AdmissibleDomain,
                    settings: SearchSettings | None = None) -> CouplingMargin:
    """beta = max over D of ||S_tv(x)||_2, with fresh-sample validation."""
    settings = settings or SearchSettings()
    proj = make_projection(net.n_buses)
    if net.n_buses == 1:
        return CouplingMargin(0.0, None, "exact", True)
    beta_obj = _coupling_objective(net, params, proj)
    (result,) = maximize_over_domain([beta_obj], net, dom, settings)
    return _coupling_margin(net, params, dom, settings, result, proj)


# ---------------------------------------------------------------------------
# certificate
# ---------------------------------------------------------------------------

def contraction_rate(c_theta: float, c_v: float, beta: float) -> float:
    """Certified rate: -lambda_max of [[-c_theta, beta], [beta, -c_v]]."""
    return 0.5 * (c_theta + c_v - np.sqrt((c_theta - c_v) ** 2 + 4 * beta**2))


@dataclass(frozen=True)
class ContractionCertificate:
    """Blockwise semi-contraction certificate over an admissible domain."""

    angle: AngleMargin
    voltage: VoltageMargin
    coupling: CouplingMargin
    feasible: bool
    rate: float | None
    domain: AdmissibleDomain

    @property
    def c_theta(self) -> float:
        return self.angle.c_theta

    @property
    def c_v(self) -> float:
        return self.voltage.c_v

    @property
    def beta(self) -> float:
        return self.coupling.beta


def certificate(net: NetworkModel, params: DroopParams, dom: AdmissibleDomain,
                settings: SearchSettings | None = None) -> ContractionCertificate:
    """Compute all three margins (one shared domain sweep) and the rate.

    Infeasibility (c_theta * c_v <= beta^2) is a valid result: the margins and
    all evidence are still reported, only ``rate`` is absent.
    """
    settings = settings or SearchSettings()
    vol = voltage_margin(net, params, dom)
    if net.n_buses == 1:
        ang = _angle_margin(net, params, dom, settings, None)
        coup = CouplingMargin(0.0, None, "exact", True)
        feas = vol.c_v > 0
        rate = _floor(vol.c_v) if feas else None
        return ContractionCertificate(ang, vol, coup, feas, rate, dom)

    proj = make_projection(net.n_buses)

    def delta_obj(theta, v):
        return heterogeneity_residual(net, params, theta, v).max(axis=-1)

    results = maximize_over_domain(
        [delta_obj, _coupling_objective(net, params, proj)], net, dom, settings)
    ang = _angle_margin(net, params, dom, settings, results[0])
    coup = _coupling_margin(net, params, dom, settings, results[1], proj)
    feas = ang.c_theta > 0 and vol.c_v > 0 and ang.c_theta * vol.c_v > coup.beta**2
    rate = _floor(contraction_rate(ang.c_theta, vol.c_v, coup.beta)) if feas else None
    return ContractionCertificate(ang, vol, coup, feas, rate, dom)


def droop_homogenization(params: DroopParams, eta: float) -> DroopParams:
    """Mean-preserving droop interpolation m_p(eta) = mean + eta * spread.

    eta = 1 reproduces the baseline gains, eta = 0 the uniform-droop limit.
    """
    m_bar = float(params.m_p.mean())
    m = m_bar + eta * (params.m_p - m_bar)
    return replace(params, m_p=m)
