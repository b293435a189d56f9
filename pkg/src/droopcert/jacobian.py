"""Analytical state Jacobian of the droop dynamics and its projected form.

The Jacobian is assembled blockwise from the pairwise coupling terms; the
rotational symmetry of the power flow makes every state satisfy
``J @ [1; 0] = 0`` exactly, so the seminorm kernel is invariant and the
projected matrix measure is well defined.  Reference perturbations enter the
dynamics additively and therefore never appear here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .network import DroopParams, NetworkModel, SystemState, coupling_terms

__all__ = [
    "JacobianBlocks",
    "Projection",
    "ProjectedSymmetric",
    "jacobian",
    "jacobian_arrays",
    "make_projection",
    "projected_symmetric",
    "symmetric_blocks",
    "measure",
    "measure_batch",
]


@dataclass(frozen=True)
class JacobianBlocks:
    """The four N x N blocks of the state Jacobian at one state."""

    j_tt: NDArray[np.float64]
    j_tv: NDArray[np.float64]
    j_vt: NDArray[np.float64]
    j_vv: NDArray[np.float64]

    def full(self) -> NDArray[np.float64]:
        return np.block([[self.j_tt, self.j_tv], [self.j_vt, self.j_vv]])


def jacobian_arrays(net: NetworkModel, params: DroopParams,
                    theta: NDArray, v: NDArray):
    """Jacobian blocks for a batch of states.

    ``theta`` and ``v`` have shape (..., N); each returned block has shape
    (..., N, N).  Voltages must be strictly positive (entries divide by V).
    """
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("jacobian requires strictly positive voltages")
    G, B = net.conductance, net.susceptance
    m_p, n_q, tau = params.m_p, params.n_q, params.tau_v
    nqt = n_q / tau
    p_ik, q_ik, p, q = coupling_terms(net, theta, v)
    idx = np.arange(net.n_buses)

    j_tt = -m_p[:, None] * q_ik
    j_tt[..., idx, idx] = m_p * q_ik.sum(axis=-1)

    j_vv = -nqt[:, None] * q_ik / v[..., None, :]
    j_vv[..., idx, idx] = -1.0 / tau - nqt * (q - v**2 * np.diag(B)) / v

    j_tv = -m_p[:, None] * p_ik / v[..., None, :]
    j_tv[..., idx, idx] = -m_p * (p + v**2 * np.diag(G)) / v

    j_vt = nqt[:, None] * p_ik
    j_vt[..., idx, idx] = -nqt * p_ik.sum(axis=-1)
    return j_tt, j_tv, j_vt, j_vv


def jacobian(net: NetworkModel, params: DroopParams,
             state: SystemState) -> JacobianBlocks:
    """Analytical Jacobian at a single state (validated by finite differences
    in the test suite)."""
    return JacobianBlocks(*jacobian_arrays(net, params, state.theta, state.v))


def make_projection(n: int) -> "Projection":
    """Deterministic orthonormal basis of span{1}-perp for the angle block.

    Uses the Helmert construction (orthonormalized difference basis), so
    certificates are reproducible and diffable.  For ``n == 1`` the transverse
    angle space is empty and ``r_theta`` is a 0 x 1 matrix.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    r = np.zeros((n - 1, n))
    for k in range(1, n):
        r[k - 1, :k] = 1.0
        r[k - 1, k] = -float(k)
        r[k - 1] /= np.sqrt(k * (k + 1))
    return Projection(r)


@dataclass(frozen=True)
class Projection:
    """Block projection R = blkdiag(R_theta, I_N) removing the rotation mode."""

    r_theta: NDArray[np.float64]

    def __post_init__(self) -> None:
        r = np.array(self.r_theta, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1] - 1:
            raise ValueError("r_theta must be (N-1) x N")
        n = r.shape[1]
        if n > 1:
            if np.abs(r @ np.ones(n)).max() > 1e-12:
                raise ValueError("rows of r_theta must annihilate the ones vector")
            if np.abs(r @ r.T - np.eye(n - 1)).max() > 1e-12:
                raise ValueError("rows of r_theta must be orthonormal")
        r.setflags(write=False)
        object.__setattr__(self, "r_theta", r)

    @property
    def n_buses(self) -> int:
        return self.r_theta.shape[1]

    @property
    def r_full(self) -> NDArray[np.float64]:
        n = self.n_buses
        R = np.zeros((2 * n - 1, 2 * n))
        R[: n - 1, :n] = self.r_theta
        R[n - 1 :, n:] = np.eye(n)
        return R

    def projector(self) -> NDArray[np.float64]:
        """Orthogonal projector Pi = R^T R onto the transverse subspace."""
        R = self.r_full
        return R.T @ R

    def apply(self, x: NDArray) -> NDArray:
        """Project stacked state/direction vectors (batch-aware): R x."""
        x = np.asarray(x, dtype=float)
        n = self.n_buses
        return np.concatenate([x[..., :n] @ self.r_theta.T, x[..., n:]],
                              axis=-1)


@dataclass(frozen=True)
class ProjectedSymmetric:
    """Blocks of S = (J_R + J_R^T) / 2 in the projected coordinates."""

    s_tt: NDArray[np.float64]
    s_tv: NDArray[np.float64]
    s_vv: NDArray[np.float64]

    def full(self) -> NDArray[np.float64]:
        return np.block([[self.s_tt, self.s_tv], [self.s_tv.T, self.s_vv]])


def symmetric_blocks(net: NetworkModel, params: DroopParams, proj: Projection,
                     theta: NDArray, v: NDArray):
    """Projected symmetric-part blocks (S_tt, S_tv, S_vv) for a state batch."""
    j_tt, j_tv, j_vt, j_vv = jacobian_arrays(net, params, theta, v)
    r = proj.r_theta
    s_tt = 0.5 * np.einsum("an,...nk,bk->...ab", r, j_tt + _mT(j_tt), r)
    s_tv = 0.5 * np.einsum("an,...nk->...ak", r, j_tv + _mT(j_vt))
    s_vv = 0.5 * (j_vv + _mT(j_vv))
    return s_tt, s_tv, s_vv


def _mT(a: NDArray) -> NDArray:
    return np.swapaxes(a, -1, -2)


def projected_symmetric(jac: JacobianBlocks, proj: Projection) -> ProjectedSymmetric:
    """Assemble S from precomputed Jacobian blocks."""
    n = jac.j_tt.shape[-1]
    if proj.n_buses != n:
        raise ValueError(f"projection is for N={proj.n_buses}, blocks have N={n}")
    r = proj.r_theta
    s_tt = 0.5 * r @ (jac.j_tt + jac.j_tt.T) @ r.T
    s_tv = 0.5 * r @ (jac.j_tv + jac.j_vt.T)
    s_vv = 0.5 * (jac.j_vv + jac.j_vv.T)
    return ProjectedSymmetric(s_tt, s_tv, s_vv)


def _assemble_full(s_tt, s_tv, s_vv):
    """Stack batched S blocks into (..., 2N-1, 2N-1) symmetric matrices."""
    m = s_tt.shape[-1]
    n = s_vv.shape[-1]
    out = np.zeros(s_tt.shape[:-2] + (m + n, m + n))
    out[..., :m, :m] = s_tt
    out[..., :m, m:] = s_tv
    out[..., m:, :m] = _mT(s_tv)
    out[..., m:, m:] = s_vv
    return out


def measure(net: NetworkModel, params: DroopParams, state: SystemState,
            proj: Projection | None = None) -> float:
    """Matrix measure mu_R(J(x)) = lambda_max(S(x)) at one state."""
    if proj is None:
        proj = make_projection(net.n_buses)
    s = projected_symmetric(jacobian(net, params, state), proj)
    return float(np.linalg.eigvalsh(s.full())[-1])


def measure_batch(net: NetworkModel, params: DroopParams, proj: Projection,
                  theta: NDArray, v: NDArray) -> NDArray[np.float64]:
    """mu_R(J) for a batch of states; shape (...,)."""
    s_tt, s_tv, s_vv = symmetric_blocks(net, params, proj, theta, v)
    return np.linalg.eigvalsh(_assemble_full(s_tt, s_tv, s_vv))[..., -1]
