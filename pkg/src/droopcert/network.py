"""Kron-reduced network model, droop parameters, and the static power-flow map.

The admittance matrix is stored in standard nodal form: ``Y[i, i]`` is the sum
of all admittances incident to bus ``i`` (series plus shunt) and
``Y[i, k] = -y_series(i, k)`` for ``i != k``.  With ``Y = G + jB`` this puts
``B[i, i] <= 0`` and ``B[i, k] >= 0`` for inductive lines, which is the sign
convention assumed by every margin formula downstream.  All quantities are in
per unit; base values are carried as metadata only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "NetworkModel",
    "DroopParams",
    "AdmissibleDomain",
    "SystemState",
    "power_injections",
    "kron_reduce",
    "coupling_terms",
]

_SYM_TOL = 1e-12


def _readonly(a: NDArray) -> NDArray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class NetworkModel:
    """Reduced converter network: conductance/susceptance matrices plus edges.

    Attributes
    ----------
    n_buses : int
        Number of converter buses N.
    conductance, susceptance : (N, N) ndarray
        G and B of the nodal admittance matrix Y = G + jB.
    edges : tuple of (i, k) pairs
        Unordered bus pairs with nonzero off-diagonal admittance (0-based,
        i < k).
    base_mva, base_kv, base_hz : float or None
        Reporting metadata; never used in computations.
    """

    n_buses: int
    conductance: NDArray[np.float64]
    susceptance: NDArray[np.float64]
    edges: tuple[tuple[int, int], ...]
    base_mva: float | None = None
    base_kv: float | None = None
    base_hz: float | None = None

    def __post_init__(self) -> None:
        n = self.n_buses
        if n < 1:
            raise ValueError("n_buses must be a positive integer")
        G = _readonly(self.conductance)
        B = _readonly(self.susceptance)
        for name, M in (("conductance", G), ("susceptance", B)):
            if M.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {M.shape}")
            if np.abs(M - M.T).max(initial=0.0) > _SYM_TOL:
                raise ValueError(f"{name} matrix is not symmetric")
        object.__setattr__(self, "conductance", G)
        object.__setattr__(self, "susceptance", B)
        edges = tuple(sorted((min(i, k), max(i, k)) for i, k in self.edges))
        for i, k in edges:
            if not (0 <= i < k < n):
                raise ValueError(f"edge ({i}, {k}) out of range for N={n}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_lines(
        cls,
        n_buses: int,
        lines: Iterable[tuple[int, int, float, float]],
        shunt_g: Sequence[float] | None = None,
        shunt_b: Sequence[float] | None = None,
        **meta,
    ) -> "NetworkModel":
        """Assemble Y from series impedances ``(i, k, r_pu, x_pu)`` (0-based).

        Self-susceptance is the pure series sum unless explicit per-bus shunts
        are given; the bundled scenarios use no shunts.
        """
        Y = np.zeros((n_buses, n_buses), dtype=complex)
        edges = []
        for i, k, r, x in lines:
            if i == k:
                raise ValueError("line endpoints must differ")
            y = 1.0 / complex(r, x)
            Y[i, k] -= y
            Y[k, i] -= y
            Y[i, i] += y
            Y[k, k] += y
            edges.append((i, k))
        if shunt_g is not None:
            Y[np.diag_indices(n_buses)] += np.asarray(shunt_g, dtype=float)
        if shunt_b is not None:
            Y[np.diag_indices(n_buses)] += 1j * np.asarray(shunt_b, dtype=float)
        return cls(n_buses, Y.real.copy(), Y.imag.copy(), tuple(edges), **meta)

    @property
    def admittance(self) -> NDArray[np.complex128]:
        return self.conductance + 1j * self.susceptance

    def series_admittance(self, i: int, k: int) -> complex:
        """Series admittance of branch (i, k), recovered as -Y[i, k]."""
        return -complex(self.conductance[i, k], self.susceptance[i, k])


@dataclass(frozen=True)
class DroopParams:
    """Per-node droop control parameters.

    ``m_p`` maps active-power error to frequency, ``n_q`` maps reactive-power
    error to voltage, and ``tau_v`` is the voltage loop time constant in
    seconds.  ``p_ref`` / ``q_ref`` are the nominal power references around
    which disturbances act.
    """

    m_p: NDArray[np.float64]
    n_q: NDArray[np.float64]
    tau_v: NDArray[np.float64]
    omega_nom: float
    v_nom: NDArray[np.float64]
    p_ref: NDArray[np.float64]
    q_ref: NDArray[np.float64]

    def __post_init__(self) -> None:
        n = len(np.atleast_1d(self.m_p))
        for name in ("m_p", "n_q", "tau_v", "v_nom", "p_ref", "q_ref"):
            v = _readonly(np.atleast_1d(getattr(self, name)))
            if v.shape != (n,):
                raise ValueError(f"{name} must have length {n}, got {v.shape}")
            object.__setattr__(self, name, v)
        if np.any(self.m_p <= 0):
            raise ValueError("m_p entries must be > 0")
        if np.any(self.n_q < 0):
            raise ValueError("n_q entries must be >= 0")
        if np.any(self.tau_v <= 0):
            raise ValueError("tau_v entries must be > 0")

    @property
    def n_buses(self) -> int:
        return self.m_p.shape[0]

    def with_references(self, p_ref, q_ref) -> "DroopParams":
        return DroopParams(self.m_p, self.n_q, self.tau_v, self.omega_nom,
                           self.v_nom, np.asarray(p_ref, float),
                           np.asarray(q_ref, float))

    def input_matrix(self) -> NDArray[np.float64]:
        """Constant Jacobian of the vector field w.r.t. u = [p; q].

        Reference perturbations enter additively: dtheta_i/dp_i = m_p[i] and
        dV_i/dq_i = n_q[i]/tau_v[i].
        """
        n = self.n_buses
        M = np.zeros((2 * n, 2 * n))
        M[:n, :n] = np.diag(self.m_p)
        M[n:, n:] = np.diag(self.n_q / self.tau_v)
        return M


@dataclass(frozen=True)
class AdmissibleDomain:
    """Operating box D: voltage band plus a cap on edge angle differences."""

    v_min: float
    v_max: float
    gamma_max: float  # rad

    def __post_init__(self) -> None:
        if not (0.0 < self.v_min < self.v_max):
            raise ValueError("need 0 < v_min < v_max")
        if not (0.0 < self.gamma_max < np.pi / 2):
            raise ValueError("need 0 < gamma_max < pi/2")

    def contains(self, net: NetworkModel, state: "SystemState",
                 slack: float = 0.0) -> bool:
        v_ok = np.all(state.v >= self.v_min - slack) and np.all(
            state.v <= self.v_max + slack)
        th_ok = all(
            abs(state.theta[i] - state.theta[k]) <= self.gamma_max + slack
            for i, k in net.edges)
        return bool(v_ok and th_ok)

    def scaled(self, factor: float, v_center: float = 1.0) -> "AdmissibleDomain":
        """Shrink (factor < 1) or grow the box about ``v_center`` / zero angle."""
        half = 0.5 * (self.v_max - self.v_min) * factor
        return AdmissibleDomain(v_center - half, v_center + half,
                                self.gamma_max * factor)


@dataclass(frozen=True)
class SystemState:
    """Stacked state x = [theta; V] (angles in rad, voltages in p.u.)."""

    theta: NDArray[np.float64]
    v: NDArray[np.float64]

    def __post_init__(self) -> None:
        th = _readonly(np.atleast_1d(self.theta))
        v = _readonly(np.atleast_1d(self.v))
        if th.shape != v.shape or th.ndim != 1:
            raise ValueError("theta and v must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(th)) and np.all(np.isfinite(v))):
            raise ValueError("state entries must be finite")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "v", v)

    @property
    def n_buses(self) -> int:
        return self.theta.shape[0]

    def as_vector(self) -> NDArray[np.float64]:
        return np.concatenate([self.theta, self.v])

    @classmethod
    def from_vector(cls, x: NDArray[np.float64]) -> "SystemState":
        x = np.asarray(x, dtype=float)
        n = x.shape[0] // 2
        return cls(x[:n], x[n:])

    def shifted(self, dtheta=0.0, dv=0.0) -> "SystemState":
        return SystemState(self.theta + dtheta, self.v + dv)


def coupling_terms(net: NetworkModel, theta: NDArray, v: NDArray):
    """Pairwise AC coupling terms and total injections, batch-aware.

    ``theta`` and ``v`` have shape (..., N).  Returns ``(p_ik, q_ik, p, q)``
    where the pairwise arrays have shape (..., N, N) with zero diagonal:

        p_ik = V_i V_k (G_ik cos(theta_i - theta_k) + B_ik sin(theta_i - theta_k))
        q_ik = V_i V_k (G_ik sin(theta_i - theta_k) - B_ik cos(theta_i - theta_k))

    and ``p``, ``q`` are the standard lossy power-flow injections.
    """
    G, B = net.conductance, net.susceptance
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    tik = theta[..., :, None] - theta[..., None, :]
    vv = v[..., :, None] * v[..., None, :]
    off = ~np.eye(net.n_buses, dtype=bool)
    p_ik = vv * (G * np.cos(tik) + B * np.sin(tik)) * off
    q_ik = vv * (G * np.sin(tik) - B * np.cos(tik)) * off
    p = v**2 * np.diag(G) + p_ik.sum(axis=-1)
    q = -(v**2) * np.diag(B) + q_ik.sum(axis=-1)
    return p_ik, q_ik, p, q


def power_injections(net: NetworkModel, state: SystemState):
    """Active/reactive injections (P, Q) at every bus for one state."""
    if state.n_buses != net.n_buses:
        raise ValueError(
            f"state has {state.n_buses} buses, network has {net.n_buses}")
    _, _, p, q = coupling_terms(net, state.theta, state.v)
    return p, q


def kron_reduce(full_g: NDArray, full_b: NDArray,
                retained: Sequence[int], **meta) -> NetworkModel:
    """Schur-complement elimination of the non-retained buses.

    Computes ``Y_red = Y_rr - Y_re Y_ee^{-1} Y_er`` on the complex admittance
    matrix and splits the result back into G and B.  Raises
    ``numpy.linalg.LinAlgError`` if the eliminated block is singular.
    """
    G = np.asarray(full_g, dtype=float)
    B = np.asarray(full_b, dtype=float)
    m = G.shape[0]
    if G.shape != (m, m) or B.shape != (m, m):
        raise ValueError("full_g and full_b must be square and equally sized")
    retained = list(retained)
    if len(set(retained)) != len(retained):
        raise ValueError("retained indices must be unique")
    eliminated = [i for i in range(m) if i not in retained]
    Y = G + 1j * B
    if not eliminated:
        Y_red = Y[np.ix_(retained, retained)]
    else:
        rr = np.ix_(retained, retained)
        re = np.ix_(retained, eliminated)
        er = np.ix_(eliminated, retained)
        ee = np.ix_(eliminated, eliminated)
        Y_red = Y[rr] - Y[re] @ np.linalg.solve(Y[ee], Y[er])
    Y_red = 0.5 * (Y_red + Y_red.T)  # symmetrize away solver roundoff
    n = len(retained)
    edges = tuple((i, k) for i in range(n) for k in range(i + 1, n)
                  if abs(Y_red[i, k]) > 1e-12)
    return NetworkModel(n, Y_red.real.copy(), Y_red.imag.copy(), edges, **meta)
