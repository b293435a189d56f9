"""Forward-invariant tube certificates built on a contraction certificate.

The scalar comparison dynamics rho_dot = -c rho + r(t) propagates a residual
bound into a time-varying tube radius around any reference trajectory.
Specializations: a static ball around a constant reference (autonomous
operation), quasi-steady tracking under slow inputs (ultimate bound
H eps / c), robustness around a nominal manifold under bounded perturbations
(L_u delta / c), and the composite form ((H eps + L_u delta) / c).

Droop equilibria are synchronous-drift solutions: all angle rates share a
common offset, so the raw field never vanishes exactly.  The solver therefore
finds (x*, omega_sync) with f_theta(x*) = omega_sync * 1 and f_V(x*) = 0,
which is precisely || f(x*) ||_R = 0; the rotational mode is pinned by fixing
the angle mean of the iterate to that of the guess.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import quad
from scipy.stats import qmc

from .jacobian import Projection, jacobian, make_projection
from .margins import ContractionCertificate
from .network import AdmissibleDomain, DroopParams, NetworkModel, SystemState
from .simulate import Disturbance, vector_field

__all__ = [
    "seminorm",
    "EquilibriumError",
    "EquilibriumResult",
    "solve_equilibrium",
    "QuasiSteadyTracker",
    "sensitivity",
    "InputBox",
    "HEstimate",
    "estimate_H",
    "estimate_Lu",
    "ComparisonSolution",
    "comparison_radius",
    "ReferenceTrajectory",
    "TubeCertificate",
    "autonomous_tube",
    "tracking_bound",
    "robustness_bound",
    "composite_bound",
    "containment_slack",
    "max_contained_radius",
]

_SINGULAR_SV = 1e-6  # projected-Jacobian singular-value floor for H


def seminorm(proj: Projection, x: SystemState | NDArray) -> float:
    """||x||_R = ||R x||_2; vanishes exactly on uniform angle shifts."""
    vec = x.as_vector() if isinstance(x, SystemState) else np.asarray(x, float)
    return float(np.linalg.norm(proj.apply(vec)))


# ---------------------------------------------------------------------------
# quasi-steady equilibria
# ---------------------------------------------------------------------------

class EquilibriumError(RuntimeError):
    pass


@dataclass(frozen=True)
class EquilibriumResult:
    """One representative of the equilibrium manifold x* + ker R."""

    state: SystemState
    omega_sync: float  # common angle-rate offset in the rotating frame
    residual: float    # || f(x*) ||_R
    iterations: int
    in_domain: bool | None = None


def _augmented_system(net, params, theta, v, omega, u, theta_mean):
    from .network import coupling_terms

    n = net.n_buses
    _, _, p, q = coupling_terms(net, theta, v)
    p_ref, q_ref = params.p_ref, params.q_ref
    if u is not None:
        p_ref = p_ref + u[:n]
        q_ref = q_ref + u[n:]
    g = np.concatenate([
        -params.m_p * (p - p_ref) - omega,
        (params.v_nom - v - params.n_q * (q - q_ref)) / params.tau_v,
        [theta.mean() - theta_mean],
    ])
    return g


def _augmented_jacobian(net, params, state: SystemState) -> NDArray:
    n = net.n_buses
    J = jacobian(net, params, state).full()
    DF = np.zeros((2 * n + 1, 2 * n + 1))
    DF[: 2 * n, : 2 * n] = J
    DF[:n, 2 * n] = -1.0
    DF[2 * n, :n] = 1.0 / n
    return DF


def solve_equilibrium(net: NetworkModel, params: DroopParams,
                      u: NDArray | None = None,
                      guess: SystemState | None = None,
                      dom: AdmissibleDomain | None = None,
                      tol: float = 1e-12,
                      max_iter: int = 50) -> EquilibriumResult:
    """Newton solve of the droop power flow (quasi-steady map x*(u)).

    Unknowns are (theta, V, omega_sync); the angle mean is pinned to the
    guess.  Raises :class:`EquilibriumError` after ``max_iter`` iterations
    without convergence.  A solution outside ``dom`` (when given) is flagged,
    not rejected.
    """
    n = net.n_buses
    if guess is None:
        guess = SystemState(np.zeros(n), params.v_nom.copy())
    theta = guess.theta.copy()
    v = guess.v.copy()
    omega = 0.0
    mean0 = float(guess.theta.mean())
    for it in range(1, max_iter + 1):
        g = _augmented_system(net, params, theta, v, omega, u, mean0)
        if np.abs(g).max() < tol:
            break
        DF = _augmented_jacobian(net, params, SystemState(theta, v))
        try:
            step = np.linalg.solve(DF, -g)
        except np.linalg.LinAlgError as exc:
            raise EquilibriumError(f"singular Newton system: {exc}") from exc
        theta = theta + step[:n]
        v = v + step[n : 2 * n]
        omega += step[2 * n]
        if np.any(v <= 0):
            raise EquilibriumError("Newton iterate left the positive voltage "
                                   "orthant; supply a better guess")
    else:
        raise EquilibriumError(
            f"no convergence in {max_iter} Newton iterations "
            f"(residual {np.abs(g).max():.3e})")
    state = SystemState(theta, v)
    proj = make_projection(n)
    res = seminorm(proj, vector_field(net, params, state, u=u, rotating=True))
    in_dom = dom.contains(net, state) if dom is not None else None
    if dom is not None and not in_dom:
        warnings.warn("equilibrium lies outside the admissible domain",
                      stacklevel=2)
    return EquilibriumResult(state, omega, res, it, in_dom)


class QuasiSteadyTracker:
    """Warm-started x*(u(t)) evaluation along an input path."""

    def __init__(self, net: NetworkModel, params: DroopParams,
                 guess: SystemState | None = None):
        self.net = net
        self.params = params
        self._last = solve_equilibrium(net, params, None, guess)

    def solve(self, u: NDArray | None) -> EquilibriumResult:
        self._last = solve_equilibrium(self.net, self.params, u,
                                       guess=self._last.state)
        return self._last


# ---------------------------------------------------------------------------
# input sensitivities
# ---------------------------------------------------------------------------

def sensitivity(net: NetworkModel, params: DroopParams,
                eq: EquilibriumResult) -> NDArray[np.float64]:
    """Implicit-differentiation sensitivity dx*/du at a solved equilibrium.

    Differentiates the pinned augmented system, so the returned (2N, 2N)
    matrix is the derivative of the mean-pinned representative; its projected
    norm is pin-invariant.
    """
    n = net.n_buses
    DF = _augmented_jacobian(net, params, eq.state)
    dfdu = np.zeros((2 * n + 1, 2 * n))
    dfdu[: 2 * n, : 2 * n] = params.input_matrix()
    return -np.linalg.solve(DF, dfdu)[: 2 * n]


@dataclass(frozen=True)
class InputBox:
    """Axis-aligned box of admissible constant inputs u = [p; q]."""

    lo: NDArray[np.float64]
    hi: NDArray[np.float64]

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValueError("need lo <= hi elementwise with equal shapes")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def center(self) -> NDArray[np.float64]:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return float(np.max(self.hi - self.lo))

    def sample(self, n_samples: int, seed: int) -> NDArray[np.float64]:
        """Center, corners (when cheap), and a Latin-hypercube fill."""
        pts = [self.center]
        d = self.lo.shape[0]
        if self.width > 0 and d <= 12:
            for mask in range(2**d):
                corner = np.where([(mask >> j) & 1 for j in range(d)],
                                  self.hi, self.lo)
                pts.append(corner)
        if self.width > 0 and n_samples > 0:
            u = qmc.LatinHypercube(d=d, seed=seed).random(n_samples)
            pts.extend(self.lo + u * (self.hi - self.lo))
        return np.unique(np.array(pts), axis=0)

    @classmethod
    def from_disturbance(cls, dist: Disturbance, t_grid: NDArray) -> "InputBox":
        """Envelope of the slow input path over a time grid."""
        vals = np.array([dist.slow(t) for t in np.asarray(t_grid, float)])
        return cls(vals.min(axis=0), vals.max(axis=0))


@dataclass(frozen=True)
class HEstimate:
    """Sampled uniform sensitivity bound H with audit evidence."""

    value: float
    argmax_u: NDArray[np.float64] | None
    n_samples: int
    ill_conditioned: bool
    fd_relative_error: float | None = None


def estimate_H(net: NetworkModel, params: DroopParams, u_box: InputBox,
               n_samples: int = 64, seed: int = 42,
               guess: SystemState | None = None,
               validate: bool = True) -> HEstimate:
    """H = max over sampled inputs of ||R dx*/du||_2.

    Near a stability limit the projected Jacobian turns singular; samples with
    smallest singular value below 1e-6 produce an infinite sentinel rather
    than a meaningless huge float.
    """
    proj = make_projection(net.n_buses)
    R = proj.r_full
    tracker = QuasiSteadyTracker(net, params, guess)
    best, best_u = -np.inf, None
    best_eq = None
    ill = False
    samples = u_box.sample(n_samples, seed)
    for u in samples:
        eq = tracker.solve(u)
        J_R = R @ jacobian(net, params, eq.state).full() @ R.T
        if np.linalg.svd(J_R, compute_uv=False)[-1] < _SINGULAR_SV:
            ill = True
            continue
        h = float(np.linalg.svd(R @ sensitivity(net, params, eq),
                                compute_uv=False)[0])
        if h > best:
            best, best_u, best_eq = h, u, eq
    if ill and best_u is None:
        return HEstimate(np.inf, None, len(samples), True)
    fd_err = None
    if validate and best_eq is not None:
        fd_err = _validate_sensitivity(net, params, best_eq, best_u)
        if fd_err > 1e-4:
            warnings.warn(f"sensitivity finite-difference check off by "
                          f"{fd_err:.2e}", stacklevel=2)
    return HEstimate(np.inf if ill else best, best_u, len(samples), ill, fd_err)


def _validate_sensitivity(net, params, eq, u, h=1e-6) -> float:
    """Relative FD error of one directional derivative of x*(u)."""
    sens = sensitivity(net, params, eq)
    rng = np.random.default_rng(0)
    d = rng.standard_normal(sens.shape[1])
    d /= np.linalg.norm(d)
    xp = solve_equilibrium(net, params, u + h * d, guess=eq.state).state
    xm = solve_equilibrium(net, params, u - h * d, guess=eq.state).state
    fd = (xp.as_vector() - xm.as_vector()) / (2 * h)
    ana = sens @ d
    return float(np.linalg.norm(fd - ana) / max(np.linalg.norm(ana), 1e-12))


def estimate_Lu(net: NetworkModel, params: DroopParams,
                u_bar: NDArray | None = None,
                u_set: InputBox | None = None) -> float:
    """Exact input-Lipschitz constant in the projected seminorm.

    The field is affine in u with constant input matrix diag(m_p, n_q/tau_v),
    so L_u is the operator norm of that matrix through R; ``u_bar`` and
    ``u_set`` only matter for the affine model insofar as they define the
    admissible inputs, not the value.
    """
    proj = make_projection(net.n_buses)
    return float(np.linalg.svd(proj.r_full @ params.input_matrix(),
                               compute_uv=False)[0])


# ---------------------------------------------------------------------------
# comparison dynamics
# ---------------------------------------------------------------------------

class ComparisonSolution:
    """rho(t) = exp(-c t) rho0 + int_0^t exp(-c (t-s)) r(s) ds.

    Piecewise-constant residuals are propagated by the exact segment formula;
    arbitrary callables fall back to adaptive quadrature of the convolution.
    """

    def __init__(self, c: float, rho0: float,
                 r: float | tuple[Sequence[float], Sequence[float]] | Callable[[float], float]):
        if c <= 0:
            raise ValueError("comparison dynamics need a rate c > 0")
        if rho0 < 0:
            raise ValueError("rho0 must be >= 0")
        self.c = float(c)
        self.rho0 = float(rho0)
        if callable(r):
            self._kind = "callable"
            self._r = r
        elif np.isscalar(r):
            if r < 0:
                raise ValueError("residual bound must be >= 0")
            self._kind = "piecewise"
            self._breaks = np.array([0.0])
            self._values = np.array([float(r)])
        else:
            breaks, values = r
            breaks = np.asarray(breaks, dtype=float)
            values = np.asarray(values, dtype=float)
            if breaks[0] != 0.0 or np.any(np.diff(breaks) <= 0):
                raise ValueError("breaks must start at 0 and increase")
            if len(values) != len(breaks) or np.any(values < 0):
                raise ValueError("need one value >= 0 per segment")
            self._kind = "piecewise"
            self._breaks = breaks
            self._values = values

    def at(self, t: float) -> float:
        return float(self.on_grid(np.array([t]))[0])

    def on_grid(self, ts: NDArray) -> NDArray[np.float64]:
        ts = np.asarray(ts, dtype=float)
        if np.any(ts < 0):
            raise ValueError("comparison solution defined for t >= 0")
        if self._kind == "callable":
            return np.array([self._convolve(t) for t in ts])
        c = self.c
        out = np.empty(ts.shape)
        for i, t in enumerate(ts):
            rho = self.rho0
            for b, v in zip(self._breaks, self._values):
                if t < b:
                    break
                seg_end = min(t, self._next_break(b))
                dt = seg_end - b
                rho = np.exp(-c * dt) * rho + (v / c) * (1 - np.exp(-c * dt))
                if seg_end >= t:
                    break
            out[i] = rho
        return out

    def _next_break(self, b: float) -> float:
        idx = np.searchsorted(self._breaks, b, side="right")
        return self._breaks[idx] if idx < len(self._breaks) else np.inf

    def _convolve(self, t: float) -> float:
        c = self.c
        tail, _ = quad(lambda s: np.exp(-c * (t - s)) * self._r(s), 0.0, t,
                       limit=200)
        return float(np.exp(-c * t) * self.rho0 + tail)

    @property
    def ultimate(self) -> float | None:
        """limsup of rho(t); defined for (piecewise-)constant residuals."""
        if self._kind == "piecewise":
            return float(self._values[-1] / self.c)
        return None


def comparison_radius(c: float, rho0: float, r) -> ComparisonSolution:
    """Solve the scalar comparison ODE rho_dot = -c rho + r(t)."""
    return ComparisonSolution(c, rho0, r)


# ---------------------------------------------------------------------------
# references and tubes
# ---------------------------------------------------------------------------

class ReferenceTrajectory:
    """Reference x_c(t) with kinds constant_point / quasi_steady_map /
    sampled_path; evaluation outside D is an error when a domain is attached."""

    def __init__(self, kind: str, eval_fn, deriv_fn,
                 net: NetworkModel | None = None,
                 dom: AdmissibleDomain | None = None):
        self.kind = kind
        self._eval = eval_fn
        self._deriv = deriv_fn
        self._net = net
        self._dom = dom

    def eval(self, t: float) -> SystemState:
        state = self._eval(t)
        if self._dom is not None and not self._dom.contains(self._net, state):
            raise ValueError(f"reference leaves the admissible domain at t={t:g}")
        return state

    def deriv(self, t: float) -> NDArray[np.float64]:
        return self._deriv(t)

    @classmethod
    def constant(cls, state: SystemState, net=None, dom=None):
        zero = np.zeros(2 * state.n_buses)
        return cls("constant_point", lambda t: state, lambda t: zero, net, dom)

    @classmethod
    def quasi_steady(cls, net: NetworkModel, params: DroopParams,
                     u: Disturbance | Callable[[float], NDArray],
                     guess: SystemState | None = None, dom=None):
        tracker = QuasiSteadyTracker(net, params, guess)
        u_slow = u.slow if isinstance(u, Disturbance) else u

        def ev(t: float) -> SystemState:
            return tracker.solve(u_slow(t)).state

        def dv(t: float, h: float = 1e-4) -> NDArray:
            a = tracker.solve(u_slow(t - h)).state.as_vector()
            b = tracker.solve(u_slow(t + h)).state.as_vector()
            return (b - a) / (2 * h)

        return cls("quasi_steady_map", ev, dv, net, dom)

    @classmethod
    def sampled(cls, times: NDArray, states: NDArray, net=None, dom=None):
        times = np.asarray(times, dtype=float)
        states = np.asarray(states, dtype=float)
        n = states.shape[1] // 2

        def ev(t: float) -> SystemState:
            x = np.array([np.interp(t, times, states[:, j])
                          for j in range(states.shape[1])])
            return SystemState(x[:n], x[n:])

        def dv(t: float, h: float = 1e-4) -> NDArray:
            return (ev(t + h).as_vector() - ev(t - h).as_vector()) / (2 * h)

        return cls("sampled_path", ev, dv, net, dom)


@dataclass(frozen=True)
class TubeCertificate:
    """Forward-invariant tube evidence around a reference trajectory."""

    rate: float
    rho0: float
    residual_sup: float
    rho: ComparisonSolution
    ultimate: float | None
    regime: str  # autonomous | slow | fast | composite
    reference: ReferenceTrajectory | None = None
    radius: float | None = None  # static radius (autonomous tubes)
    equilibrium_distance: float | None = None
    self_contained: bool | None = None
    notes: tuple[str, ...] = ()

    def bound_on_grid(self, ts: NDArray) -> NDArray[np.float64]:
        return self.rho.on_grid(ts)


def max_contained_radius(net: NetworkModel, dom: AdmissibleDomain,
                         x_c: SystemState) -> float:
    """Largest seminorm-ball radius around x_c that the conservative
    containment test keeps inside D."""
    caps = [x_c.v.min() - dom.v_min, dom.v_max - x_c.v.max()]
    for i, k in net.edges:
        gap = dom.gamma_max - abs(x_c.theta[i] - x_c.theta[k])
        caps.append(gap / np.sqrt(2.0))
    return float(min(caps))


def containment_slack(net: NetworkModel, dom: AdmissibleDomain,
                      x_c: SystemState, radius: float) -> float:
    """Worst-case slack of the conservative tube-inside-D test.

    A seminorm ball of the given radius moves voltages by at most ``radius``
    (norm-equivalence constant 1) and edge angle differences by at most
    ``sqrt(2) * radius``.  Nonnegative slack certifies containment.
    """
    slacks = [x_c.v.min() - radius - dom.v_min,
              dom.v_max - (x_c.v.max() + radius)]
    for i, k in net.edges:
        gap = dom.gamma_max - abs(x_c.theta[i] - x_c.theta[k])
        slacks.append(gap - np.sqrt(2.0) * radius)
    return float(min(slacks))


def _require_feasible(cert: ContractionCertificate) -> float:
    if not cert.feasible or cert.rate is None:
        raise ValueError("tube construction requires a feasible contraction "
                         "certificate")
    return cert.rate


def autonomous_tube(cert: ContractionCertificate, net: NetworkModel,
                    params: DroopParams, x_c: SystemState,
                    radius: float | None = None) -> TubeCertificate:
    """Static invariant ball around a constant reference (no equilibrium
    knowledge needed): any radius >= ||f(x_c)||_R / c that stays inside D is
    forward-invariant and contains the equilibrium manifold."""
    c = _require_feasible(cert)
    proj = make_projection(net.n_buses)
    r_res = seminorm(proj, vector_field(net, params, x_c, rotating=True))
    min_radius = r_res / c
    r_bar = max(min_radius, radius if radius is not None else min_radius)
    slack = containment_slack(net, cert.domain, x_c, r_bar)
    notes = ()
    if slack < 0:
        notes = ("not self-contained: tube exceeds the admissible domain "
                 f"(slack {slack:.3g})",)
        warnings.warn(notes[0], stacklevel=2)
    return TubeCertificate(
        rate=c, rho0=r_bar, residual_sup=r_res,
        rho=ComparisonSolution(c, r_bar, r_res),
        ultimate=min_radius, regime="autonomous",
        reference=ReferenceTrajectory.constant(x_c),
        radius=r_bar, equilibrium_distance=min_radius,
        self_contained=slack >= 0, notes=notes)


def tracking_bound(cert: ContractionCertificate, net: NetworkModel,
                   params: DroopParams, u: Disturbance, H: float,
                   epsilon: float, rho0: float = 0.0,
                   guess: SystemState | None = None) -> TubeCertificate:
    """Quasi-steady tracking tube under slowly varying inputs."""
    c = _require_feasible(cert)
    slope = u.max_slow_slope()
    if u.has_steps or slope > epsilon + 1e-12:
        raise ValueError(
            f"disturbance violates the declared slow-variation bound: "
            f"max slope {slope:.6g}, steps={u.has_steps}, epsilon={epsilon:.6g}")
    if u.max_fast_amplitude() > 0:
        raise ValueError("tracking_bound expects a slow-only disturbance; use "
                         "composite_bound for mixed signals")
    r = H * epsilon
    return TubeCertificate(
        rate=c, rho0=rho0, residual_sup=r,
        rho=ComparisonSolution(c, rho0, r), ultimate=r / c, regime="slow",
        reference=ReferenceTrajectory.quasi_steady(net, params, u, guess))


def robustness_bound(cert: ContractionCertificate, net: NetworkModel,
                     params: DroopParams, u_bar: NDArray, delta: float,
                     L_u: float, rho0: float = 0.0,
                     guess: SystemState | None = None) -> TubeCertificate:
    """Robust boundedness around the nominal manifold x*(u_bar)."""
    c = _require_feasible(cert)
    eq = solve_equilibrium(net, params, u_bar, guess=guess, dom=cert.domain)
    r = L_u * delta
    return TubeCertificate(
        rate=c, rho0=rho0, residual_sup=r,
        rho=ComparisonSolution(c, rho0, r), ultimate=r / c, regime="fast",
        reference=ReferenceTrajectory.constant(eq.state))


def composite_bound(cert: ContractionCertificate, H: float, epsilon: float,
                    L_u: float, delta: float, rho0: float = 0.0,
                    reference: ReferenceTrajectory | None = None) -> TubeCertificate:
    """Unified tube for slow ramps plus fast perturbations.

    The residual of the moving quasi-steady reference splits additively, so
    the bound is the comparison solution with r = H eps + L_u delta.
    """
    for name, val in (("H", H), ("epsilon", epsilon), ("L_u", L_u),
                      ("delta", delta), ("rho0", rho0)):
        if val < 0:
            raise ValueError(f"{name} must be >= 0")
    c = _require_feasible(cert)
    r = H * epsilon + L_u * delta
    return TubeCertificate(
        rate=c, rho0=rho0, residual_sup=r,
        rho=ComparisonSolution(c, rho0, r), ultimate=r / c,
        regime="composite", reference=reference)
