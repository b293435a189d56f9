"""Droop ODE integration and bounded disturbance signal generation.

Integration defaults to the rotating reference frame, theta_dot_i =
-m_p_i (P_i - P_i^ref(t)), so droop equilibria are genuine fixed points; the
common omega_nom drift lives entirely in the seminorm kernel and cannot affect
any projected quantity.  Signals are composed of steps, bounded ramps, and a
fast component (square / sinusoid / seeded uniform dither) per channel, with
declared slope and amplitude bounds checked at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import solve_ivp

from .network import DroopParams, NetworkModel, SystemState, coupling_terms

__all__ = [
    "Step",
    "Ramp",
    "FastComponent",
    "DisturbanceSpec",
    "Disturbance",
    "make_disturbance",
    "vector_field",
    "integrate",
    "integrate_batch",
    "Trajectory",
    "IntegrationError",
]

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10


class IntegrationError(RuntimeError):
    pass


def channel_index(channel: str, n: int) -> int:
    """Map 'p<i>' / 'q<i>' (1-based bus) to an index into u = [p; q]."""
    kind, bus = channel[0], int(channel[1:])
    if kind not in "pq" or not (1 <= bus <= n):
        raise ValueError(f"invalid channel {channel!r} for N={n}")
    return bus - 1 + (0 if kind == "p" else n)


@dataclass(frozen=True)
class Step:
    channel: str
    magnitude: float
    time: float | None = None  # defaults to the spec's t_start


@dataclass(frozen=True)
class Ramp:
    channel: str
    slope: float
    duration: float
    start: float | None = None


@dataclass(frozen=True)
class FastComponent:
    channel: str
    amplitude: float
    waveform: str = "square"  # square | sinusoid | uniform
    period: float = 0.2
    start: float | None = None


@dataclass(frozen=True)
class DisturbanceSpec:
    """Declarative description of the exogenous input u(t) = [p(t); q(t)]."""

    t_start: float = 0.0
    steps: tuple[Step, ...] = ()
    ramps: tuple[Ramp, ...] = ()
    fast: tuple[FastComponent, ...] = ()
    epsilon: float = 0.0  # declared sup ||d u_slow / dt||_2
    delta: float = 0.0    # declared sup ||u_fast(t)||_2
    seed: int = 42


class Disturbance:
    """Evaluated disturbance signal with declared-bound verification.

    Use :func:`make_disturbance`; construction raises if the composed signal
    violates the declared epsilon (slope of the ramp part) or delta (fast
    amplitude).  The object is immutable and safe to share across threads.
    """

    def __init__(self, spec: DisturbanceSpec, n_buses: int,
                 horizon: float = 1e4):
        self.spec = spec
        self.n_buses = n_buses
        self._dim = 2 * n_buses
        t0 = spec.t_start
        self._steps = [(channel_index(s.channel, n_buses), s.magnitude,
                        t0 if s.time is None else s.time) for s in spec.steps]
        self._ramps = [(channel_index(r.channel, n_buses), r.slope,
                        t0 if r.start is None else r.start, r.duration)
                       for r in spec.ramps]
        rng = np.random.default_rng(spec.seed)
        self._fast = []
        for f in spec.fast:
            start = t0 if f.start is None else f.start
            if f.waveform == "uniform":
                n_vals = int(np.ceil(horizon / f.period)) + 1
                values = rng.uniform(-1.0, 1.0, size=n_vals)
            elif f.waveform == "square":
                values = np.array([1.0 if rng.random() < 0.5 else -1.0])
            elif f.waveform == "sinusoid":
                values = np.empty(0)
            else:
                raise ValueError(f"unknown fast waveform {f.waveform!r}")
            self._fast.append((channel_index(f.channel, n_buses), f.amplitude,
                               f.waveform, f.period, start, values))
        self._verify_declared_bounds()

    # -- signal evaluation --------------------------------------------------

    def slow(self, t: float) -> NDArray[np.float64]:
        u = np.zeros(self._dim)
        for ch, mag, time in self._steps:
            if t >= time:
                u[ch] += mag
        for ch, slope, start, dur in self._ramps:
            u[ch] += slope * float(np.clip(t - start, 0.0, dur))
        return u

    def fast_part(self, t: float) -> NDArray[np.float64]:
        u = np.zeros(self._dim)
        for ch, amp, waveform, period, start, values in self._fast:
            if t < start:
                continue
            phase = t - start
            if waveform == "sinusoid":
                u[ch] += amp * np.sin(2 * np.pi * phase / period)
            elif waveform == "square":
                half = int(phase // (period / 2.0))
                u[ch] += amp * values[0] * (1.0 if half % 2 == 0 else -1.0)
            else:  # uniform dither, piecewise constant per period
                j = min(int(phase // period), len(values) - 1)
                u[ch] += amp * values[j]
        return u

    def __call__(self, t: float) -> NDArray[np.float64]:
        return self.slow(t) + self.fast_part(t)

    def slow_slope(self, t: float) -> NDArray[np.float64]:
        s = np.zeros(self._dim)
        for ch, slope, start, dur in self._ramps:
            if start <= t < start + dur:
                s[ch] += slope
        return s

    def breakpoints(self, t0: float, t1: float) -> NDArray[np.float64]:
        """Discontinuity/corner times in (t0, t1), for segmented integration."""
        pts = set()
        for _, _, time in self._steps:
            pts.add(time)
        for _, _, start, dur in self._ramps:
            pts.update((start, start + dur))
        for _, _, waveform, period, start, values in self._fast:
            if waveform == "sinusoid":
                continue
            step = period / 2.0 if waveform == "square" else period
            if t1 > start:
                ks = np.arange(max(0, np.floor((t0 - start) / step)),
                               np.ceil((t1 - start) / step) + 1)
                pts.update(start + ks * step)
        return np.array(sorted(p for p in pts if t0 < p < t1))

    # -- declared bounds ----------------------------------------------------

    def max_slow_slope(self) -> float:
        """Exact sup over t of ||d u_slow/dt||_2 (ramp corners enumerate it)."""
        times = sorted({s for _, _, s, d in self._ramps for s in (s, s + d)})
        if not times:
            return 0.0
        probes = [0.5 * (a + b) for a, b in zip(times[:-1], times[1:])]
        probes += [times[0] - 1.0, times[-1] + 1.0, times[0] + 1e-9]
        return max(float(np.linalg.norm(self.slow_slope(t))) for t in probes)

    def max_fast_amplitude(self) -> float:
        """Conservative exact sup of ||u_fast(t)||_2 (per-channel amplitudes)."""
        amps = np.zeros(self._dim)
        for ch, amp, *_ in self._fast:
            amps[ch] += abs(amp)
        return float(np.linalg.norm(amps))

    @property
    def has_steps(self) -> bool:
        return any(mag != 0.0 for _, mag, _ in self._steps)

    def _verify_declared_bounds(self) -> None:
        tol = 1e-12
        eps = self.max_slow_slope()
        if eps > self.spec.epsilon + tol:
            raise ValueError(
                f"ramp slopes reach ||du/dt|| = {eps:.6g}, above the declared "
                f"epsilon = {self.spec.epsilon:.6g}")
        dly = self.max_fast_amplitude()
        if dly > self.spec.delta + tol:
            raise ValueError(
                f"fast components reach ||u~|| = {dly:.6g}, above the declared "
                f"delta = {self.spec.delta:.6g}")


def make_disturbance(spec: DisturbanceSpec, n_buses: int) -> Disturbance:
    """Build the callable signal; raises on declared-bound violation."""
    return Disturbance(spec, n_buses)


# ---------------------------------------------------------------------------
# vector field and integration
# ---------------------------------------------------------------------------

def _rates(net: NetworkModel, params: DroopParams, theta: NDArray, v: NDArray,
           u: NDArray | None, rotating: bool):
    """Batched droop dynamics right-hand side; theta, v of shape (..., N)."""
    if np.any(v <= 0):
        raise IntegrationError("voltage magnitude left the positive orthant")
    n = net.n_buses
    _, _, p, q = coupling_terms(net, theta, v)
    p_ref = params.p_ref
    q_ref = params.q_ref
    if u is not None:
        p_ref = p_ref + u[..., :n]
        q_ref = q_ref + u[..., n:]
    dth = -params.m_p * (p - p_ref)
    if not rotating:
        dth = dth + params.omega_nom
    dv = (params.v_nom - v - params.n_q * (q - q_ref)) / params.tau_v
    return dth, dv


def vector_field(net: NetworkModel, params: DroopParams, state: SystemState,
                 u: Callable[[float], NDArray] | NDArray | None = None,
                 t: float = 0.0, rotating: bool = True) -> NDArray[np.float64]:
    """State rate f(x, u(t)) stacked as [theta_dot; v_dot]."""
    uv = u(t) if callable(u) else u
    dth, dv = _rates(net, params, state.theta, state.v, uv, rotating)
    return np.concatenate([dth, dv])


@dataclass(frozen=True)
class Trajectory:
    """Integration output on the requested time grid."""

    times: NDArray[np.float64]
    states: NDArray[np.float64]  # (n_times, 2N)
    n_buses: int
    domain_exit: float | None = None  # first grid time outside D, if monitored

    def __post_init__(self) -> None:
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.states.shape != (self.times.shape[0], 2 * self.n_buses):
            raise ValueError("states shape does not match times/n_buses")

    @property
    def theta(self) -> NDArray[np.float64]:
        return self.states[:, : self.n_buses]

    @property
    def v(self) -> NDArray[np.float64]:
        return self.states[:, self.n_buses :]

    def state_at(self, i: int) -> SystemState:
        return SystemState(self.theta[i], self.v[i])


def _segment_times(u: Disturbance | None, t_span, t_eval):
    t0, t1 = float(t_span[0]), float(t_span[1])
    breaks = u.breakpoints(t0, t1) if isinstance(u, Disturbance) else np.empty(0)
    edges = np.concatenate([[t0], breaks, [t1]])
    if t_eval is None:
        t_eval = np.linspace(t0, t1, 601)
    return edges, np.asarray(t_eval, dtype=float)


def _run_segments(rhs, x0, edges, t_eval, rtol, atol):
    """solve_ivp restarted at input discontinuities, sampled on t_eval."""
    out = np.empty((t_eval.shape[0], x0.shape[0]))
    filled = 0
    x = np.asarray(x0, dtype=float)
    for a, b in zip(edges[:-1], edges[1:]):
        mask = (t_eval >= a) & (t_eval <= b) if b == edges[-1] else \
               (t_eval >= a) & (t_eval < b)
        ts = t_eval[mask]
        sol = solve_ivp(rhs, (a, b), x, method="RK45", rtol=rtol, atol=atol,
                        t_eval=ts if ts.size else None, dense_output=False)
        if not sol.success:
            raise IntegrationError(
                f"integrator failed on [{a:g}, {b:g}]: {sol.message}")
        if ts.size:
            out[filled : filled + ts.size] = sol.y.T
            filled += ts.size
        x = sol.y[:, -1] if sol.y.size else x
    if filled != t_eval.shape[0]:
        raise IntegrationError("output grid not fully covered by segments")
    return out


def integrate(net: NetworkModel, params: DroopParams, x0: SystemState,
              u: Disturbance | Callable[[float], NDArray] | None = None,
              t_span=(0.0, 60.0), rtol: float = DEFAULT_RTOL,
              atol: float = DEFAULT_ATOL, t_eval=None,
              dom=None, guard: float = 1e3,
              rotating: bool = True) -> Trajectory:
    """Adaptive RK45 integration of the droop ODE with dense grid output.

    ``u`` may be a Disturbance (integration is restarted at its
    discontinuities), any callable t -> u-vector, or None (autonomous).
    ``dom`` enables leaves-domain monitoring on the output grid; ``guard``
    aborts if any state magnitude exceeds it.
    """
    n = net.n_buses

    def rhs(t, x):
        if np.abs(x).max() > guard:
            raise IntegrationError(f"state left the guard box (|x| > {guard:g})")
        uv = u(t) if callable(u) else u
        dth, dv = _rates(net, params, x[:n], x[n:], uv, rotating)
        return np.concatenate([dth, dv])

    edges, t_eval = _segment_times(u, t_span, t_eval)
    states = _run_segments(rhs, x0.as_vector(), edges, t_eval, rtol, atol)
    exit_time = None
    if dom is not None:
        for i, t in enumerate(t_eval):
            if not dom.contains(net, SystemState(states[i, :n], states[i, n:])):
                exit_time = float(t)
                break
    return Trajectory(t_eval, states, n, exit_time)


def integrate_batch(net: NetworkModel, params: DroopParams,
                    x0s: Sequence[SystemState],
                    u: Disturbance | Callable[[float], NDArray] | None = None,
                    t_span=(0.0, 60.0), rtol: float = DEFAULT_RTOL,
                    atol: float = DEFAULT_ATOL, t_eval=None,
                    rotating: bool = True) -> list[Trajectory]:
    """Integrate many initial conditions as one stacked system.

    All trajectories share the input signal and the adaptive step sequence;
    per-trajectory accuracy is slightly looser than a dedicated solve, which
    is acceptable for envelope checks with orders-of-magnitude slack.
    """
    n = net.n_buses
    m = len(x0s)
    X0 = np.stack([s.as_vector() for s in x0s])  # (m, 2n)

    def rhs(t, xflat):
        x = xflat.reshape(m, 2 * n)
        uv = u(t) if callable(u) else u
        dth, dv = _rates(net, params, x[:, :n], x[:, n:], uv, rotating)
        return np.concatenate([dth, dv], axis=1).ravel()

    edges, t_eval = _segment_times(u, t_span, t_eval)
    flat = _run_segments(rhs, X0.ravel(), edges, t_eval, rtol, atol)
    stacked = flat.reshape(t_eval.shape[0], m, 2 * n)
    return [Trajectory(t_eval, stacked[:, j], n) for j in range(m)]
