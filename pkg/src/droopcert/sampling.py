"""Domain sampling and deterministic maximization over the operating box.

Because every Jacobian quantity depends on angles only through differences,
states are parameterized by the N-1 reduced coordinates y_i = theta_i -
theta_N (theta_N pinned to zero) plus the N voltages.  Candidate points that
violate a pairwise edge constraint |theta_i - theta_k| <= gamma_max are
rejected.  Results are independent of the parallelism degree: chunked
evaluation feeds an order-independent max reduction.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import qmc

from .network import AdmissibleDomain, NetworkModel

__all__ = ["SearchSettings", "DomainSample", "sample_states", "grid_states",
           "maximize_over_domain"]

#: objective(theta(M, N), v(M, N)) -> (M,) values, one per objective
BatchObjective = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SearchSettings:
    """Knobs for the domain maximizer.

    A dense stratified grid (``grid_points`` per dimension) is used for
    N <= 4; larger networks switch to Latin-hypercube sampling with at least
    ``lhs_points`` candidates.  The best ``polish_starts`` points are refined
    by coordinate-wise golden-section ascent.
    """

    grid_points: int = 15
    lhs_points: int = 100_000
    polish_starts: int = 10
    polish_sweeps: int = 3
    jobs: int = 1
    seed: int = 42
    chunk: int = 65536


@dataclass(frozen=True)
class DomainSample:
    theta: np.ndarray  # (M, N)
    v: np.ndarray      # (M, N)


def _angles_feasible(y: np.ndarray, edges, gamma: float, n: int) -> np.ndarray:
    """Feasibility mask for reduced angle coordinates (theta_N = 0)."""
    theta = np.concatenate([y, np.zeros((y.shape[0], 1))], axis=1)
    ok = np.ones(y.shape[0], dtype=bool)
    for i, k in edges:
        ok &= np.abs(theta[:, i] - theta[:, k]) <= gamma
    return ok


def _expand(y: np.ndarray) -> np.ndarray:
    return np.concatenate([y, np.zeros((y.shape[0], 1))], axis=1)


def sample_states(net: NetworkModel, dom: AdmissibleDomain, n_states: int,
                  rng: np.random.Generator) -> DomainSample:
    """Uniform rejection sample of ``n_states`` states in D (reduced angles)."""
    n = net.n_buses
    g = dom.gamma_max
    thetas, volts = [], []
    have = 0
    while have < n_states:
        m = max(2 * (n_states - have), 1024)
        y = rng.uniform(-g, g, size=(m, n - 1)) if n > 1 else np.zeros((m, 0))
        ok = _angles_feasible(y, net.edges, g, n)
        y = y[ok][: n_states - have]
        thetas.append(_expand(y))
        volts.append(rng.uniform(dom.v_min, dom.v_max, size=(y.shape[0], n)))
        have += y.shape[0]
    return DomainSample(np.vstack(thetas), np.vstack(volts))


def grid_states(net: NetworkModel, dom: AdmissibleDomain,
                points_per_dim: int) -> DomainSample:
    """Full stratified grid over (reduced angles, voltages), filtered to D."""
    n = net.n_buses
    g = dom.gamma_max
    axes = [np.linspace(-g, g, points_per_dim)] * (n - 1)
    axes += [np.linspace(dom.v_min, dom.v_max, points_per_dim)] * n
    mesh = np.meshgrid(*axes, indexing="ij") if axes else []
    if not mesh:  # N == 1: voltages only
        v = np.linspace(dom.v_min, dom.v_max, points_per_dim)[:, None]
        return DomainSample(np.zeros_like(v), v)
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    y, v = pts[:, : n - 1], pts[:, n - 1 :]
    ok = _angles_feasible(y, net.edges, g, n)
    return DomainSample(_expand(y[ok]), v[ok])


def _lhs_states(net: NetworkModel, dom: AdmissibleDomain, n_points: int,
                seed: int) -> DomainSample:
    n = net.n_buses
    sampler = qmc.LatinHypercube(d=2 * n - 1, seed=seed)
    u = sampler.random(n_points)
    g = dom.gamma_max
    y = (2 * u[:, : n - 1] - 1) * g
    v = dom.v_min + u[:, n - 1 :] * (dom.v_max - dom.v_min)
    ok = _angles_feasible(y, net.edges, g, n)
    return DomainSample(_expand(y[ok]), v[ok])


def _coordinate_bounds(y: np.ndarray, j: int, edges, gamma: float,
                       n: int) -> tuple[float, float]:
    """Bounds for angle coordinate j given the others (edge constraints)."""
    theta = np.concatenate([y, [0.0]])
    lo, hi = -np.inf, np.inf
    for i, k in edges:
        if i == j or k == j:
            other = theta[k] if i == j else theta[i]
            lo = max(lo, other - gamma)
            hi = min(hi, other + gamma)
    if not np.isfinite(lo):  # isolated bus: keep it inside the nominal box
        lo, hi = -gamma, gamma
    return lo, hi


def _polish(objective: BatchObjective, theta0: np.ndarray, v0: np.ndarray,
            net: NetworkModel, dom: AdmissibleDomain,
            sweeps: int) -> tuple[float, np.ndarray, np.ndarray]:
    """Coordinate-wise golden-section ascent from one start point."""
    n = net.n_buses
    y = theta0[: n - 1].copy()
    v = v0.copy()

    def value() -> float:
        return float(objective(_expand(y[None, :]), v[None, :])[0])

    best = value()
    for _ in range(sweeps):
        for j in range(n - 1):
            lo, hi = _coordinate_bounds(y, j, net.edges, dom.gamma_max, n)
            if hi <= lo:
                continue

            def f(t: float, j=j) -> float:
                y_try = y.copy()
                y_try[j] = t
                return -float(objective(_expand(y_try[None, :]), v[None, :])[0])

            res = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-10})
            if -res.fun > best:
                best, y[j] = -res.fun, float(res.x)
        for j in range(n):

            def f(t: float, j=j) -> float:
                v_try = v.copy()
                v_try[j] = t
                return -float(objective(_expand(y[None, :]), v_try[None, :])[0])

            res = minimize_scalar(f, bounds=(dom.v_min, dom.v_max),
                                  method="bounded", options={"xatol": 1e-10})
            if -res.fun > best:
                best, v[j] = -res.fun, float(res.x)
    return best, _expand(y[None, :])[0], v


def maximize_over_domain(objectives: Sequence[BatchObjective],
                         net: NetworkModel, dom: AdmissibleDomain,
                         settings: SearchSettings | None = None):
    """Maximize each objective over D; all objectives share one state sweep.

    Returns a list of ``(value, theta, v, method)`` tuples, one per
    objective.  method is "grid" for N <= 4 and "multistart" (LHS) otherwise;
    both are followed by golden-section polish.
    """
    settings = settings or SearchSettings()
    n = net.n_buses
    if n <= 4:
        sample = grid_states(net, dom, settings.grid_points)
        method = "grid"
    else:
        sample = _lhs_states(net, dom, max(settings.lhs_points, 1), settings.seed)
        method = "multistart"

    m = sample.theta.shape[0]
    chunks = [slice(i, min(i + settings.chunk, m))
              for i in range(0, m, settings.chunk)]

    def eval_chunk(sl: slice) -> list[np.ndarray]:
        return [obj(sample.theta[sl], sample.v[sl]) for obj in objectives]

    if settings.jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=settings.jobs) as pool:
            per_chunk = list(pool.map(eval_chunk, chunks))
    else:
        per_chunk = [eval_chunk(sl) for sl in chunks]

    results = []
    for i_obj, obj in enumerate(objectives):
        vals = np.concatenate([c[i_obj] for c in per_chunk])
        order = np.argsort(vals)[::-1][: settings.polish_starts]
        best_val = float(vals[order[0]])
        best_theta = sample.theta[order[0]]
        best_v = sample.v[order[0]]
        for idx in order:
            val, th, v = _polish(obj, sample.theta[idx], sample.v[idx],
                                 net, dom, settings.polish_sweeps)
            if val > best_val:
                best_val, best_theta, best_v = val, th, v
        results.append((best_val, best_theta, best_v, method))
    return results
