"""Scenario files: one TOML document per study case.

Sections: ``[network]`` (reduced line list, explicit G/B matrices, or a full
pre-reduction network plus the retained bus set), ``[droop]``, ``[domain]``,
``[disturbance]``, and ``[solver]``.  Matrices are row-major nested arrays;
bus indices in files are 1-based.  Every type invariant is checked on load
and violations name the offending section and field.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - py3.10 fallback
    import tomli as tomllib

from .network import AdmissibleDomain, DroopParams, NetworkModel, kron_reduce
from .simulate import DisturbanceSpec, FastComponent, Ramp, Step

__all__ = ["Scenario", "SolverSettings", "ScenarioError", "load_scenario",
           "bundled_scenario", "bundled_scenario_path", "BUNDLED"]

BUNDLED = ("case_3bus", "case_3bus_certified", "case_3bus_slow",
           "case_3bus_composite")


class ScenarioError(ValueError):
    """Parse or invariant failure, annotated with section/field context."""


@dataclass(frozen=True)
class SolverSettings:
    rtol: float = 1e-8
    atol: float = 1e-10
    seed: int = 42
    grid_points: int = 15
    newton_tol: float = 1e-12

    def __post_init__(self) -> None:
        if self.rtol <= 0 or self.atol <= 0:
            raise ScenarioError("[solver] tolerances must be positive")
        if self.grid_points < 2:
            raise ScenarioError("[solver] grid_points must be >= 2")


@dataclass(frozen=True)
class Scenario:
    name: str
    network: NetworkModel
    droop: DroopParams
    domain: AdmissibleDomain
    disturbance: DisturbanceSpec
    solver: SolverSettings


def _need(table: dict, section: str, key: str):
    if key not in table:
        raise ScenarioError(f"[{section}] is missing required key {key!r}")
    return table[key]


def _vector(table: dict, section: str, key: str, n: int) -> np.ndarray:
    raw = _need(table, section, key)
    v = np.asarray(raw, dtype=float)
    if v.shape != (n,):
        raise ScenarioError(
            f"[{section}] {key} must be a length-{n} array, got shape {v.shape}")
    return v


def _load_network(table: dict) -> NetworkModel:
    n = int(_need(table, "network", "n_buses"))
    if n < 1:
        raise ScenarioError("[network] n_buses must be >= 1")
    meta = {"base_mva": table.get("base_mva"),
            "base_kv": table.get("base_kv"),
            "base_hz": table.get("base_hz")}
    try:
        if "lines" in table:
            lines = [(int(i) - 1, int(k) - 1, float(r), float(x))
                     for i, k, r, x in table["lines"]]
            return NetworkModel.from_lines(
                n, lines, table.get("shunt_g"), table.get("shunt_b"), **meta)
        if "g_matrix" in table or "b_matrix" in table:
            G = np.asarray(_need(table, "network", "g_matrix"), dtype=float)
            B = np.asarray(_need(table, "network", "b_matrix"), dtype=float)
            edges = tuple((i, k) for i in range(n) for k in range(i + 1, n)
                          if abs(G[i, k]) > 1e-12 or abs(B[i, k]) > 1e-12)
            return NetworkModel(n, G, B, edges, **meta)
        if "full_lines" in table:
            m = int(_need(table, "network", "n_full_buses"))
            retained = [int(i) - 1 for i in _need(table, "network", "retained")]
            if len(retained) != n:
                raise ScenarioError(
                    f"[network] retained must list n_buses={n} buses")
            full = NetworkModel.from_lines(
                m, [(int(i) - 1, int(k) - 1, float(r), float(x))
                    for i, k, r, x in table["full_lines"]],
                table.get("full_shunt_g"), table.get("full_shunt_b"))
            red = kron_reduce(full.conductance, full.susceptance, retained)
            return NetworkModel(n, red.conductance, red.susceptance,
                                red.edges, **meta)
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"[network] invalid: {exc}") from exc
    raise ScenarioError("[network] needs 'lines', 'g_matrix'/'b_matrix', or "
                        "'full_lines' + 'retained'")


def _load_droop(table: dict, n: int) -> DroopParams:
    try:
        return DroopParams(
            m_p=_vector(table, "droop", "m_p", n),
            n_q=_vector(table, "droop", "n_q", n),
            tau_v=_vector(table, "droop", "tau_v", n),
            omega_nom=2 * np.pi * float(_need(table, "droop", "f_nom_hz")),
            v_nom=_vector(table, "droop", "v_nom", n),
            p_ref=_vector(table, "droop", "p_ref", n),
            q_ref=_vector(table, "droop", "q_ref", n),
        )
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"[droop] invariant violation: {exc}") from exc


def _load_domain(table: dict) -> AdmissibleDomain:
    try:
        return AdmissibleDomain(
            v_min=float(_need(table, "domain", "v_min")),
            v_max=float(_need(table, "domain", "v_max")),
            gamma_max=np.deg2rad(float(_need(table, "domain", "gamma_max_deg"))),
        )
    except ValueError as exc:
        raise ScenarioError(f"[domain] invariant violation: {exc}") from exc


def _load_disturbance(table: dict) -> DisturbanceSpec:
    def steps():
        for s in table.get("steps", []):
            yield Step(str(s["channel"]), float(s["magnitude"]),
                       float(s["time"]) if "time" in s else None)

    def ramps():
        for r in table.get("ramps", []):
            yield Ramp(str(r["channel"]), float(r["slope"]),
                       float(r["duration"]),
                       float(r["start"]) if "start" in r else None)

    def fast():
        for f in table.get("fast", []):
            yield FastComponent(str(f["channel"]), float(f["amplitude"]),
                                str(f.get("waveform", "square")),
                                float(f.get("period", 0.2)),
                                float(f["start"]) if "start" in f else None)

    try:
        return DisturbanceSpec(
            t_start=float(table.get("t_start", 0.0)),
            steps=tuple(steps()), ramps=tuple(ramps()), fast=tuple(fast()),
            epsilon=float(table.get("epsilon", 0.0)),
            delta=float(table.get("delta", 0.0)),
            seed=int(table.get("seed", 42)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"[disturbance] invalid entry: {exc}") from exc


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file; all invariants checked on load."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path.name}: TOML parse error: {exc}") from exc

    for section in ("network", "droop", "domain", "solver"):
        if section not in doc:
            raise ScenarioError(f"{path.name}: missing [{section}] section")
    net = _load_network(doc["network"])
    droop = _load_droop(doc["droop"], net.n_buses)
    dom = _load_domain(doc["domain"])
    dist = _load_disturbance(doc.get("disturbance", {}))
    for comp in list(dist.steps) + list(dist.ramps) + list(dist.fast):
        from .simulate import channel_index
        try:
            channel_index(comp.channel, net.n_buses)
        except ValueError as exc:
            raise ScenarioError(f"[disturbance] {exc}") from exc
    solver_tab = doc["solver"]
    solver = SolverSettings(
        rtol=float(solver_tab.get("rtol", 1e-8)),
        atol=float(solver_tab.get("atol", 1e-10)),
        seed=int(solver_tab.get("seed", 42)),
        grid_points=int(solver_tab.get("grid_points", 15)),
        newton_tol=float(solver_tab.get("newton_tol", 1e-12)),
    )
    return Scenario(path.stem, net, droop, dom, dist, solver)


def bundled_scenario_path(name: str) -> Path:
    """Filesystem path of a packaged scenario (see ``BUNDLED``)."""
    if name not in BUNDLED:
        raise ScenarioError(f"unknown bundled scenario {name!r}; "
                            f"available: {', '.join(BUNDLED)}")
    return Path(resources.files("droopcert") / "scenarios" / f"{name}.toml")


def bundled_scenario(name: str) -> Scenario:
    return load_scenario(bundled_scenario_path(name))
