"""Command-line front end.

Subcommands: certify, jacobian, simulate, tube-auto, tube-track, tube-robust,
tube-composite, oracles, reproduce.  The output directory can be overridden
with the DROOPCERT_OUT_DIR environment variable (and only that; every other
option is explicit).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .harness import (certificate_summary, certificate_text, composite_study,
                      reproduce_benchmark, run_oracles, slow_tracking_study,
                      RunReport, _write_csv)
from .jacobian import jacobian, make_projection
from .margins import certificate
from .network import SystemState
from .sampling import SearchSettings
from .scenario import BUNDLED, Scenario, bundled_scenario, load_scenario
from .simulate import integrate, make_disturbance
from .tubes import (InputBox, autonomous_tube, estimate_H, estimate_Lu,
                    robustness_bound, seminorm, solve_equilibrium)


def _scenario(arg: str) -> Scenario:
    if arg in BUNDLED:
        return bundled_scenario(arg)
    return load_scenario(arg)


def _out_dir(args) -> Path:
    out = os.environ.get("DROOPCERT_OUT_DIR", args.out_dir)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _settings(scn: Scenario, args) -> SearchSettings:
    return SearchSettings(grid_points=scn.solver.grid_points, jobs=args.jobs,
                          seed=args.seed if args.seed is not None
                          else scn.solver.seed)


def _load_state(path: str, n: int) -> SystemState:
    if sys.version_info >= (3, 11):
        import tomllib
    else:  # pragma: no cover
        import tomli as tomllib
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    tab = doc.get("state", doc)
    return SystemState(np.asarray(tab["theta"], float),
                       np.asarray(tab["v"], float))


def cmd_certify(args) -> int:
    scn = _scenario(args.scenario)
    cert = certificate(scn.network, scn.droop, scn.domain, _settings(scn, args))
    print(certificate_text(cert))
    out = _out_dir(args)
    with open(out / f"certificate_{scn.name}.json", "w") as fh:
        json.dump(certificate_summary(cert), fh, indent=2)
    print(f"wrote {out / f'certificate_{scn.name}.json'}")
    return 0 if cert.feasible else 1


def cmd_jacobian(args) -> int:
    scn = _scenario(args.scenario)
    state = _load_state(args.state, scn.network.n_buses)
    blocks = jacobian(scn.network, scn.droop, state)
    out = _out_dir(args)
    path = out / f"jacobian_{scn.name}.csv"
    n = scn.network.n_buses
    with open(path, "w", newline="") as fh:
        fh.write("block,row,col,value\n")
        for name in ("j_tt", "j_tv", "j_vt", "j_vv"):
            M = getattr(blocks, name)
            for i in range(n):
                for k in range(n):
                    fh.write(f"{name},{i + 1},{k + 1},{M[i, k]:.12e}\n")
    print(f"wrote {path}")
    return 0


def cmd_simulate(args) -> int:
    scn = _scenario(args.scenario)
    net, params = scn.network, scn.droop
    dist = make_disturbance(scn.disturbance, net.n_buses)
    if args.x0 == "equilibrium":
        x0 = solve_equilibrium(net, params, dist(0.0)).state
    elif args.x0 == "flat":
        x0 = SystemState(np.zeros(net.n_buses), params.v_nom.copy())
    else:
        x0 = _load_state(args.x0, net.n_buses)
    ts = np.round(np.arange(0.0, args.t_end + 5e-4, 1e-3), 6)
    traj = integrate(net, params, x0, dist, (0.0, args.t_end),
                     scn.solver.rtol, scn.solver.atol, ts, dom=scn.domain)
    proj = make_projection(net.n_buses)
    eq = solve_equilibrium(net, params, dist(0.0), guess=x0)
    err = np.linalg.norm(proj.apply(traj.states - eq.state.as_vector()), axis=1)
    out = _out_dir(args)
    path = out / (args.out or f"simulate_{scn.name}.csv")
    n = net.n_buses
    headers = (["t"] + [f"theta{i+1}" for i in range(n)]
               + [f"v{i+1}" for i in range(n)] + ["error_R"])
    cols = [ts] + [traj.theta[:, i] for i in range(n)] \
        + [traj.v[:, i] for i in range(n)] + [err]
    _write_csv(path, headers, cols)
    if traj.domain_exit is not None:
        print(f"WARNING: trajectory left the admissible domain at "
              f"t = {traj.domain_exit:g} s")
    print(f"wrote {path}")
    return 0


def _feasible_cert(scn: Scenario, args):
    cert = certificate(scn.network, scn.droop, scn.domain, _settings(scn, args))
    if not cert.feasible:
        print(certificate_text(cert))
        print("cannot build tubes: certificate infeasible on this domain "
              "(try the *_certified scenario)", file=sys.stderr)
        return None
    return cert


def cmd_tube_auto(args) -> int:
    scn = _scenario(args.scenario)
    cert = _feasible_cert(scn, args)
    if cert is None:
        return 1
    net, params = scn.network, scn.droop
    eq = solve_equilibrium(net, params, dom=scn.domain)
    x_c = SystemState(eq.state.theta + args.offset * _transverse_dir(net),
                      eq.state.v.copy())
    tube = autonomous_tube(cert, net, params, x_c, radius=args.radius)
    ts = np.round(np.arange(0.0, args.t_end + 5e-3, 1e-2), 6)
    traj = integrate(net, params, x_c, None, (0.0, args.t_end),
                     scn.solver.rtol, scn.solver.atol, ts)
    proj = make_projection(net.n_buses)
    dev = np.linalg.norm(proj.apply(traj.states - x_c.as_vector()), axis=1)
    out = _out_dir(args)
    path = _write_csv(out / f"tube_auto_{scn.name}.csv",
                      ["t", "rho", "deviation"],
                      [ts, tube.bound_on_grid(ts), dev])
    print(f"radius = {tube.radius:.6g} (minimal {tube.ultimate:.6g}), "
          f"self-contained = {tube.self_contained}")
    print(f"wrote {path}")
    return 0


def _transverse_dir(net) -> np.ndarray:
    d = np.zeros(net.n_buses)
    d[0], d[-1] = 1.0, -1.0
    return d


def cmd_tube_track(args) -> int:
    scn = _scenario(args.scenario)
    cert = _feasible_cert(scn, args)
    if cert is None:
        return 1
    out = _out_dir(args)
    report = RunReport(scenario=scn.name)
    slow_tracking_study(scn, cert, out, report, t_end=args.t_end)
    print(report.text())
    return 0 if report.passed else 1


def cmd_tube_robust(args) -> int:
    scn = _scenario(args.scenario)
    if scn.disturbance.ramps or scn.disturbance.steps:
        print("tube-robust expects a fast-only disturbance; use "
              "tube-composite for mixed signals", file=sys.stderr)
        return 2
    cert = _feasible_cert(scn, args)
    if cert is None:
        return 1
    net, params = scn.network, scn.droop
    dist = make_disturbance(scn.disturbance, net.n_buses)
    l_u = estimate_Lu(net, params)
    delta = scn.disturbance.delta
    tube = robustness_bound(cert, net, params, np.zeros(2 * net.n_buses),
                            delta, l_u, rho0=args.rho0)
    ts = np.round(np.arange(0.0, args.t_end + 5e-3, 1e-2), 6)
    x0 = tube.reference.eval(0.0)
    traj = integrate(net, params, x0, dist, (0.0, args.t_end),
                     scn.solver.rtol, scn.solver.atol, ts)
    proj = make_projection(net.n_buses)
    dev = np.linalg.norm(proj.apply(traj.states - x0.as_vector()), axis=1)
    out = _out_dir(args)
    path = _write_csv(out / f"tube_robust_{scn.name}.csv",
                      ["t", "rho", "deviation"],
                      [ts, tube.bound_on_grid(ts), dev])
    print(f"L_u = {l_u:.6g}, ultimate bound = {tube.ultimate:.6g}")
    print(f"wrote {path}")
    return 0 if dev.max() <= tube.bound_on_grid(ts).max() + 1e-6 else 1


def cmd_tube_composite(args) -> int:
    scn = _scenario(args.scenario)
    cert = _feasible_cert(scn, args)
    if cert is None:
        return 1
    net, params = scn.network, scn.droop
    dist = make_disturbance(scn.disturbance, net.n_buses)
    ts = np.round(np.arange(0.0, args.t_end + 5e-3, 1e-2), 6)
    box = InputBox.from_disturbance(dist, ts)
    h = estimate_H(net, params, box, seed=scn.solver.seed).value
    out = _out_dir(args)
    report = RunReport(scenario=scn.name)
    composite_study(scn, cert, h, out, report, t_end=args.t_end)
    print(report.text())
    return 0 if report.passed else 1


def cmd_oracles(args) -> int:
    scn = _scenario(args.scenario)
    report = run_oracles(scn, n_states=args.n_states, seed=args.seed,
                         jobs=args.jobs, out_dir=_out_dir(args))
    print(report.text())
    return 0 if report.passed else 1


def cmd_reproduce(args) -> int:
    report = reproduce_benchmark(_out_dir(args), jobs=args.jobs,
                                 seed=args.seed)
    print(report.text())
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="droopcert",
        description="contraction stability certificates for droop-controlled "
                    "microgrids")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel evaluation degree (results are identical "
                        "for any value)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario seed")
    p.add_argument("--out-dir", default="droopcert_out",
                   help="artifact directory (env DROOPCERT_OUT_DIR overrides)")
    sub = p.add_subparsers(dest="command", required=True)

    def scn_cmd(name, fn, helptext):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("scenario",
                        help=f"scenario file or one of: {', '.join(BUNDLED)}")
        sp.set_defaults(fn=fn)
        return sp

    scn_cmd("certify", cmd_certify, "compute the contraction certificate")

    sp = scn_cmd("jacobian", cmd_jacobian, "dump Jacobian blocks at a state")
    sp.add_argument("--state", required=True,
                    help="TOML file with [state] theta=[...] v=[...]")

    sp = scn_cmd("simulate", cmd_simulate, "integrate the droop ODE")
    sp.add_argument("--x0", default="equilibrium",
                    help="'equilibrium', 'flat', or a TOML state file")
    sp.add_argument("--t-end", type=float, default=60.0)
    sp.add_argument("--out", default=None, help="CSV filename")

    sp = scn_cmd("tube-auto", cmd_tube_auto, "autonomous invariant ball")
    sp.add_argument("--radius", type=float, default=None)
    sp.add_argument("--offset", type=float, default=3e-4,
                    help="reference-point angle offset from the equilibrium")
    sp.add_argument("--t-end", type=float, default=60.0)

    sp = scn_cmd("tube-track", cmd_tube_track, "quasi-steady tracking bound")
    sp.add_argument("--t-end", type=float, default=60.0)

    sp = scn_cmd("tube-robust", cmd_tube_robust, "robust boundedness tube")
    sp.add_argument("--rho0", type=float, default=0.0)
    sp.add_argument("--t-end", type=float, default=60.0)

    sp = scn_cmd("tube-composite", cmd_tube_composite, "composite-bound tube")
    sp.add_argument("--t-end", type=float, default=60.0)

    sp = scn_cmd("oracles", cmd_oracles, "run the oracle battery")
    sp.add_argument("--n-states", type=int, default=1000)

    sp = sub.add_parser("reproduce", help="re-run the benchmark studies")
    sp.set_defaults(fn=cmd_reproduce)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
