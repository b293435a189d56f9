"""Equilibrium-free contraction certificates for droop-controlled microgrids.

The library certifies regional semi-contraction of coupled angle-voltage
droop dynamics on an operating box (blockwise Jacobian margins, a projected
matrix measure, and a certified decay rate), converts the certificate into
forward-invariant tube guarantees (autonomous balls, quasi-steady tracking,
robustness, composite disturbances), and validates every bound against
simulated trajectories.
"""

__version__ = "0.1.0"

from .network import (AdmissibleDomain, DroopParams, NetworkModel,
                      SystemState, kron_reduce, power_injections)
from .jacobian import (JacobianBlocks, Projection, ProjectedSymmetric,
                       jacobian, make_projection, measure, projected_symmetric)
from .margins import (AngleMargin, ContractionCertificate, CouplingMargin,
                      VoltageMargin, angle_margin, certificate,
                      coupling_margin, droop_homogenization, voltage_margin)
from .sampling import SearchSettings
from .scenario import Scenario, ScenarioError, bundled_scenario, load_scenario
from .simulate import (Disturbance, DisturbanceSpec, FastComponent, Ramp,
                       Step, Trajectory, integrate, make_disturbance,
                       vector_field)
from .tubes import (ComparisonSolution, EquilibriumResult, HEstimate,
                    InputBox, ReferenceTrajectory, TubeCertificate,
                    autonomous_tube, comparison_radius, composite_bound,
                    estimate_H, estimate_Lu, robustness_bound, seminorm,
                    solve_equilibrium, tracking_bound)
from .harness import (OracleReport, RunReport, reproduce_benchmark,
                      run_oracles)

__all__ = [
    "__version__",
    # network
    "NetworkModel", "DroopParams", "AdmissibleDomain", "SystemState",
    "power_injections", "kron_reduce",
    # variational
    "JacobianBlocks", "Projection", "ProjectedSymmetric", "jacobian",
    "make_projection", "projected_symmetric", "measure",
    # certification
    "AngleMargin", "VoltageMargin", "CouplingMargin",
    "ContractionCertificate", "angle_margin", "voltage_margin",
    "coupling_margin", "certificate", "droop_homogenization",
    "SearchSettings",
    # tubes
    "seminorm", "solve_equilibrium", "EquilibriumResult", "comparison_radius",
    "ComparisonSolution", "autonomous_tube", "tracking_bound",
    "robustness_bound", "composite_bound", "estimate_H", "estimate_Lu",
    "HEstimate", "InputBox", "ReferenceTrajectory", "TubeCertificate",
    # simulation
    "DisturbanceSpec", "Disturbance", "Step", "Ramp", "FastComponent",
    "make_disturbance", "vector_field", "integrate", "Trajectory",
    # scenarios & harness
    "Scenario", "ScenarioError", "load_scenario", "bundled_scenario",
    "run_oracles", "OracleReport", "reproduce_benchmark", "RunReport",
]
