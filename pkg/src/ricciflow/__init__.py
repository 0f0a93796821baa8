"""Logarithmic fast diffusion in the plane, u_t = Δ log u, as conformal Ricci flow.

Cylindrical-coordinate solver for maximal solutions from compactly supported
data, with the rescalings and diagnostics needed to observe the extinction
asymptotics: the inner soliton-like profile, the outer cusp profile, mass-law
extinction, and the curvature/width rates.
"""

__version__ = "0.1.0"

from .core import CylGrid, FlowState, build_grid, curvature_field, laplacian_c, mass
from .diagnostics import (
    DiagnosticsRecord,
    HarnackConstants,
    harnack_gap,
    harnack_lattice_search,
    log_theta_avg,
    mass_audit,
    monotonicity_check,
    tail_area,
)
from .errors import (
    ConfigurationError,
    DegenerateError,
    DomainError,
    InsufficientDataError,
    OracleDomainError,
    RangeError,
    StepRejectedError,
    StiffnessFailureError,
)
from .rescale import ProfileSnapshot, build_snapshot, fit_lambda, inner_profile, outer_profile
from .solver import (
    InitialDatum,
    SteppingPolicy,
    Trajectory,
    estimate_T,
    init_state,
    run,
)

__all__ = [
    "__version__",
    "CylGrid",
    "FlowState",
    "build_grid",
    "curvature_field",
    "laplacian_c",
    "mass",
    "DiagnosticsRecord",
    "HarnackConstants",
    "harnack_gap",
    "harnack_lattice_search",
    "log_theta_avg",
    "mass_audit",
    "monotonicity_check",
    "tail_area",
    "ConfigurationError",
    "DegenerateError",
    "DomainError",
    "InsufficientDataError",
    "OracleDomainError",
    "RangeError",
    "StepRejectedError",
    "StiffnessFailureError",
    "ProfileSnapshot",
    "build_snapshot",
    "fit_lambda",
    "inner_profile",
    "outer_profile",
    "InitialDatum",
    "SteppingPolicy",
    "Trajectory",
    "estimate_T",
    "init_state",
    "run",
]
