"""Radial elastodynamics with a polyconvex stored energy, advanced in time
by one convex minimization per step.

The update keeps the deformation orientation-preserving through the barrier
component of the stored energy and verifies, every step, the discrete
entropy inequality, the energy decrease, and the integrated force-balance
identity of the minimizer.
"""

from .grid import GridSpec, make_grid
from .stored_energy import (
    AuditRanges,
    AuditReport,
    DomainError,
    ScalarC2,
    StoredEnergyModel,
    XiVector,
    audit_assumptions,
    build_model,
    default_model,
    eval_G,
    eval_component,
    grad_G,
    power_model,
    stretch_energy,
)
from .kinematics import (
    GammaTriple,
    from_rho_frame,
    gamma_from_alpha,
    null_lagrangian_residual,
    omega_jacobian,
    omega_map,
    to_rho_frame,
    xi_assemble,
    xi_on_grid,
)
from .step_minimizer import (
    InfeasibleStartError,
    MaxIterationsError,
    State,
    StepResult,
    assemble_I,
    el_residual,
    entropy_defect,
    is_admissible,
    lift_constraints,
    min_alpha_prime,
    minimize_step,
    scheme_energy,
)
from .evolution import StepDiagnostics, Trajectory, energy, init_state, run
from .cli_io import ConfigError, RunConfig, parse_config, serialize_config, write_outputs

__version__ = "0.1.0"
