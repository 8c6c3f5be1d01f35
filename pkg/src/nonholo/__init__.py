"""Hamiltonization and geometric integration toolkit for a class of
nonholonomic mechanical systems.

The package builds systems with diagonal kinetic energy and velocity
constraints linear in one shape variable, constructs unconstrained
Lagrangians and Hamiltonians that reproduce the constrained dynamics,
verifies multiplier (variationality) conditions numerically, and compares
constrained, variational, and hybrid discrete integrators.
"""

from .errors import ConfigError, DomainError, NonholoError, ParseError, SolverError
from .expression import Expression, differentiate_at, evaluate, parse
from .model import (
    ASSOC1,
    ASSOC2,
    EXTENDED,
    ConstraintForm,
    SecondOrderSystem,
    State,
    SystemSpec,
    associated_sode,
    build_system,
    exact_disk_solution,
    measure_density,
    nonholonomic_rhs,
    registry_names,
)
from .lagrangians import (
    TYPE1,
    TYPE2,
    FreeLagrangian,
    Hamiltonian,
    PhasePoint,
    free_lagrangian,
    hamiltonian,
    legendre_transform,
)
from .integrators import (
    DiscreteConstraints,
    DiscreteLagrangian,
    DiscretePath,
    DiscretizationParams,
    discretize_constraints,
    discretize_lagrangian,
    run_trajectory,
    seed_second_point,
    step_modified,
    step_nonholonomic,
    step_variational,
)
from .helmholtz import (
    HelmholtzReport,
    HelmholtzTensors,
    MultiplierCandidate,
    algebraic_multiplier_space,
    helmholtz_tensors,
    hessian_candidate,
    multiplier_residuals,
)
from .diagnostics import (
    CircleFit,
    ErrorMetrics,
    constraint_residual_series,
    convergence_order,
    discrete_energy_series,
    error_metrics,
    fit_circle,
    reference_trajectory,
)

__version__ = "0.1.0"
