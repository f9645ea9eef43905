"""Nonlinear thermodynamic quantum master equation: deterministic integration
and unraveling as a mean-field piecewise deterministic jump process."""

from .density import (
    DensityMatrix,
    PhysicalConstants,
    check_arho_identity,
    expectation,
    gibbs_state,
    purity,
    regularized_inverse,
    rho_weighted,
    trace_distance,
)
from .linalg import Spectrum, commutator, hermitian_eig, matrix_function
from .models import harmonic_oscillator, two_level
from .oracle import EnvironmentSpec, ModelSpec, integrate_oracle, master_rhs
from .unravel import (
    AlphaPolicy,
    Ensemble,
    JumpParameters,
    UnravelConfig,
    compute_beta,
    compute_gamma_alpha_sq,
    deterministic_step,
    ensemble_density,
    friction_operator,
    jump_operator,
    jump_step,
    resolve_parameters,
    run_unraveling,
    second_moment_identity_residual,
    solve_alpha,
)

__version__ = "0.1.0"
