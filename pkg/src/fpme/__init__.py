"""Self-similar profiles of the time-fractional porous medium equation d_t^alpha u = Laplacian(u^m)."""

from .closedform import (
    barenblatt_classical,
    fast_classical,
    free_boundary_constant,
    gamma_star,
    linear_profile,
    reference_shape,
    vss,
)
from .errors import (
    BracketViolation,
    ConvergenceError,
    DomainError,
    FpmeError,
    MassError,
    MonotonicityError,
    ParameterError,
    PoleError,
    QuadratureError,
    RegimeError,
)
from .estimator import SelfSimilarProfile
from .kernel import Params, assemble_weights, exponents, q_kernel, q_kernel_deriv, q_moment
from .solver import (
    DiscreteProfile,
    SolveReport,
    flux_and_head_diagnostics,
    make_mesh,
    mass,
    rescale_to_mass,
    solve_fast,
    solve_slow,
)
from .specfun import QuadratureSpec, gamma_fn, inc_beta, mittag_leffler_neg, wright_m

__version__ = "0.1.0"

__all__ = [
    "Params",
    "exponents",
    "q_kernel",
    "q_kernel_deriv",
    "q_moment",
    "assemble_weights",
    "QuadratureSpec",
    "gamma_fn",
    "inc_beta",
    "mittag_leffler_neg",
    "wright_m",
    "vss",
    "gamma_star",
    "barenblatt_classical",
    "fast_classical",
    "reference_shape",
    "free_boundary_constant",
    "linear_profile",
    "DiscreteProfile",
    "SolveReport",
    "make_mesh",
    "solve_slow",
    "solve_fast",
    "mass",
    "rescale_to_mass",
    "flux_and_head_diagnostics",
    "SelfSimilarProfile",
    "FpmeError",
    "ParameterError",
    "DomainError",
    "PoleError",
    "RegimeError",
    "ConvergenceError",
    "QuadratureError",
    "MonotonicityError",
    "BracketViolation",
    "MassError",
]
