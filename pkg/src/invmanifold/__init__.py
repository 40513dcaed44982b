"""Lipschitz invariant manifolds for perturbed nonautonomous linear equations.

Submodules:
    linear_system   evolution operators, splittings, closed-form test systems
    bounds          dichotomy bound families and their checks
    admissibility   the constants alpha, beta, S(s) and the gates
    perron          the nested fixed-point solver for the graph phi
    verification    direct-integration checks of invariance and decay
    cli             command-line front end
"""

from .admissibility import (AdmissibilityReport, LipschitzEnvelope, QuadratureConfig,
                            RadiusFunction, assess, check_global_gate,
                            check_local_gate, compute_alpha, compute_beta, compute_S)
from .bounds import (BoundFamily, check_decay_condition, eval_a, eval_b,
                     verify_dichotomy_bounds)
from .errors import (ConfigError, ConstraintError, ConvergenceError, DivergenceError,
                     DomainError, ExtrapolationError, InvertibilityError,
                     PreconditionError, TruncationError)
from .linear_system import (LinearSystem, Splitting, build_product_example,
                            coefficient_system, diagonal_system, evolve,
                            evolve_inverse_F)
from .perron import (ManifoldGraph, Perturbation, SolverConfig, cq_perturbation,
                     eval_manifold, solve_local, solve_manifold, test_perturbation,
                     truncate_perturbation, zero_perturbation)
from .verification import (VerificationReport, VerifyConfig, check_decay_bound,
                           check_invariance, check_local_invariance,
                           integrate_semiflow, run_verification)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
