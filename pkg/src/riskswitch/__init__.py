"""Risk-sensitive control of regime-switching diffusions.

Eigensolver for the coupled Bellman operator on truncated boxes, Monte Carlo
simulation of the switching SDE, and verification checks tying the two
together.
"""

__version__ = "0.1.0"

from .eigen import (EigenPair, NoConvergenceError, NotIrreducibleError,
                    OscillatingPolicyError, SemilinearSolution, SweepResult,
                    domain_sweep, minimizing_selector, potential_monotonicity_check,
                    principal_eigenpair, solve_semilinear, uniqueness_check)
from .estimator import NotFittedError, RiskSensitiveController
from .expressions import ExpressionError, compile_expression, load_model, model_from_spec
from .grid import GridSpec, build_grid, grid_for_resolution
from .model import (BUILTIN_MODELS, CertificateMode, LyapunovCertificate,
                    SwitchingModel, ValidationReport, bounded_two_regime_2d_model,
                    builtin_certificate, check_lyapunov, dipped_cost_model,
                    lq_model, make_builtin, two_regime_ou_model, validate_model)
from .operator import DiscreteOperator, MonotonicityViolation, assemble, constant_policy
from .simulate import (ControlMap, CostEstimate, Functional, PathConfig,
                       StepSizeError, TrajectoryBatch, estimate_risk_sensitive_rate,
                       feynman_kac_annulus, mean_position_diagnostic, simulate_paths)
from .verify import (GrowthBound, fit_growth_bound, lambda_equals_optimal_value,
                     near_monotone_suite, random_policies, validate_near_monotone,
                     verify_optimality)

__all__ = [
    "BUILTIN_MODELS", "CertificateMode", "ControlMap", "CostEstimate",
    "DiscreteOperator", "EigenPair", "ExpressionError", "Functional",
    "GridSpec", "GrowthBound", "LyapunovCertificate", "MonotonicityViolation",
    "NoConvergenceError", "NotFittedError", "NotIrreducibleError",
    "OscillatingPolicyError", "PathConfig", "RiskSensitiveController",
    "SemilinearSolution", "StepSizeError", "SweepResult", "SwitchingModel",
    "TrajectoryBatch", "ValidationReport", "assemble",
    "bounded_two_regime_2d_model", "build_grid", "builtin_certificate",
    "check_lyapunov", "compile_expression", "constant_policy",
    "dipped_cost_model", "domain_sweep", "estimate_risk_sensitive_rate",
    "feynman_kac_annulus", "fit_growth_bound", "grid_for_resolution",
    "lambda_equals_optimal_value", "load_model", "lq_model", "make_builtin",
    "mean_position_diagnostic", "minimizing_selector", "model_from_spec",
    "near_monotone_suite", "potential_monotonicity_check",
    "principal_eigenpair", "random_policies", "simulate_paths",
    "solve_semilinear", "two_regime_ou_model", "uniqueness_check",
    "validate_model", "validate_near_monotone", "verify_optimality",
]
