"""Ergodic eigenvalue of the gradient-constrained HJB equation ``max{lambda - Lap u - f, |Du| - 1} = 0``."""

from __future__ import annotations

from .bounds import Certificate, certify, extended_mollify, lower_bound, upper_bound
from .core import (
    CostFunction,
    Grid,
    ScalarField,
    SolverError,
    SolverTolerances,
    ValidationError,
    convexity_offsets,
    gradient_central,
    gradient_norm,
    laplacian_5pt,
    make_cost,
    mollify,
    second_difference,
)
from .direct import (
    DiscountSolution,
    convexity_defect,
    eikonal_residual,
    lipschitz_extension_residual,
    solve_constrained,
    subsolution_gap,
)
from .discount import (
    EigenSolution,
    base_point_insensitivity,
    free_boundary,
    free_boundary_radius,
    run_vanishing_discount,
)
from .penalty import PenaltyConfig, PenaltyDiagnostics, beta, continuation, solve_penalized
from .radial import radial_discounted, radial_eigen, radial_profile, variational_lambda
from .simulate import ErgodicEstimate, SimConfig, policy_sweep, simulate_ball_policy

__version__ = "0.1.0"

__all__ = [
    "Certificate",
    "CostFunction",
    "DiscountSolution",
    "EigenSolution",
    "ErgodicEstimate",
    "Grid",
    "PenaltyConfig",
    "PenaltyDiagnostics",
    "ScalarField",
    "SimConfig",
    "SolverError",
    "SolverTolerances",
    "ValidationError",
    "base_point_insensitivity",
    "beta",
    "certify",
    "continuation",
    "convexity_defect",
    "convexity_offsets",
    "eikonal_residual",
    "extended_mollify",
    "free_boundary",
    "free_boundary_radius",
    "gradient_central",
    "gradient_norm",
    "laplacian_5pt",
    "lipschitz_extension_residual",
    "lower_bound",
    "make_cost",
    "mollify",
    "policy_sweep",
    "radial_discounted",
    "radial_eigen",
    "radial_profile",
    "run_vanishing_discount",
    "second_difference",
    "simulate_ball_policy",
    "solve_constrained",
    "solve_penalized",
    "subsolution_gap",
    "upper_bound",
    "variational_lambda",
]
