"""Vanishing-discount iteration: ``lambda_delta = delta u_delta(x_delta) -> lambda*``."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    CostFunction,
    Grid,
    ScalarField,
    SolverError,
    SolverTolerances,
    ValidationError,
    gradient_norm,
)
from .direct import DiscountSolution, discount_solution, solve_constrained
from .penalty import PenaltyConfig, continuation

log = logging.getLogger(__name__)

BACKENDS = ("direct", "penalty")


def default_deltas(k_max: int = 20) -> tuple[float, ...]:
    return tuple(2.0**-k for k in range(k_max + 1))


@dataclass
class EigenSolution:
    """Ergodic eigenvalue ``lambda_star`` with the normalized profile ``u_star`` (min 0).

    ``lambda_star`` refers to the normalized cost; add ``offset`` for the
    cost as originally given (see :attr:`lambda_original`).
    """

    lambda_star: float
    lambda_richardson: float | None
    u_star: ScalarField
    free_boundary_mask: np.ndarray
    deltas: list[float]
    lambdas: list[float]
    backend: str
    final: DiscountSolution
    history: list[DiscountSolution] = field(repr=False, default_factory=list)
    cauchy: bool = True
    offset: float = 0.0
    tol_lambda: float = 0.0
    certificate: object | None = None
    penalty_diagnostics: list[dict] = field(repr=False, default_factory=list)

    @property
    def grid(self) -> Grid:
        return self.u_star.grid

    @property
    def lambda_original(self) -> float:
        return self.lambda_star + self.offset


def _solve_one(cost, delta, grid, backend, tol, penalty_config, warm, start_index):
    if backend == "direct":
        return solve_constrained(cost, delta, grid, tol, warm_start=warm), None, 0
    v, diag = continuation(cost, delta, grid, penalty_config, warm_start=warm, start_index=start_index)
    index = penalty_config.epsilon_schedule.index(diag.epsilons[-1])
    sol = discount_solution(
        v, cost, delta, penalty_config.tolerances,
        iterations=sum(diag.newton_iterations),
        extra={"max_penalty": diag.max_penalty[-1], "gradient_excess": diag.max_gradient_excess[-1]},
    )
    return sol, diag, index


def run_vanishing_discount(
    cost: CostFunction,
    grid: Grid,
    deltas: Sequence[float] | None = None,
    backend: str = "direct",
    tolerances: SolverTolerances | None = None,
    penalty_config: PenaltyConfig | None = None,
    tol_lambda: float | None = None,
    edge_slack: float = 1e-6,
) -> EigenSolution:
    """Solve the discounted problem along a decreasing ``delta`` schedule until ``lambda_delta`` settles.

    Each solve is warm-started from the previous one shifted by
    ``lambda (1/delta_new - 1/delta_old)``.  The loop stops once
    ``|lambda_k - lambda_{k-1}| <= tol_lambda`` (default
    ``1e-4 (1 + |lambda_k|)``); the Richardson value assumes an ``O(delta)``
    error and is reported alongside, never substituted.
    """
    if backend not in BACKENDS:
        raise ValidationError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    deltas = tuple(float(d) for d in (deltas if deltas is not None else default_deltas()))
    if len(deltas) < 2 or any(d <= 0 for d in deltas) or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValidationError("delta schedule must be strictly decreasing, positive, with at least two entries")
    tol = tolerances or SolverTolerances()
    if penalty_config is None:
        penalty_config = PenaltyConfig(tolerances=tol)

    history: list[DiscountSolution] = []
    lambdas: list[float] = []
    pen_diags: list[dict] = []
    warm = None
    start = 0
    converged = False
    tol_used = 0.0
    for k, delta in enumerate(deltas):
        if history:
            prev = history[-1]
            warm = prev.u + prev.lambda_delta * (1.0 / delta - 1.0 / prev.delta)
        sol, diag, start = _solve_one(cost, delta, grid, backend, tol, penalty_config, warm, start)
        if diag is not None:
            pen_diags.append(diag.as_dict())
        history.append(sol)
        lambdas.append(sol.lambda_delta)
        log.debug("delta=%g lambda=%.10f", delta, sol.lambda_delta)
        if k > 0:
            tol_used = tol_lambda if tol_lambda is not None else 1e-4 * (1 + abs(lambdas[-1]))
            if abs(lambdas[-1] - lambdas[-2]) <= tol_used:
                converged = True
                break
    if not converged:
        raise SolverError(
            f"delta schedule exhausted at delta={deltas[len(history) - 1]:g} without lambda convergence "
            f"(last change {abs(lambdas[-1] - lambdas[-2]):.3e})"
        )

    steps = np.abs(np.diff(lambdas))
    cauchy = bool(len(steps) < 3 or np.all(np.diff(steps[-3:]) <= 1e-12 + 1e-9 * steps[-3:-1]))
    if not cauchy:
        log.warning("lambda_delta increments are not shrinking: %s", steps[-3:])
    d1, d0 = deltas[len(lambdas) - 1], deltas[len(lambdas) - 2]
    richardson = lambdas[-1] + (lambdas[-1] - lambdas[-2]) * d1 / (d0 - d1)

    final = history[-1]
    u = final.u.values
    u_star = ScalarField(grid, u - u[final.argmin])
    sol = EigenSolution(
        lambda_star=lambdas[-1],
        lambda_richardson=float(richardson),
        u_star=u_star,
        free_boundary_mask=np.zeros(grid.shape, dtype=bool),
        deltas=list(deltas[: len(lambdas)]),
        lambdas=lambdas,
        backend=backend,
        final=final,
        history=history,
        cauchy=cauchy,
        offset=cost.offset,
        tol_lambda=tol_used,
        penalty_diagnostics=pen_diags,
    )
    sol.free_boundary_mask = free_boundary(sol, edge_slack)
    return sol


def free_boundary(sol: EigenSolution, edge_slack: float = 1e-6) -> np.ndarray:
    """Nodes (off the box faces) where the centered ``|D_h u*| < 1 - edge_slack``."""
    grid = sol.grid
    mask = (gradient_norm(sol.u_star) < 1.0 - edge_slack) & grid.interior(1)
    if not mask.any():
        raise SolverError("empty free-boundary region: the vanishing-discount loop did not produce |Du*| < 1 anywhere")
    return mask


def free_boundary_radius(mask: np.ndarray, grid: Grid) -> float:
    """Largest node radius inside the mask."""
    return float(grid.radius[mask].max())


def base_point_insensitivity(sol: DiscountSolution, x0: Sequence[int], y0: Sequence[int]) -> float:
    """``|delta u(x0) - delta u(y0)|`` for node indices ``x0``, ``y0``."""
    u = sol.u.values
    return abs(sol.delta * (u[tuple(x0)] - u[tuple(y0)]))
