"""Two-sided certificate for the ergodic eigenvalue from grid test functions.

* lower: ``min_x (Lap phi + f)`` over any ``phi`` with ``|D phi| <= 1``;
* upper: ``max (Lap psi + f)`` over ``{|D psi| < 1}`` for any ``psi`` growing at least like ``|x|``.

Grid fields stand in for C^2 test functions, so each bound is certified only
up to the reported slacks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    CostFunction,
    Grid,
    ScalarField,
    SolverError,
    ValidationError,
    gradient_norm,
    laplacian_5pt,
    mollify,
)

UNBOUNDED = math.inf


@dataclass(frozen=True)
class Certificate:
    lambda_minus: float
    lambda_plus: float
    witnesses: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.lambda_plus - self.lambda_minus

    def as_dict(self) -> dict:
        return {
            "lambda_minus": self.lambda_minus,
            "lambda_plus": self.lambda_plus,
            "gap": self.gap,
            "witnesses": self.witnesses,
        }


def _cost_on(grid: Grid, cost: CostFunction) -> np.ndarray:
    if cost.n != grid.n:
        raise ValidationError(f"cost dimension {cost.n} does not match grid dimension {grid.n}")
    return np.asarray(cost(grid.points), dtype=float)


def lower_bound(phi: ScalarField, cost: CostFunction, gradient_slack: float = 1e-2) -> float:
    """``min`` over interior nodes of ``Lap_h phi + f``; needs ``|D_h phi| <= 1 + gradient_slack``."""
    grid = phi.grid
    gn = gradient_norm(phi)
    if gn.max() > 1.0 + gradient_slack:
        raise ValidationError(f"test function violates |D phi| <= 1 (max {gn.max():.6f}, slack {gradient_slack})")
    inner = grid.interior(1)
    q = laplacian_5pt(phi).values + _cost_on(grid, cost)
    vals = np.where(inner, q, np.inf)
    k = np.unravel_index(int(np.argmin(vals)), grid.shape)
    if not grid.interior(2)[k]:
        raise SolverError("lower bound attained next to the box boundary; enlarge the box")
    return float(vals[k])


def far_field_slope(psi: ScalarField) -> float:
    """Smallest radial slope ``(psi(x) - psi(x')) / (|x| - |x'|)`` across the outermost ring of node pairs.

    Pairs are (face node, its inward neighbour along the face normal).
    """
    grid = psi.grid
    u = psi.values
    R = grid.radius
    slopes = []
    for k in range(grid.n):
        for face, inner in ((0, 1), (-1, -2)):
            sl_f = [slice(1, -1)] * grid.n if grid.n > 1 else [slice(None)]
            sl_i = list(sl_f)
            sl_f[k] = face
            sl_i[k] = inner
            dr = R[tuple(sl_f)] - R[tuple(sl_i)]
            du = u[tuple(sl_f)] - u[tuple(sl_i)]
            ok = dr > 1e-12
            slopes.append((du[ok] / dr[ok]).min())
    return float(min(slopes))


def upper_bound(
    psi: ScalarField,
    cost: CostFunction,
    slope_slack: float = 5e-2,
    edge_slack: float = 1e-6,
) -> float:
    """``max`` of ``Lap_h psi + f`` over interior nodes with ``|D_h psi| < 1 - edge_slack``.

    Returns ``inf`` when no node qualifies.  The growth requirement on
    ``psi`` is checked through the boundary-ring radial slope (a proxy for
    ``liminf psi(x)/|x| >= 1``).
    """
    grid = psi.grid
    slope = far_field_slope(psi)
    if slope < 1.0 - slope_slack:
        raise ValidationError(f"test function grows too slowly: far-field slope {slope:.6f}")
    inner = grid.interior(1)
    region = inner & (gradient_norm(psi) < 1.0 - edge_slack)
    if not region.any():
        return UNBOUNDED
    q = laplacian_5pt(psi).values + _cost_on(grid, cost)
    return float(q[region].max())


def extended_mollify(u: ScalarField, radius: float) -> ScalarField:
    """Mollify after continuing ``u`` linearly past the box faces (odd reflection).

    Avoids the face distortion of a truncated kernel; exact on affine fields.
    """
    grid = u.grid
    pad = int(np.ceil(radius / grid.h)) + 1
    values = np.pad(u.values, pad, mode="reflect", reflect_type="odd")
    big = Grid(grid.n, grid.half_width + pad * grid.h, grid.nodes + 2 * pad)
    smooth = mollify(ScalarField(big, values), radius).values
    return ScalarField(grid, smooth[(slice(pad, -pad),) * grid.n])


def certify(
    eigen,
    cost: CostFunction,
    radii: Sequence[float] | None = None,
    gradient_slack: float = 1e-2,
    edge_slack: float = 1e-6,
) -> Certificate:
    """Certificate from ``phi = t * mollify(u*, rho)`` and ``psi = u*``.

    ``t = 1 / max(1 + gradient_slack, max |D_h mollify(u*)|)`` so the
    mollified witness obeys ``|D phi| <= 1`` on the grid.  The best lower
    bound over the mollification radii is kept (default ``rho = 4h``).
    """
    u = eigen.u_star
    grid = u.grid
    radii = list(radii) if radii else [4 * grid.h]
    best = -math.inf
    best_w = {}
    for rho in radii:
        smooth = extended_mollify(u, rho)
        t = 1.0 / max(1.0 + gradient_slack, float(gradient_norm(smooth).max()))
        lo = lower_bound(smooth * t, cost, gradient_slack)
        if lo > best:
            best = lo
            best_w = {"radius": float(rho), "scale": t}
    hi = upper_bound(u, cost, edge_slack=edge_slack)
    witnesses = {
        "lower": {"source": f"mollified u* ({eigen.backend})", **best_w},
        "upper": {"source": f"u* ({eigen.backend})", "edge_slack": edge_slack},
    }
    return Certificate(lambda_minus=best, lambda_plus=hi, witnesses=witnesses)
