"""Policy iteration for ``max{delta u - Lap_h u - f, |D_h u| - 1} = 0`` on a truncated box.

The constraint branch uses the monotone Rouy-Tourin upwind gradient.  Box
faces carry the same eikonal equation with only the inward neighbours
available, an outflow condition that reduces to unit outward slope in 1-D.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._stencil import Stencil
from .core import (
    CostFunction,
    Grid,
    ScalarField,
    SolverError,
    SolverTolerances,
    ValidationError,
    convexity_offsets,
    second_difference,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiscountSolution:
    """Discounted solution ``u_delta`` with its branch structure.

    ``active_mask`` marks nodes where the gradient-constraint branch holds
    (box faces included).  ``lambda_delta = delta * u(argmin)``.
    """

    u: ScalarField
    delta: float
    active_mask: np.ndarray
    lambda_delta: float
    argmin: tuple[int, ...]
    residuals: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    iterations: int = 0

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @property
    def x_delta(self) -> np.ndarray:
        return self.grid.points[self.argmin]


def eikonal_residual(field: ScalarField) -> ScalarField:
    """``|D_h u| - 1`` with the upwind gradient ``max(D^-u, -D^+u, 0)`` per axis."""
    st = Stencil(field.grid)
    norm = np.sqrt(st.upwind_norm_sq(field.values.ravel()))
    return ScalarField(field.grid, norm - 1.0)


def branch_residuals(u: np.ndarray, f: np.ndarray, delta: float, st: Stencil) -> tuple[np.ndarray, np.ndarray]:
    """Elliptic branch ``delta u - Lap u - f`` (NaN on faces) and eikonal branch, both flattened.

    Evaluated on ``u - min(u)`` so the rounding floor does not scale with ``1/delta``.
    """
    s = float(u.min())
    w = u - s
    E = delta * w - st.laplacian @ w - (f - delta * s)
    E[st.boundary] = np.nan
    G = np.sqrt(st.upwind_norm_sq(w)) - 1.0
    return E, G


def _curvature_constant(u: ScalarField) -> float:
    grid = u.grid
    inner = grid.interior(1)
    worst = 0.0
    for z in convexity_offsets(grid.n, (1,)):
        d2 = second_difference(u, z).values[inner] / (grid.h**2 * float(np.dot(z, z)))
        worst = max(worst, float(d2.max()))
    return worst


def discount_solution(
    u: ScalarField,
    cost: CostFunction,
    delta: float,
    tolerances: SolverTolerances | None = None,
    iterations: int = 0,
    extra: dict | None = None,
) -> DiscountSolution:
    """Wrap a nodal field as a :class:`DiscountSolution`, measuring both branches."""
    tol = tolerances or SolverTolerances()
    grid = u.grid
    st = Stencil(grid)
    f = np.asarray(cost(grid.points), dtype=float).ravel()
    flat = u.values.ravel()
    E, G = branch_residuals(flat, f, delta, st)
    inner = st.interior
    elliptic = inner & ((E >= G - tol.newton_tol) | (G <= -1.0))
    active = ~elliptic
    comp = np.where(inner, np.maximum(E, G), G)
    argmin = tuple(int(i) for i in np.unravel_index(int(np.argmin(flat)), grid.shape))
    radius = grid.radius.ravel()
    residuals = {
        "complementarity": float(np.max(np.abs(comp))),
        "elliptic_max": float(np.nanmax(E[inner])),
        "eikonal_max": float(np.max(G)),
        "elliptic_on_inactive": float(np.max(np.abs(E[elliptic]))) if elliptic.any() else 0.0,
        "boundary": float(np.max(np.abs(G[st.boundary]))),
    }
    if extra:
        residuals.update(extra)
    bounds = {
        "K": grid.n + cost.max_on_unit_ball(),
        "C": float(radius[elliptic].max()) if elliptic.any() else 0.0,
        "L": _curvature_constant(u),
    }
    return DiscountSolution(
        u=u,
        delta=float(delta),
        active_mask=active.reshape(grid.shape),
        lambda_delta=float(delta * flat.min()),
        argmin=argmin,
        residuals=residuals,
        bounds=bounds,
        iterations=iterations,
    )


def _initial_guess(st: Stencil, f: np.ndarray, delta: float) -> np.ndarray:
    """Elliptic equation on the interior, unit inward slope on the faces."""
    N = f.size
    inner = np.flatnonzero(st.interior)
    bnd = np.flatnonzero(st.boundary)
    A = sp.csr_matrix((delta * np.ones(inner.size), (inner, inner)), shape=(N, N)) - st.laplacian
    B = sp.csr_matrix(
        (
            np.concatenate([np.full(bnd.size, 1.0 / st.h), np.full(bnd.size, -1.0 / st.h)]),
            (np.concatenate([bnd, bnd]), np.concatenate([bnd, st.inward[bnd]])),
        ),
        shape=(N, N),
    )
    b = np.where(st.interior, f, 1.0)
    return spla.spsolve((A + B).tocsc(), b)


def solve_constrained(
    cost: CostFunction,
    delta: float,
    grid: Grid,
    tolerances: SolverTolerances | None = None,
    warm_start: ScalarField | None = None,
) -> DiscountSolution:
    """Howard policy iteration for the discounted gradient-constrained problem.

    Each sweep picks, node by node, the branch with the larger residual
    (ties go to the elliptic branch), freezes the upwind direction of the
    eikonal branch, and solves the resulting sparse linear system.
    """
    if not delta > 0:
        raise ValidationError(f"discount delta must be positive, got {delta}")
    if cost.n != grid.n:
        raise ValidationError(f"cost dimension {cost.n} does not match grid dimension {grid.n}")
    tol = tolerances or SolverTolerances()
    st = Stencil(grid)
    N = grid.size
    f = np.asarray(cost(grid.points), dtype=float).ravel()
    inner = np.flatnonzero(st.interior)
    bnd = np.flatnonzero(st.boundary)

    if warm_start is not None:
        u0 = np.array(warm_start.values, dtype=float).ravel()
    else:
        u0 = _initial_guess(st, f, delta)
    # iterate on w = u - s; the equations only see s through f - delta*s
    s = float(u0.min())
    w = u0 - s
    fs = f - delta * s
    A_ell = (sp.identity(N, format="csr") * delta - st.laplacian).tocsr()

    best = (np.inf, w, 0)
    prev_mask = None
    flips = 0
    for it in range(1, tol.max_iters + 1):
        E = A_ell @ w - fs
        G_all, (gr, gc, gv) = st.eikonal_rows(w, np.arange(N))
        res = np.where(st.interior, np.maximum(E, G_all), G_all)
        resid = float(np.max(np.abs(res)))
        if not np.isfinite(resid):
            raise SolverError("non-finite residual in policy iteration")
        if resid < best[0]:
            best = (resid, w.copy(), it)
        if resid <= tol.newton_tol:
            break
        norm = G_all + 1.0
        elliptic = np.zeros(N, dtype=bool)
        elliptic[inner] = (E[inner] >= G_all[inner] - tol.newton_tol) | (norm[inner] <= 0)
        if prev_mask is not None and np.any(prev_mask != elliptic):
            flips += 1
        prev_mask = elliptic
        eik = ~elliptic
        keep = eik[gr]
        A_eik = sp.csr_matrix((gv[keep], (gr[keep], gc[keep])), shape=(N, N))
        A = sp.diags(elliptic.astype(float)) @ A_ell + A_eik
        b = np.where(elliptic, fs, 1.0)
        w_new = spla.spsolve(A.tocsc(), b)
        if not np.all(np.isfinite(w_new)):
            raise SolverError("singular linear system in policy iteration")
        w = w_new
    else:
        resid, w, it = best
        log.warning(
            "policy iteration hit max_iters=%d (mask flips %d); keeping best residual %.3e",
            tol.max_iters, flips, resid,
        )
    u = ScalarField(grid, (w + s).reshape(grid.shape))
    return discount_solution(u, cost, delta, tol, iterations=it, extra={"converged": resid <= tol.newton_tol})


def lipschitz_extension_residual(sol: DiscountSolution) -> float:
    """``sup_{x active} |u(x) - min_{y inactive} (u(y) + |x - y|)|``; 0 if nothing is inactive."""
    grid = sol.grid
    pts = grid.points.reshape(-1, grid.n)
    u = sol.u.values.ravel()
    active = sol.active_mask.ravel()
    inactive = ~active
    if not inactive.any() or not active.any():
        return 0.0
    ys = pts[inactive]
    uy = u[inactive]
    xs = pts[active]
    ux = u[active]
    worst = 0.0
    chunk = max(1, 4_000_000 // max(1, ys.shape[0]))
    for i in range(0, xs.shape[0], chunk):
        d = np.sqrt(((xs[i : i + chunk, None, :] - ys[None, :, :]) ** 2).sum(-1))
        ext = np.min(uy[None, :] + d, axis=1)
        worst = max(worst, float(np.max(np.abs(ux[i : i + chunk] - ext))))
    return worst


# ---------------------------------------------------------------------------
# structural checks shared by the solvers, the CLI and the tests
# ---------------------------------------------------------------------------


def convexity_defect(u: ScalarField, magnitudes=(1, 2)) -> dict[str, float]:
    """Most negative second difference along axis and diagonal offsets.

    Only nodes whose stencil stays off the box faces are used (rows
    ``interior(1 + max|z|)``); face rows carry a boundary condition, not the
    equation.  Keys are ``"axis"`` and ``"diagonal"`` (the latter is ``0.0``
    in 1-D); ``"scale"`` is ``max u - min u`` for relative thresholds.
    """
    grid = u.grid
    out = {"axis": 0.0, "diagonal": 0.0}
    for z in convexity_offsets(grid.n, magnitudes):
        ring = 1 + max(abs(k) for k in z)
        d2 = second_difference(u, z).values[grid.interior(ring)]
        key = "diagonal" if sum(1 for k in z if k) > 1 else "axis"
        out[key] = min(out[key], float(d2.min()))
    vals = u.values
    out["scale"] = float(vals.max() - vals.min())
    return out


def gradient_excess(u: ScalarField) -> float:
    """``max |D_h u| - 1`` with centered differences (one-sided on faces)."""
    from .core import gradient_norm

    return float(gradient_norm(u).max() - 1.0)


def subsolution_gap(u: ScalarField, K: float) -> float:
    """``min_x (u(x) - (|x| - K)^+)``; nonnegative when ``u`` dominates the subsolution."""
    grid = u.grid
    return float(np.min(u.values - np.maximum(grid.radius - K, 0.0)))


def curvature_reference(cost: CostFunction, radius: float) -> float:
    """``max_{|y| <= radius} ||D^2 f(y)||`` sampled on a polar/segment set (the delta = 1 curvature bound)."""
    n = cost.n
    rs = np.linspace(0.0, radius, 201)
    if n == 1:
        pts = np.concatenate([rs, -rs])[:, None]
    else:
        t = np.linspace(0.0, 2 * np.pi, 129)
        pts = (rs[:, None, None] * np.stack([np.cos(t), np.sin(t)], axis=-1)[None]).reshape(-1, 2)
    H = cost.hessian(pts)
    return float(np.max(np.abs(np.linalg.eigvalsh(H))))
