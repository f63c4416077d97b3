"""Penalized semilinear problem ``delta v - Lap v + beta_eps(|Dv|^2 - 1) = f`` and its eps-continuation.

The penalty acts on the squared upwind gradient, so the discrete operator is
monotone and its eps -> 0 limit is the same discrete fixed point that
:func:`ergodic_hjb.direct.solve_constrained` computes.
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
from .direct import _initial_guess

log = logging.getLogger(__name__)


def beta(z, eps: float):
    """Penalty ``beta_eps`` and its derivative.

    ``0`` for ``z <= 0``, ``z^2 / (4 eps^2)`` on ``[0, 2 eps]`` and
    ``(z - eps) / eps`` beyond; C^1, nondecreasing and convex.
    """
    if not eps > 0:
        raise ValidationError(f"penalty eps must be positive, got {eps}")
    z = np.asarray(z, dtype=float)
    zc = np.clip(z, 0.0, 2 * eps)
    value = np.where(z >= 2 * eps, (z - eps) / eps, zc * zc / (4 * eps * eps))
    deriv = np.where(z >= 2 * eps, 1.0 / eps, zc / (2 * eps * eps))
    return value, deriv


def default_schedule() -> tuple[float, ...]:
    out = [1e-1]
    while out[-1] / 2 >= 1e-4 * (1 - 1e-12):
        out.append(out[-1] / 2)
    if out[-1] > 1e-4:
        out.append(1e-4)
    return tuple(out)


@dataclass(frozen=True)
class PenaltyConfig:
    epsilon_schedule: tuple[float, ...] = field(default_factory=default_schedule)
    damping: float = 1.0
    tolerances: SolverTolerances = field(default_factory=SolverTolerances)

    def __post_init__(self):
        sched = tuple(float(e) for e in self.epsilon_schedule)
        if not sched or any(e <= 0 for e in sched):
            raise ValidationError("epsilon schedule must be nonempty and positive")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValidationError("epsilon schedule must be strictly decreasing")
        if not 0 < self.damping <= 1:
            raise ValidationError("newton damping must lie in (0, 1]")
        object.__setattr__(self, "epsilon_schedule", sched)


@dataclass
class PenaltyDiagnostics:
    epsilons: list[float] = field(default_factory=list)
    max_penalty: list[float] = field(default_factory=list)
    max_second_derivative: list[float] = field(default_factory=list)
    max_gradient_excess: list[float] = field(default_factory=list)
    newton_iterations: list[int] = field(default_factory=list)

    def record(self, eps, v: ScalarField, st: Stencil, iters: int):
        flat = v.values.ravel()
        z = st.upwind_norm_sq(flat - flat.min()) - 1.0
        inner = st.interior
        self.epsilons.append(float(eps))
        self.max_penalty.append(float(beta(z[inner], eps)[0].max()))
        self.max_gradient_excess.append(float(np.maximum(z[inner], 0.0).max()))
        grid = v.grid
        ring = grid.interior(1)
        worst = 0.0
        for off in convexity_offsets(grid.n, (1,)):
            d2 = second_difference(v, off).values[ring] / (grid.h**2 * float(np.dot(off, off)))
            worst = max(worst, float(np.abs(d2).max()))
        self.max_second_derivative.append(worst)
        self.newton_iterations.append(int(iters))

    def as_dict(self) -> dict:
        return {
            "epsilons": self.epsilons,
            "max_penalty": self.max_penalty,
            "max_second_derivative": self.max_second_derivative,
            "max_gradient_excess": self.max_gradient_excess,
            "newton_iterations": self.newton_iterations,
        }


class _PenalizedOperator:
    """Residual and Jacobian of the penalized scheme.

    Box faces have no Laplacian row (``A_lin`` is ``delta I`` there), so they
    carry ``delta v + beta_eps(|D^up v|^2 - 1) = f`` with inward neighbours
    only: the far-field balance of the interior equation, which tends to
    ``|D^up v| = 1`` as ``eps -> 0``.  Pinning the slope to exactly 1 instead
    leaves an ``O(eps)`` concave layer next to the faces.
    """

    def __init__(self, cost: CostFunction, delta: float, eps: float, grid: Grid, st: Stencil | None = None):
        self.st = st or Stencil(grid)
        self.delta = delta
        self.eps = eps
        self.f = np.asarray(cost(grid.points), dtype=float).ravel()
        N = grid.size
        self.A_lin = (sp.identity(N, format="csr") * delta - self.st.laplacian).tocsr()

    def residual(self, w: np.ndarray, fs: np.ndarray) -> np.ndarray:
        z = self.st.upwind_norm_sq(w) - 1.0
        return self.A_lin @ w + beta(z, self.eps)[0] - fs

    def jacobian(self, w: np.ndarray) -> sp.csc_matrix:
        N = w.size
        z = self.st.upwind_norm_sq(w) - 1.0
        dbeta = beta(z, self.eps)[1]
        r, c, v = self.st.upwind_norm_sq_jacobian(w, np.arange(N), dbeta)
        return (self.A_lin + sp.csr_matrix((v, (r, c)), shape=(N, N))).tocsc()


def _stop_tol(newton_tol: float, w: np.ndarray, h: float, eps: float) -> float:
    # rounding floor: ulp(w) amplified by 1/h^2 (Laplacian) and 1/(h eps) (penalty slope)
    floor = 64 * np.finfo(float).eps * (1.0 + float(np.max(np.abs(w)))) * (1.0 / h**2 + 1.0 / (h * eps))
    return max(newton_tol, floor)


def _newton(op: _PenalizedOperator, u0: np.ndarray, tol: SolverTolerances, damping: float) -> tuple[np.ndarray, int]:
    s = float(u0.min())
    w = u0 - s
    fs = op.f - op.delta * s
    F = op.residual(w, fs)
    res = float(np.max(np.abs(F)))
    h = op.st.h
    recent = [res]
    for it in range(1, tol.max_iters + 1):
        if not np.isfinite(res):
            raise SolverError("non-finite residual in penalized Newton iteration")
        if res <= _stop_tol(tol.newton_tol, w, h, op.eps):
            return w + s, it - 1
        step = spla.spsolve(op.jacobian(w), -F)
        if not np.all(np.isfinite(step)):
            raise SolverError("singular Jacobian in penalized Newton iteration")
        # The operator is convex and monotone, so the first full step lands on a
        # supersolution and later steps descend; only halve when the residual
        # exceeds the recent maximum (a strict sup-norm decrease test stalls).
        ref = np.inf if it == 1 else max(recent[-5:])
        t = damping
        while True:
            w_try = w + t * step
            F_try = op.residual(w_try, fs)
            res_try = float(np.max(np.abs(F_try)))
            if (np.isfinite(res_try) and res_try <= ref) or t < 1e-6:
                break
            t *= 0.5
        w, F, res = w_try, F_try, res_try
        recent.append(res)
    if res <= _stop_tol(tol.newton_tol, w, h, op.eps):
        return w + s, tol.max_iters
    raise SolverError(
        f"penalized Newton did not converge in {tol.max_iters} iterations (residual {res:.3e}, eps={op.eps:g})"
    )


def solve_penalized(
    cost: CostFunction,
    delta: float,
    eps: float,
    grid: Grid,
    warm_start: ScalarField | None = None,
    config: PenaltyConfig | None = None,
    _with_iterations: bool = False,
):
    """Damped Newton solve of the penalized equation for one ``(delta, eps)``.

    Interior nodes carry the penalized equation; box faces drop the
    Laplacian term (see :class:`_PenalizedOperator`).
    """
    if not delta > 0:
        raise ValidationError(f"discount delta must be positive, got {delta}")
    if not eps > 0:
        raise ValidationError(f"penalty eps must be positive, got {eps}")
    if cost.n != grid.n:
        raise ValidationError(f"cost dimension {cost.n} does not match grid dimension {grid.n}")
    config = config or PenaltyConfig()
    op = _PenalizedOperator(cost, delta, eps, grid)
    if warm_start is None:
        u0 = _initial_guess(op.st, op.f, delta)
    else:
        u0 = np.array(warm_start.values, dtype=float).ravel()
    u, iters = _newton(op, u0, config.tolerances, config.damping)
    field_ = ScalarField(grid, u.reshape(grid.shape))
    return (field_, iters) if _with_iterations else field_


def continuation(
    cost: CostFunction,
    delta: float,
    grid: Grid,
    config: PenaltyConfig | None = None,
    warm_start: ScalarField | None = None,
    start_index: int = 0,
) -> tuple[ScalarField, PenaltyDiagnostics]:
    """Run :func:`solve_penalized` down the eps schedule, warm-starting each solve.

    Stops at the first eps whose solution satisfies
    ``max_interior (|D v|^2 - 1)^+ <= gradient_slack``.  With ``start_index``
    the schedule is entered part-way (used when ``warm_start`` is already a
    good approximation); a failed warm start falls back to the full schedule.
    """
    config = config or PenaltyConfig()
    sched = config.epsilon_schedule
    slack = config.tolerances.gradient_slack
    st = Stencil(grid)
    diag = PenaltyDiagnostics()
    current = warm_start
    first = min(max(int(start_index), 0), len(sched) - 1)
    try:
        return _run_schedule(cost, delta, grid, config, sched[first:], current, st, diag, slack)
    except SolverError:
        if first == 0 and warm_start is None:
            raise
        log.info("warm-started continuation failed at delta=%g; restarting the full schedule", delta)
        return _run_schedule(cost, delta, grid, config, sched, None, st, PenaltyDiagnostics(), slack)


def _run_schedule(cost, delta, grid, config, sched, current, st, diag, slack):
    for eps in sched:
        current, iters = solve_penalized(cost, delta, eps, grid, current, config, _with_iterations=True)
        diag.record(eps, current, st, iters)
        if diag.max_gradient_excess[-1] <= slack:
            return current, diag
    raise SolverError(
        f"eps schedule exhausted at eps={sched[-1]:g} with gradient excess "
        f"{diag.max_gradient_excess[-1]:.3e} > slack {slack:g}"
    )
