"""Rotational costs ``f(x) = f0(|x|)``: eigenvalue, free-boundary radius and profiles from the radial ODE.

Inside the ball ``B(0, r0)`` the profile solves
``(r^{n-1} phi')' = r^{n-1} (lambda - f0)`` with ``phi'(0) = 0``; outside,
``phi' = 1``.  Smooth pasting ``phi''(r0-) = 0`` gives
``lambda = f0(r0) + (n - 1)/r0`` and the slope condition ``phi'(r0) = 1``
closes the system in the single unknown ``r0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .core import SolverError, ValidationError

Profile = Callable[[np.ndarray], np.ndarray]

_QUAD = dict(epsabs=1e-14, epsrel=1e-13, limit=200)


@dataclass(frozen=True)
class RadialSolution:
    n: int
    lam: float
    r0: float
    r: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    d2phi: np.ndarray
    pasting_defect: float
    delta: float = 0.0


def _f0_scalar(f0: Profile) -> Callable[[float], float]:
    return lambda s: float(f0(np.asarray(s, dtype=float)))


def _weighted_integral(f0s, n: int, lam: float, r: float) -> float:
    """``int_0^r s^{n-1} (lam - f0(s)) ds``."""
    if r == 0:
        return 0.0
    val, _ = integrate.quad(lambda s: s ** (n - 1) * (lam - f0s(s)), 0.0, r, **_QUAD)
    return val


def _slope(f0s, n: int, lam: float, r: float) -> float:
    """``phi'(r) = r^{1-n} int_0^r s^{n-1} (lam - f0(s)) ds``."""
    return 0.0 if r == 0 else r ** (1 - n) * _weighted_integral(f0s, n, lam, r)


def pasting_lambda(f0: Profile, n: int, r0: float) -> float:
    return float(f0(np.asarray(r0))) + (n - 1) / r0


def radial_eigen(f0: Profile, n: int, r_search: float = 1e6) -> tuple[float, float]:
    """Ergodic eigenvalue and free-boundary radius ``(lambda, r0)`` for ``f(x) = f0(|x|)``.

    The bracket on ``r0`` starts at ``1e-3`` and doubles until the slope
    residual ``phi'(r0) - 1`` changes sign, then Brent's method refines it.
    """
    if n < 1:
        raise ValidationError(f"dimension must be >= 1, got {n}")
    f0s = _f0_scalar(f0)

    def residual(r0):
        return _slope(f0s, n, pasting_lambda(f0, n, r0), r0) - 1.0

    lo = 1e-3
    if residual(lo) >= 0:
        raise SolverError("slope residual already nonnegative at r=1e-3; f0 is not a valid cost profile")
    hi = 2 * lo
    while residual(hi) < 0:
        lo, hi = hi, 2 * hi
        if hi > r_search:
            raise SolverError(f"no bracket for r0 in (0, {r_search}]; f0 is not superlinear")
    r0 = optimize.brentq(residual, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return pasting_lambda(f0, n, r0), float(r0)


def _phi_kernel(n: int, s: float, r: float) -> float:
    """``int_s^r t^{1-n} dt``, so that ``phi(r) = int_0^r s^{n-1} g(s) K(s, r) ds``."""
    if n == 1:
        return r - s
    if n == 2:
        return np.log(r / s) if s > 0 else 0.0
    return (s ** (2 - n) - r ** (2 - n)) / (n - 2)


def radial_profile(f0: Profile, n: int, lam: float, r0: float, r: np.ndarray) -> RadialSolution:
    """Ergodic profile ``phi`` (with ``phi(0) = 0``) and its derivatives on the samples ``r``."""
    r = np.asarray(r, dtype=float)
    f0s = _f0_scalar(f0)

    def g(s):
        return lam - f0s(s)

    def phi_inside(x):
        if x == 0:
            return 0.0
        val, _ = integrate.quad(lambda s: s ** (n - 1) * g(s) * _phi_kernel(n, s, x), 0.0, x, **_QUAD)
        return val

    phi_r0 = phi_inside(r0)
    phi = np.empty_like(r)
    dphi = np.empty_like(r)
    d2phi = np.empty_like(r)
    for i, x in enumerate(r):
        if x <= r0:
            phi[i] = phi_inside(x)
            dphi[i] = _slope(f0s, n, lam, x)
            if x == 0:
                d2phi[i] = g(0.0) / n
            else:
                d2phi[i] = g(x) - (n - 1) / x * dphi[i]
        else:
            phi[i] = phi_r0 + (x - r0)
            dphi[i] = 1.0
            d2phi[i] = 0.0
    # phi''(r0-) read off the ODE with the quadrature slope phi'(r0)
    defect = abs(g(r0) - (n - 1) / r0 * _slope(f0s, n, lam, r0))
    return RadialSolution(n=n, lam=float(lam), r0=float(r0), r=r, phi=phi, dphi=dphi, d2phi=d2phi,
                          pasting_defect=float(defect))


def variational_lambda(f0: Profile, r: float) -> float:
    """1-D ergodic cost of reflecting at ``+-r``: ``(1/2r) int_{-r}^{r} f0(|s|) ds + 1/r``."""
    f0s = _f0_scalar(f0)
    val, _ = integrate.quad(f0s, 0.0, r, **_QUAD)
    return val / r + 1.0 / r


def _shoot(f0, n, delta, a, r_max):
    """Integrate ``phi'' = delta phi - (n-1)/r phi' - f0`` from ``phi(0) = a``, ``phi'(0) = 0``.

    Stops at the first zero of ``phi''`` (where ``phi'`` peaks) or when
    ``phi'`` exceeds 2.  Returns ``(peak slope, radius, solution)``.
    """
    c0 = (delta * a - float(f0(np.asarray(0.0)))) / n
    r_start = 1e-6
    y0 = [a + 0.5 * c0 * r_start**2, c0 * r_start]

    def rhs(r, y):
        return [y[1], delta * y[0] - (n - 1) / r * y[1] - float(f0(np.asarray(r)))]

    def curvature_zero(r, y):
        return rhs(r, y)[1]

    curvature_zero.terminal = True
    curvature_zero.direction = -1

    def steep(r, y):
        return y[1] - 2.0

    steep.terminal = True

    sol = integrate.solve_ivp(rhs, (r_start, r_max), y0, method="DOP853", rtol=1e-12, atol=1e-12,
                              events=(curvature_zero, steep), dense_output=True)
    if sol.t_events[0].size:
        r_peak = float(sol.t_events[0][0])
        return float(sol.y_events[0][0][1]), r_peak, sol
    if sol.t_events[1].size:
        return 2.0, float(sol.t_events[1][0]), sol
    return float(sol.y[1].max()), float(sol.t[-1]), sol


def radial_discounted(f0: Profile, n: int, delta: float, r: np.ndarray, r_max: float = 50.0) -> RadialSolution:
    """Discounted radial profile by shooting on ``a = phi(0)``.

    The free boundary is where ``phi'`` first touches 1 with ``phi'' = 0``;
    the peak slope ``max phi'`` is increasing in ``a``, so ``a`` is found by
    bracketing ``peak(a) - 1`` and refining with Brent's method.
    """
    if not delta > 0:
        raise ValidationError(f"discount delta must be positive, got {delta}")
    f00 = float(f0(np.asarray(0.0)))

    def peak_residual(a):
        return _shoot(f0, n, delta, a, r_max)[0] - 1.0

    lo = f00 / delta
    step = max(1.0, abs(lo)) * 1e-3 + 1.0 / delta
    hi = lo + step
    while peak_residual(hi) < 0:
        lo, hi = hi, hi + step
        step *= 2
        if step > 1e12:
            raise SolverError("shooting failed to bracket phi(0)")
    a = optimize.brentq(peak_residual, lo, hi, xtol=1e-13 * max(1.0, abs(hi)), rtol=1e-14, maxiter=300)
    peak, r0, sol = _shoot(f0, n, delta, a, r_max)
    if abs(peak - 1.0) > 1e-6:
        raise SolverError(f"shooting did not converge: peak slope {peak}")
    r = np.asarray(r, dtype=float)
    phi = np.empty_like(r)
    dphi = np.empty_like(r)
    inside = r <= r0
    small = inside & (r < 1e-6)
    mid = inside & ~small
    c0 = (delta * a - f00) / n
    phi[small] = a + 0.5 * c0 * r[small] ** 2
    dphi[small] = c0 * r[small]
    if mid.any():
        y = sol.sol(r[mid])
        phi[mid], dphi[mid] = y[0], y[1]
    phi_r0 = float(sol.sol(r0)[0])
    phi[~inside] = phi_r0 + (r[~inside] - r0)
    dphi[~inside] = 1.0
    safe = np.where(r > 0, r, 1.0)
    d2phi = np.where(inside, delta * phi - (n - 1) / safe * dphi - np.asarray(f0(r), dtype=float), 0.0)
    d2phi = np.where(r == 0, c0, d2phi)
    defect = abs(delta * phi_r0 - (n - 1) / r0 - float(f0(np.asarray(r0))))
    return RadialSolution(n=n, lam=float(delta * a), r0=r0, r=r, phi=phi, dphi=dphi, d2phi=d2phi,
                          pasting_defect=float(defect), delta=float(delta))
