"""Monte Carlo estimate of the long-run average cost of a ball-reflection policy.

The controlled state is ``X = sqrt(2) W + nu``, where ``nu`` pushes ``X``
back onto the ball ``|x| <= r`` along the inward normal.  The time-average
of ``f(X)`` plus the total push per unit time is an upper estimate of the
ergodic eigenvalue, with equality at the optimal ball for radial costs.

Seeding contract: path ``p`` draws its normals from
``numpy.random.PCG64(SeedSequence(seed, spawn_key=(p,)))``, so adding paths
never changes the paths already simulated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .core import CostFunction, SolverError, ValidationError
from .radial import variational_lambda

log = logging.getLogger(__name__)

_CHUNK = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    """Euler-Maruyama settings for reflected Brownian paths started at the origin."""

    n: int = 1
    radius: float = 1.0
    dt: float = 1e-4
    horizon: float = 200.0
    paths: int = 32
    seed: int = 0
    burn_in: float = 0.1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"simulation dimension must be a positive integer, got {self.n}")
        if not self.radius > 0:
            raise ValidationError(f"reflection radius must be positive, got {self.radius}")
        if not self.dt > 0:
            raise ValidationError(f"time step must be positive, got {self.dt}")
        if not self.horizon >= 10 * self.dt:
            raise ValidationError(f"horizon {self.horizon} must be much longer than dt {self.dt}")
        if int(self.paths) != self.paths or self.paths < 1:
            raise ValidationError(f"path count must be a positive integer, got {self.paths}")
        if not 0 <= self.burn_in < 1:
            raise ValidationError(f"burn-in fraction must lie in [0, 1), got {self.burn_in}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValidationError(f"seed must be a nonnegative integer, got {self.seed}")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def burn_steps(self) -> int:
        return int(round(self.burn_in * self.steps))


@dataclass(frozen=True)
class ErgodicEstimate:
    """Path-averaged cost rate; ``running_cost + local_time == mean`` up to rounding."""

    mean: float
    stderr: float
    running_cost: float
    local_time: float
    paths: int
    failed_paths: tuple[int, ...] = ()
    per_path: tuple[float, ...] = field(default=(), repr=False)

    def as_dict(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "running_cost": self.running_cost,
            "local_time": self.local_time,
            "paths": self.paths,
            "failed_paths": list(self.failed_paths),
        }


@numba.njit(cache=True)
def _reflect(x, steps, radius, out):
    """Advance ``x`` through the increments, projecting onto the ball; returns the total overshoot."""
    m, n = steps.shape
    push = 0.0
    for k in range(m):
        s = 0.0
        for j in range(n):
            x[j] += steps[k, j]
            s += x[j] * x[j]
        norm = np.sqrt(s)
        if norm > radius:
            push += norm - radius
            scale = radius / norm
            for j in range(n):
                x[j] *= scale
        for j in range(n):
            out[k, j] = x[j]
    return push


def _path_rng(seed: int, path: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(path,))))


def _one_path(cost: CostFunction, config: SimConfig, path: int) -> tuple[float, float]:
    """Running-cost sum and local time accumulated after burn-in, both per unit time."""
    rng = _path_rng(config.seed, path)
    n, dt = config.n, config.dt
    total, burn = config.steps, config.burn_steps
    sigma = np.sqrt(2.0 * dt)
    x = np.zeros(n)
    positions = np.empty((_CHUNK, n))
    running = 0.0
    local = 0.0
    done = 0
    while done < total:
        m = min(_CHUNK, total - done)
        steps = sigma * rng.standard_normal((m, n))
        pos = positions[:m]
        # the burn-in boundary may fall inside a chunk: split the reflection there
        cut = min(max(burn - done, 0), m)
        if cut:
            _reflect(x, steps[:cut], config.radius, pos[:cut])
        if cut < m:
            local += _reflect(x, steps[cut:], config.radius, pos[cut:])
            # left-point rule: the cost at step k is charged at the state entering it
            vals = np.asarray(cost(pos[cut:]), dtype=float)
            if not np.all(np.isfinite(vals)):
                raise FloatingPointError(f"non-finite cost on path {path}")
            running += float(vals.sum())
        done += m
    elapsed = (total - burn) * dt
    return running * dt / elapsed, local / elapsed


def simulate_ball_policy(cost: CostFunction, config: SimConfig) -> ErgodicEstimate:
    """Average cost rate of reflection on the sphere of radius ``config.radius``.

    Parameters
    ----------
    cost : CostFunction
        Running cost; its dimension must match ``config.n``.
    config : SimConfig

    Returns
    -------
    ErgodicEstimate
        Mean over paths with the standard error of the mean.  Paths where
        ``f`` overflows are dropped and listed in ``failed_paths``.
    """
    if cost.n != config.n:
        raise ValidationError(f"cost dimension {cost.n} does not match simulation dimension {config.n}")
    run = []
    push = []
    failed = []
    for p in range(config.paths):
        try:
            a, b = _one_path(cost, config, p)
        except FloatingPointError as exc:
            log.warning("%s; path dropped", exc)
            failed.append(p)
            continue
        run.append(a)
        push.append(b)
    if not run:
        raise SolverError("every simulated path produced a non-finite cost")
    run = np.asarray(run)
    push = np.asarray(push)
    total = run + push
    k = total.size
    stderr = float(total.std(ddof=1) / np.sqrt(k)) if k > 1 else 0.0
    return ErgodicEstimate(
        mean=float(total.mean()),
        stderr=stderr,
        running_cost=float(run.mean()),
        local_time=float(push.mean()),
        paths=k,
        failed_paths=tuple(failed),
        per_path=tuple(float(v) for v in total),
    )


def policy_sweep(
    cost: CostFunction, radii: Sequence[float], config: SimConfig
) -> list[tuple[float, ErgodicEstimate]]:
    """:func:`simulate_ball_policy` at each radius, with the same seed (common random numbers)."""
    radii = [float(r) for r in radii]
    if any(not r > 0 for r in radii):
        raise ValidationError(f"radii must be positive, got {radii}")
    out = []
    for r in radii:
        cfg = SimConfig(config.n, r, config.dt, config.horizon, config.paths, config.seed, config.burn_in)
        out.append((r, simulate_ball_policy(cost, cfg)))
    return out


def stationary_cost_1d(f0, radius: float) -> float:
    """Ergodic cost of reflecting 1-D ``sqrt(2) W`` at ``+-radius``: uniform average of ``f0`` plus ``1/radius``."""
    return variational_lambda(f0, radius)
