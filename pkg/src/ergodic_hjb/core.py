"""Cost families, truncated grids and the finite-difference calculus shared by the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import ndimage

FAMILIES = ("quadratic", "power", "anisotropic", "radial", "shifted")


class ValidationError(ValueError):
    """Invalid input: a cost, grid, tolerance or configuration value."""


class SolverError(RuntimeError):
    """A numerical solve failed to reach its stopping criterion."""


# ---------------------------------------------------------------------------
# cost functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostFunction:
    """Convex superlinear running cost ``f`` with its first two derivatives.

    Values are normalized so the minimum over space is zero; ``offset`` is the
    amount removed, so the eigenvalue of the original cost is the computed one
    plus ``offset``.  ``radial`` holds the profile ``f0`` when ``f(x) = f0(|x|)``.
    """

    family: str
    params: Mapping[str, object]
    n: int
    offset: float
    growth_exponent: float
    radial: Callable[[np.ndarray], np.ndarray] | None = field(repr=False, compare=False)
    _value: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    _gradient: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    _hessian: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def _points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if x.shape[-1] != self.n:
            raise ValidationError(f"expected points with last axis {self.n}, got shape {x.shape}")
        return x

    def __call__(self, x) -> np.ndarray:
        return self.value(x)

    def value(self, x) -> np.ndarray:
        return self._value(self._points(x))

    def gradient(self, x) -> np.ndarray:
        return self._gradient(self._points(x))

    def hessian(self, x) -> np.ndarray:
        return self._hessian(self._points(x))

    @property
    def is_radial(self) -> bool:
        return self.radial is not None

    def shifted(self, c: float) -> CostFunction:
        """Return ``f + c`` (no renormalization, so the shift identities can be tested)."""
        value, gradient, hessian, radial = self._value, self._gradient, self._hessian, self.radial
        params = {"base": self.family, "c": float(c), **{k: v for k, v in self.params.items() if k != "c"}}
        return CostFunction(
            family="shifted",
            params=params,
            n=self.n,
            offset=self.offset,
            growth_exponent=self.growth_exponent,
            radial=None if radial is None else (lambda r: radial(r) + c),
            _value=lambda x: value(x) + c,
            _gradient=gradient,
            _hessian=hessian,
        )

    def max_on_unit_ball(self) -> float:
        """``max_{|x|<=1} f``; attained on the unit sphere because ``f`` is convex."""
        if self.radial is not None:
            return float(self.radial(np.array(1.0)))
        if self.n == 1:
            sphere = np.array([[-1.0], [1.0]])
        elif self.n == 2:
            t = np.linspace(0.0, 2 * np.pi, 4097)
            sphere = np.stack([np.cos(t), np.sin(t)], axis=-1)
        else:
            rng = np.random.default_rng(0)
            g = rng.standard_normal((20000, self.n))
            sphere = np.concatenate([g / np.linalg.norm(g, axis=1, keepdims=True), np.eye(self.n), -np.eye(self.n)])
        return float(np.max(self.value(sphere)))


def _norm(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(x * x, axis=-1))


def _radial_derivatives(f0, df0, d2f0, n):
    """Gradient and Hessian of ``x -> f0(|x|)`` given the profile derivatives."""

    def gradient(x):
        r = _norm(x)
        safe = np.where(r > 0, r, 1.0)
        return (np.where(r > 0, df0(r) / safe, 0.0))[..., None] * x

    def hessian(x):
        r = _norm(x)
        safe = np.where(r > 0, r, 1.0)
        xhat = x / safe[..., None]
        outer = xhat[..., :, None] * xhat[..., None, :]
        eye = np.eye(n)
        tangential = np.where(r > 0, df0(r) / safe, d2f0(np.zeros_like(r)))
        return d2f0(r)[..., None, None] * outer + tangential[..., None, None] * (eye - outer)

    return gradient, hessian


def _table_profile(r_table: np.ndarray, f_table: np.ndarray):
    """Piecewise-linear convex interpolant of a table, with a quadratic tail past the last knot."""
    slopes = np.diff(f_table) / np.diff(r_table)
    r_end, f_end, s_end = r_table[-1], f_table[-1], slopes[-1]

    def f0(r):
        r = np.asarray(r, dtype=float)
        inside = np.interp(r, r_table, f_table)
        t = np.maximum(r - r_end, 0.0)
        return np.where(r <= r_end, inside, f_end + s_end * t + t * t)

    def df0(r):
        r = np.asarray(r, dtype=float)
        k = np.clip(np.searchsorted(r_table, r, side="right") - 1, 0, len(slopes) - 1)
        t = np.maximum(r - r_end, 0.0)
        return np.where(r <= r_end, slopes[k], s_end + 2 * t)

    def d2f0(r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= r_end, 0.0, 2.0)

    return f0, df0, d2f0


def make_cost(family: str, params: Mapping[str, object] | None = None, n: int = 1) -> CostFunction:
    """Build a cost from one of the built-in families.

    Parameters
    ----------
    family : {"quadratic", "power", "anisotropic", "radial", "shifted"}
        ``quadratic`` is ``|x|^2``; ``power`` is ``c |x|^p`` (keys ``c``, ``p``);
        ``anisotropic`` is ``x.Ax`` (key ``A``); ``radial`` is ``f0(|x|)`` from a
        convex nondecreasing table (keys ``r``, ``f``); ``shifted`` adds a
        constant ``c`` to the normalized cost of family ``base`` (remaining keys
        are passed to the base family).
    params : mapping, optional
    n : int
        Space dimension.
    """
    params = dict(params or {})
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValidationError(f"dimension must be a positive integer, got {n!r}")
    n = int(n)

    if family == "shifted":
        base = params.pop("base", "quadratic")
        c = float(params.pop("c", 0.0))
        if base == "shifted":
            raise ValidationError("shifted cost cannot wrap another shifted cost")
        if c < 0:
            raise ValidationError("shift c must be >= 0 to keep the cost nonnegative")
        return make_cost(str(base), params, n).shifted(c)

    if family == "quadratic":
        return _power_cost("quadratic", {}, n, 1.0, 2.0)

    if family == "power":
        c = float(params.get("c", 1.0))
        p = float(params.get("p", 2.0))
        if p <= 1:
            raise ValidationError(f"power cost with p={p} is not superlinear (need p > 1)")
        if c <= 0:
            raise ValidationError(f"power cost needs c > 0, got {c}")
        return _power_cost("power", {"c": c, "p": p}, n, c, p)

    if family == "anisotropic":
        if "A" not in params:
            raise ValidationError("anisotropic cost needs a matrix 'A'")
        A = np.asarray(params["A"], dtype=float)
        if A.shape != (n, n):
            raise ValidationError(f"A must be {n}x{n}, got shape {A.shape}")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12):
            raise ValidationError("A must be symmetric")
        eig = np.linalg.eigvalsh(A)
        if eig.min() <= 0:
            raise ValidationError(f"A must be positive definite (not convex/superlinear); eigenvalues {eig}")
        radial = None
        if np.allclose(A, eig[0] * np.eye(n)):
            a = float(eig[0])
            radial = lambda r: a * np.asarray(r, dtype=float) ** 2  # noqa: E731
        return CostFunction(
            family="anisotropic",
            params={"A": A.tolist()},
            n=n,
            offset=0.0,
            growth_exponent=2.0,
            radial=radial,
            _value=lambda x: np.einsum("...i,ij,...j->...", x, A, x),
            _gradient=lambda x: 2.0 * x @ A,
            _hessian=lambda x: np.broadcast_to(2.0 * A, x.shape[:-1] + (n, n)).copy(),
        )

    if family == "radial":
        if "r" not in params or "f" not in params:
            raise ValidationError("radial cost needs table keys 'r' and 'f'")
        r_table = np.asarray(params["r"], dtype=float)
        f_table = np.asarray(params["f"], dtype=float)
        if r_table.ndim != 1 or r_table.shape != f_table.shape or r_table.size < 2:
            raise ValidationError("radial table needs matching 1-D 'r' and 'f' with at least two entries")
        if r_table[0] != 0.0 or np.any(np.diff(r_table) <= 0):
            raise ValidationError("radial table 'r' must start at 0 and increase strictly")
        slopes = np.diff(f_table) / np.diff(r_table)
        if np.any(slopes < 0):
            raise ValidationError("radial table must be nondecreasing")
        if np.any(np.diff(slopes) < -1e-12 * max(1.0, np.abs(slopes).max())):
            raise ValidationError("radial table must be convex")
        offset = float(f_table[0])
        f0, df0, d2f0 = _table_profile(r_table, f_table - offset)
        gradient, hessian = _radial_derivatives(f0, df0, d2f0, n)
        return CostFunction(
            family="radial",
            params={"r": r_table.tolist(), "f": f_table.tolist()},
            n=n,
            offset=offset,
            growth_exponent=2.0,
            radial=f0,
            _value=lambda x: f0(_norm(x)),
            _gradient=gradient,
            _hessian=hessian,
        )

    raise ValidationError(f"unknown cost family {family!r}; expected one of {FAMILIES}")


def _power_cost(family: str, params: dict, n: int, c: float, p: float) -> CostFunction:
    def f0(r):
        return c * np.asarray(r, dtype=float) ** p

    def df0(r):
        return c * p * np.asarray(r, dtype=float) ** (p - 1)

    def d2f0(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return c * p * (p - 1) * np.where(r > 0, r, 0.0) ** (p - 2) if p != 2 else np.full_like(r, 2.0 * c)

    gradient, hessian = _radial_derivatives(f0, df0, d2f0, n)
    return CostFunction(
        family=family,
        params=params,
        n=n,
        offset=0.0,
        growth_exponent=p,
        radial=f0,
        _value=lambda x: f0(_norm(x)),
        _gradient=gradient,
        _hessian=hessian,
    )


# ---------------------------------------------------------------------------
# grids and fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on the box ``[-R, R]^n`` with ``m`` nodes per axis."""

    n: int
    half_width: float
    nodes: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValidationError(f"grid dimension must be 1 or 2, got {self.n}")
        if not self.half_width > 0:
            raise ValidationError(f"grid half-width must be positive, got {self.half_width}")
        if int(self.nodes) != self.nodes or self.nodes < 5:
            raise ValidationError(f"grid needs at least 5 nodes per axis, got {self.nodes}")

    @classmethod
    def from_spacing(cls, n: int, half_width: float, h: float) -> Grid:
        m = int(round(2 * half_width / h)) + 1
        return cls(n, float(half_width), m)

    @property
    def h(self) -> float:
        return 2 * self.half_width / (self.nodes - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes,) * self.n

    @property
    def size(self) -> int:
        return self.nodes**self.n

    @property
    def axis(self) -> np.ndarray:
        return -self.half_width + self.h * np.arange(self.nodes)

    @property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(n, *shape)``."""
        return np.stack(np.meshgrid(*([self.axis] * self.n), indexing="ij"))

    @property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(*shape, n)``."""
        return np.moveaxis(self.coords, 0, -1)

    @property
    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.coords**2, axis=0))

    def interior(self, ring: int = 1) -> np.ndarray:
        """Mask of nodes at least ``ring`` nodes away from the box boundary."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(ring, self.nodes - ring),) * self.n] = True
        return mask

    def sample(self, fn: Callable[[np.ndarray], np.ndarray]) -> ScalarField:
        return ScalarField(self, fn(self.points))


@dataclass(frozen=True)
class ScalarField:
    """Real nodal values on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.size != self.grid.size:
            raise ValidationError(f"field has {values.size} values for a grid of {self.grid.size} nodes")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValidationError("field values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __add__(self, other) -> ScalarField:
        other = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values + other)

    def __sub__(self, other) -> ScalarField:
        other = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values - other)

    def __mul__(self, t: float) -> ScalarField:
        return ScalarField(self.grid, self.values * t)

    __rmul__ = __mul__

    def sup_distance(self, other: ScalarField) -> float:
        return float(np.max(np.abs(self.values - other.values)))

    def at(self, index: Sequence[int]) -> float:
        return float(self.values[tuple(index)])


@dataclass(frozen=True)
class SolverTolerances:
    newton_tol: float = 1e-9
    max_iters: int = 200
    gradient_slack: float = 1e-2
    convexity_slack: float = 1e-8

    def __post_init__(self):
        for name in ("newton_tol", "max_iters", "gradient_slack", "convexity_slack"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"tolerance {name} must be positive")


# ---------------------------------------------------------------------------
# discrete calculus
# ---------------------------------------------------------------------------


def gradient_central(field: ScalarField) -> np.ndarray:
    """Centered gradient, second-order one-sided at the box faces; shape ``(n, *shape)``."""
    g = np.gradient(field.values, field.grid.h, edge_order=2)
    if field.grid.n == 1:
        g = [g]
    return np.stack(g)


def gradient_norm(field: ScalarField) -> np.ndarray:
    return np.sqrt(np.sum(gradient_central(field) ** 2, axis=0))


def _second_derivative(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    u = np.moveaxis(values, axis, 0)
    d2 = np.empty_like(u)
    d2[1:-1] = u[2:] - 2 * u[1:-1] + u[:-2]
    d2[0] = 2 * u[0] - 5 * u[1] + 4 * u[2] - u[3]
    d2[-1] = 2 * u[-1] - 5 * u[-2] + 4 * u[-3] - u[-4]
    return np.moveaxis(d2, 0, axis) / h**2


def laplacian_5pt(field: ScalarField) -> ScalarField:
    """Standard (2n+1)-point Laplacian; boundary nodes use one-sided second differences."""
    lap = sum(_second_derivative(field.values, k, field.grid.h) for k in range(field.grid.n))
    return ScalarField(field.grid, lap)


def second_difference(field: ScalarField, z: Sequence[int]) -> ScalarField:
    """``u(x+z) - 2u(x) + u(x-z)`` for an integer node offset ``z`` (not divided by ``|z|^2``).

    Where the centered stencil leaves the box the one-sided version
    ``u(x) - 2u(x+z) + u(x+2z)`` (or its mirror) is used; nodes admitting
    neither get 0.
    """
    grid = field.grid
    z = np.asarray(z, dtype=int).reshape(-1)
    if z.shape != (grid.n,) or not np.any(z):
        raise ValidationError(f"offset must be a nonzero integer vector of length {grid.n}")
    u = field.values
    idx = np.stack(np.meshgrid(*[np.arange(grid.nodes)] * grid.n, indexing="ij"), axis=-1)

    def take(shift):
        j = idx + shift
        ok = np.all((j >= 0) & (j < grid.nodes), axis=-1)
        jc = np.clip(j, 0, grid.nodes - 1)
        return u[tuple(np.moveaxis(jc, -1, 0))], ok

    up, ok_p = take(z)
    um, ok_m = take(-z)
    up2, ok_p2 = take(2 * z)
    um2, ok_m2 = take(-2 * z)
    out = np.zeros_like(u)
    fwd = ok_p2 & ~(ok_p & ok_m)
    bwd = ok_m2 & ~(ok_p & ok_m) & ~fwd
    out = np.where(ok_p & ok_m, up - 2 * u + um, out)
    out = np.where(fwd, u - 2 * up + up2, out)
    out = np.where(bwd, u - 2 * um + um2, out)
    return ScalarField(grid, out)


def convexity_offsets(n: int, magnitudes: Sequence[int] = (1, 2)) -> list[tuple[int, ...]]:
    """Axis and diagonal offsets; diagonals are needed because axis convexity alone is not enough in 2-D."""
    if n == 1:
        return [(k,) for k in magnitudes]
    out = []
    for k in magnitudes:
        out += [(k, 0), (0, k), (k, k), (k, -k)]
    return out


def mollify(field: ScalarField, radius: float) -> ScalarField:
    """Convolve with a normalized ``exp(-1/(1-s^2))`` bump of the given radius.

    Near the box faces the kernel is truncated and renormalized, which keeps
    the operation linear, monotone and exact on constants.
    """
    grid = field.grid
    if radius < grid.h * (1 - 1e-12):
        raise ValidationError(f"mollification radius {radius} is below the grid spacing {grid.h}")
    if radius > grid.half_width:
        raise ValidationError(f"mollification radius {radius} exceeds the box half-width {grid.half_width}")
    k = int(np.floor(radius / grid.h))
    offs = np.arange(-k, k + 1) * grid.h
    dist2 = sum(np.meshgrid(*([offs**2] * grid.n), indexing="ij"))
    s2 = dist2 / radius**2
    kernel = np.where(s2 < 1, np.exp(-1.0 / np.where(s2 < 1, 1 - s2, 1.0)), 0.0)
    kernel /= kernel.sum()
    num = ndimage.correlate(field.values, kernel, mode="constant", cval=0.0)
    den = ndimage.correlate(np.ones(grid.shape), kernel, mode="constant", cval=0.0)
    return ScalarField(grid, num / den)
