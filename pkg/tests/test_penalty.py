from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergodic_hjb import (
    Grid,
    PenaltyConfig,
    SolverTolerances,
    ValidationError,
    beta,
    continuation,
    gradient_norm,
    make_cost,
    solve_constrained,
    solve_penalized,
    subsolution_gap,
)
from ergodic_hjb.penalty import default_schedule

eps_st = st.floats(1e-4, 10.0)


def test_beta_examples():
    assert beta(-1.0, 0.1)[0] == 0.0
    assert beta(3.0, 1.0)[0] == pytest.approx(2.0)
    eps = 0.37
    assert beta(eps, eps)[0] == pytest.approx(0.25)


@settings(max_examples=100, deadline=None)
@given(eps=eps_st, z=st.floats(-50, 50))
def test_beta_shape(eps, z):
    v, d = beta(z, eps)
    assert v >= 0 and d >= 0
    if z <= 0:
        assert v == 0 and d == 0
    # derivative consistent with a central difference away from the knots
    step = 1e-7 * max(eps, abs(z), 1e-3)
    if abs(z) > 2 * step and abs(z - 2 * eps) > 2 * step:
        fd = (beta(z + step, eps)[0] - beta(z - step, eps)[0]) / (2 * step)
        assert float(d) == pytest.approx(float(fd), rel=1e-4, abs=1e-6 / eps)


@settings(max_examples=40, deadline=None)
@given(eps=eps_st)
def test_beta_c1_monotone_convex_on_a_grid(eps):
    z = np.linspace(-3 * eps, 6 * eps, 2001)
    v, d = beta(z, eps)
    assert np.all(np.diff(v) >= -1e-12)
    assert np.all(np.diff(d) >= -1e-12)
    # C^1 at both knots: one-sided slopes agree
    for knot in (0.0, 2 * eps):
        h = 1e-6 * eps
        left = (beta(knot, eps)[0] - beta(knot - h, eps)[0]) / h
        right = (beta(knot + h, eps)[0] - beta(knot, eps)[0]) / h
        assert left == pytest.approx(right, abs=2e-5 / eps)


def test_beta_rejects_nonpositive_eps():
    with pytest.raises(ValidationError):
        beta(1.0, 0.0)


def test_default_schedule_and_config_validation():
    s = default_schedule()
    assert s[0] == 0.1 and s[-1] == pytest.approx(1e-4)
    assert all(b < a for a, b in zip(s, s[1:]))
    with pytest.raises(ValidationError):
        PenaltyConfig(epsilon_schedule=(0.1, 0.2))
    with pytest.raises(ValidationError):
        PenaltyConfig(epsilon_schedule=(0.1, -0.1))
    with pytest.raises(ValidationError):
        PenaltyConfig(damping=0.0)


@pytest.fixture(scope="module")
def setup1():
    return make_cost("quadratic", n=1), Grid.from_spacing(1, 4.0, 0.01)


def test_penalized_solution_symmetric_and_above_direct(setup1):
    cost, grid = setup1
    u = solve_constrained(cost, 1.0, grid).u.values
    v = solve_penalized(cost, 1.0, 1e-3, grid).values
    np.testing.assert_allclose(v, v[::-1], atol=1e-9)
    assert np.all(v >= u - 1e-9)


def test_penalized_2d_reflection_symmetry():
    cost, grid = make_cost("quadratic", n=2), Grid.from_spacing(2, 3.0, 0.15)
    v = solve_penalized(cost, 1.0, 1e-2, grid).values
    np.testing.assert_allclose(v, v[::-1, :], atol=1e-9)
    np.testing.assert_allclose(v, v.T, atol=1e-9)


def test_shift_by_constant(setup1):
    cost, grid = setup1
    for delta in (1.0, 0.25):
        a = solve_penalized(cost, delta, 1e-2, grid).values
        b = solve_penalized(cost.shifted(5.0), delta, 1e-2, grid).values
        np.testing.assert_allclose(b, a + 5.0 / delta, atol=1e-8 / delta)


def test_warm_start_at_solution_is_a_fixed_point(setup1):
    cost, grid = setup1
    v, it = solve_penalized(cost, 1.0, 1e-2, grid, _with_iterations=True)
    assert it > 1
    v2, it2 = solve_penalized(cost, 1.0, 1e-2, grid, warm_start=v, _with_iterations=True)
    assert it2 <= 1
    np.testing.assert_allclose(v2.values, v.values, atol=1e-10)


def test_continuation_meets_gradient_slack(setup1):
    cost, grid = setup1
    v, diag = continuation(cost, 1.0, grid)
    assert diag.max_gradient_excess[-1] <= 1e-2
    inner = grid.interior(1)
    assert (gradient_norm(v)[inner] - 1).max() <= 1e-2
    assert all(np.isfinite(x) for x in diag.max_penalty + diag.max_second_derivative)
    d = diag.as_dict()
    assert len(d["epsilons"]) == len(d["newton_iterations"]) >= 3
    # penalty values stay bounded as eps shrinks
    last = d["max_penalty"][-3:]
    assert max(last) < 2 * min(last)


def test_continuation_dominates_subsolution(setup1):
    cost, grid = setup1
    v, _ = continuation(cost, 0.25, grid)
    K = grid.n + cost.max_on_unit_ball()
    assert subsolution_gap(v, K) >= -1e-9


def test_second_derivative_ratio_does_not_grow(setup1):
    cost, grid = setup1
    sched = tuple(0.1 * 0.5**k for k in range(12))
    cfg = PenaltyConfig(epsilon_schedule=sched, tolerances=SolverTolerances(gradient_slack=1e-12))
    v = None
    ratios = []
    for eps in sched:
        v = solve_penalized(cost, 1.0, eps, grid, warm_start=v, config=cfg)
        d2 = np.abs(np.diff(v.values, 2)).max() / grid.h**2
        scale = 1 + np.abs(v.values).max() + gradient_norm(v).max() ** 2
        ratios.append(d2 / scale)
    assert max(ratios) <= 1.5 * ratios[0]


def test_continuation_2d_matches_direct():
    cost, grid = make_cost("quadratic", n=2), Grid.from_spacing(2, 3.0, 0.1)
    u = solve_constrained(cost, 1.0, grid).u.values
    cfg = PenaltyConfig(epsilon_schedule=tuple(0.1 * 0.5**k for k in range(20)),
                        tolerances=SolverTolerances(gradient_slack=1e-3))
    v, _ = continuation(cost, 1.0, grid, cfg)
    assert np.max(np.abs(v.values - u)) <= 1e-3
    assert np.all(v.values >= u - 1e-9)


def test_exhausted_schedule_raises(setup1):
    from ergodic_hjb import SolverError

    cost, grid = setup1
    cfg = PenaltyConfig(epsilon_schedule=(0.5,), tolerances=SolverTolerances(gradient_slack=1e-6))
    with pytest.raises(SolverError, match="exhausted"):
        continuation(cost, 1.0, grid, cfg)


def test_validation(setup1):
    cost, grid = setup1
    with pytest.raises(ValidationError):
        solve_penalized(cost, -1.0, 1e-2, grid)
    with pytest.raises(ValidationError):
        solve_penalized(cost, 1.0, 0.0, grid)
    with pytest.raises(ValidationError):
        solve_penalized(make_cost("quadratic", n=2), 1.0, 1e-2, grid)
