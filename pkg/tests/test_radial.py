from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from ergodic_hjb import SolverError, ValidationError, radial_discounted, radial_eigen, radial_profile, variational_lambda

from .conftest import LAMBDA_1D, LAMBDA_2D, R0_1D, R0_2D


def sq(r):
    return np.asarray(r, dtype=float) ** 2


def power(c, p):
    return lambda r: c * np.asarray(r, dtype=float) ** p


@pytest.mark.parametrize(
    "f0, n, lam, r0",
    [
        (sq, 1, LAMBDA_1D, R0_1D),
        (sq, 2, LAMBDA_2D, R0_2D),
        (power(1.0, 4.0), 1, 1.25**0.8, 1.25**0.2),
    ],
)
def test_closed_forms(f0, n, lam, r0):
    got_lam, got_r0 = radial_eigen(f0, n)
    assert got_lam == pytest.approx(lam, rel=1e-10)
    assert got_r0 == pytest.approx(r0, rel=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_quadratic_radius_in_any_dimension(n):
    # slope condition lam r0/n - r0^3/(n+2) = 1 with lam = r0^2 + (n-1)/r0 gives r0^3 = (n+2)/2
    lam, r0 = radial_eigen(sq, n)
    assert r0**3 == pytest.approx((n + 2) / 2, rel=1e-10)
    assert lam == pytest.approx(r0**2 + (n - 1) / r0, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(0.2, 5.0), p=st.floats(1.3, 6.0))
def test_one_dimensional_power_family(c, p):
    r0 = ((p + 1) / (c * p)) ** (1 / (p + 1))
    lam, got = radial_eigen(power(c, p), 1)
    assert got == pytest.approx(r0, rel=1e-9)
    assert lam == pytest.approx(c * r0**p, rel=1e-9)


@settings(max_examples=15, deadline=None)
@given(c=st.floats(0.3, 3.0), p=st.floats(1.5, 4.0))
def test_variational_identity_1d(c, p):
    # eigenvalue = least reflected ergodic cost over symmetric intervals
    f0 = power(c, p)
    lam, r0 = radial_eigen(f0, 1)
    res = optimize.minimize_scalar(lambda r: variational_lambda(f0, r), bounds=(0.05, 10), method="bounded",
                                   options={"xatol": 1e-10})
    assert res.fun == pytest.approx(lam, rel=1e-8)
    assert res.x == pytest.approx(r0, rel=1e-4)


@settings(max_examples=15, deadline=None)
@given(shift=st.floats(0.0, 10.0), n=st.integers(1, 3))
def test_shift_moves_eigenvalue_only(shift, n):
    lam, r0 = radial_eigen(sq, n)
    lam_s, r0_s = radial_eigen(lambda r: sq(r) + shift, n)
    assert lam_s == pytest.approx(lam + shift, rel=1e-10, abs=1e-10)
    assert r0_s == pytest.approx(r0, rel=1e-9)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.2, 4.0), b=st.floats(0.2, 4.0), n=st.integers(1, 2))
def test_monotone_in_cost(a, b, n):
    lo, hi = sorted((a, b))
    assert radial_eigen(power(lo, 2.0), n)[0] <= radial_eigen(power(hi, 2.0), n)[0] + 1e-12


def test_profile_matches_explicit_1d_formula():
    lam, r0 = radial_eigen(sq, 1)
    r = np.linspace(0, 3, 61)
    prof = radial_profile(sq, 1, lam, r0, r)
    inside = r <= r0
    # phi = lam r^2/2 - r^4/12 inside, affine with slope 1 outside
    phi_in = lam * r**2 / 2 - r**4 / 12
    phi_r0 = lam * r0**2 / 2 - r0**4 / 12
    expected = np.where(inside, phi_in, phi_r0 + r - r0)
    np.testing.assert_allclose(prof.phi, expected, atol=1e-12)
    np.testing.assert_allclose(prof.dphi[inside], lam * r[inside] - r[inside] ** 3 / 3, atol=1e-12)
    assert prof.pasting_defect < 1e-10
    assert np.all(prof.dphi <= 1 + 1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_profile_is_c2_at_free_boundary(n):
    lam, r0 = radial_eigen(sq, n)
    prof = radial_profile(sq, n, lam, r0, np.array([r0 * (1 - 1e-6), r0, r0 * (1 + 1e-6)]))
    assert prof.pasting_defect < 1e-9
    np.testing.assert_allclose(prof.dphi, 1.0, atol=1e-5)
    np.testing.assert_allclose(prof.d2phi, 0.0, atol=1e-4)


def test_radial_eigen_is_fast():
    t0 = time.perf_counter()
    for f0, n in [(sq, 1), (sq, 2), (power(1.0, 4.0), 1)]:
        radial_eigen(f0, n)
    assert time.perf_counter() - t0 < 0.5


def test_non_superlinear_profile_fails():
    with pytest.raises(SolverError):
        radial_eigen(lambda r: 0.0 * np.asarray(r), 1, r_search=1e3)
    with pytest.raises(ValidationError):
        radial_eigen(sq, 0)


def test_discounted_profile_converges_to_ergodic():
    lams = [radial_discounted(sq, 1, d, np.array([0.0])).lam for d in (1.0, 0.1, 0.01, 0.001)]
    assert np.all(np.diff(lams) > 0)
    assert abs(lams[-1] - LAMBDA_1D) < 2e-3
    sol = radial_discounted(sq, 2, 1e-3, np.array([0.0, 1.0]))
    assert abs(sol.lam - LAMBDA_2D) < 2e-3


def test_discounted_profile_touches_slope_one():
    r = np.linspace(0, 4, 401)
    sol = radial_discounted(sq, 1, 1.0, r)
    assert sol.dphi.max() == pytest.approx(1.0, abs=1e-6)
    assert sol.pasting_defect < 1e-6
    # equation inside: delta phi - phi'' = f
    inside = (r > 0.05) & (r < sol.r0 - 0.05)
    np.testing.assert_allclose(sol.phi[inside] - sol.d2phi[inside], r[inside] ** 2, atol=1e-8)
    with pytest.raises(ValidationError):
        radial_discounted(sq, 1, 0.0, r)
