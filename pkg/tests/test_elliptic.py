import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trilinear.elliptic import (
    PeriodError,
    SecondOrderSolution,
    depletion_time,
    ellipk,
    jacobi_elliptic,
    real_ellipk,
    tau_max,
    threshold_times,
)
from trilinear.ode import integrate


def _mp_jacobi(u, m):
    vals = [mpmath.mpc(mpmath.ellipfun(k, u, m=m)) for k in ("sn", "cn", "dn")]
    assert all(abs(v.imag) < 1e-14 for v in vals)
    return tuple(float(v.real) for v in vals)


def test_identities_at_zero_and_limits():
    assert jacobi_elliptic(0.0, 0.37) == (0.0, 1.0, 1.0)
    u = np.linspace(-3, 3, 13)
    sn, cn, dn = jacobi_elliptic(u, 0.0)
    np.testing.assert_allclose(sn, np.sin(u), atol=1e-15)
    np.testing.assert_allclose(cn, np.cos(u), atol=1e-15)
    np.testing.assert_allclose(dn, 1.0)
    sn, cn, dn = jacobi_elliptic(u, 1.0)
    np.testing.assert_allclose(sn, np.tanh(u), atol=1e-15)
    np.testing.assert_allclose(cn, 1 / np.cosh(u), atol=1e-15)
    np.testing.assert_allclose(dn, 1 / np.cosh(u), atol=1e-15)


@settings(max_examples=80, deadline=None)
@given(st.floats(-8.0, 8.0), st.floats(-20.0, 20.0))
def test_against_mpmath(u, m):
    got = jacobi_elliptic(u, m)
    ref = _mp_jacobi(u, m)
    np.testing.assert_allclose(got, ref, rtol=1e-11, atol=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.floats(-10.0, 10.0), st.floats(0.0, 1.0))
def test_pythagorean_identities(u, m):
    sn, cn, dn = jacobi_elliptic(u, m)
    assert sn**2 + cn**2 == pytest.approx(1.0, abs=1e-12)
    assert dn**2 + m * sn**2 == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("m", [0.0, 0.3, 0.9, 1 - 1e-8, -4.0])
def test_ellipk_against_mpmath(m):
    assert ellipk(m) == pytest.approx(float(mpmath.ellipk(m)), rel=1e-13)


def test_real_ellipk_reciprocal_modulus():
    m = 1.0 + 1.0 / 100.0
    assert real_ellipk(m) == pytest.approx(float(mpmath.re(mpmath.ellipk(m))), rel=1e-12)


@pytest.mark.parametrize("alpha0", [1.0, 5.0, 10.0, 40.0])
def test_closed_form_matches_ode(alpha0):
    sol = SecondOrderSolution(alpha0)
    taus = np.linspace(0.0, 3 * sol.tau_max, 121)

    def rhs(t, y):
        return np.array([-0.5 * math.sinh(2 * y[1]), y[0]])

    traj = integrate(rhs, np.array([alpha0, 0.0]), taus, rtol=1e-13, atol=1e-14)
    eta, alpha = sol.eta_alpha(taus)
    # the flow is stiff near tau_max, so compare on the absolute scale of alpha0
    np.testing.assert_allclose(alpha, traj.states[0], atol=1e-9 * alpha0)
    np.testing.assert_allclose(eta, traj.states[1], atol=1e-9 * max(1.0, math.log(alpha0)))


@pytest.mark.parametrize("alpha0", [2.0, 10.0, 31.6])
def test_conservation_and_monotonicity(alpha0):
    sol = SecondOrderSolution(alpha0)
    taus = np.linspace(0.0, sol.tau_max, 400)
    eta, alpha = sol.eta_alpha(taus)
    np.testing.assert_allclose(alpha**2 + np.sinh(eta) ** 2, alpha0**2, rtol=1e-12)
    assert np.all(np.diff(eta) > 0)
    assert np.all(np.diff(alpha) < 0)
    assert abs(sol.eta_alpha(sol.tau_max)[1]) < 1e-9


def test_initial_values_and_series():
    sol = SecondOrderSolution(10.0)
    assert sol.eta_alpha(0.0) == (0.0, 10.0)
    eta, _ = sol.eta_alpha(0.01)
    assert eta == pytest.approx(0.0999983, abs=5e-8)


def test_period_guard():
    sol = SecondOrderSolution(10.0)
    with pytest.raises(PeriodError):
        sol.eta_alpha(sol.period * 1.01)
    with pytest.raises(PeriodError):
        sol.eta_alpha(-0.1)


def test_tau_max_exact_and_estimate():
    exact, approx = tau_max(math.sqrt(1e5))
    assert approx == pytest.approx(0.02259, abs=5e-6)
    assert exact == pytest.approx(SecondOrderSolution(math.sqrt(1e5)).tau_max, rel=1e-12)
    for a0 in (10.0, 30.0, 100.0):
        exact, approx = tau_max(a0)
        assert abs(exact / approx - 1) < 2.0 / a0**2 * math.log(4 * a0) + 1e-12


def test_depletion_time():
    approx, exact = depletion_time(math.sqrt(1e5), 0.01)
    assert approx == pytest.approx(0.013115, abs=5e-7)
    assert exact > approx
    for a2 in (25, 100, 400, 1600):
        approx, exact = depletion_time(math.sqrt(a2), 0.1)
        assert abs(approx - exact) / exact < 0.02
    # monotone in delta, and tau_d ~ sqrt(delta) when sqrt(delta) alpha0 << 1
    assert depletion_time(10.0, 0.01)[0] < depletion_time(10.0, 0.1)[0]
    assert depletion_time(10.0, 1e-8)[0] == pytest.approx(1e-4, rel=1e-6)
    with pytest.raises(ValueError):
        depletion_time(10.0, 1.5)


def test_threshold_roots_and_asymptotes():
    th = threshold_times(10.0, 0.01)
    # residuals of the defining polynomials
    a2 = 100.0
    s = th.sqz**2
    assert (a2**2 / 45 - a2 / 18) * s**3 + a2 / 6 * s**2 - 0.005 == pytest.approx(0.0, abs=1e-14)
    s = th.ent**2
    assert (4 * a2**3 / 45 - 2 * a2**2 / 9) * s**4 + 2 * a2**2 / 9 * s**3 - 0.01 == pytest.approx(0.0, abs=1e-14)
    # root/asymptote ratios approach 1 slowly; values frozen from the polynomial roots
    assert th.sqz / th.sqz_asymptote == pytest.approx(0.748, abs=2e-3)
    assert th.ent / th.ent_asymptote == pytest.approx(0.882, abs=2e-3)
    far = threshold_times(math.sqrt(1e5), 0.01)
    assert far.ent / far.ent_asymptote == pytest.approx(0.972, abs=2e-3)


def test_asymptote_exponents():
    a0 = np.array([1e3, 1e4])
    sqz = [threshold_times(a, 0.01).sqz_asymptote for a in a0]
    ent = [threshold_times(a, 0.01).ent_asymptote for a in a0]
    assert math.log(sqz[1] / sqz[0]) / math.log(10) == pytest.approx(-2 / 3, abs=1e-12)
    assert math.log(ent[1] / ent[0]) / math.log(10) == pytest.approx(-3 / 4, abs=1e-12)
