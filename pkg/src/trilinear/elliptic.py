"""Jacobi elliptic functions and the closed-form second-order solution.

The second-order (Gaussian) closure reduces to the flow

    d alpha / d tau = -sinh(2 eta) / 2,    d eta / d tau = alpha,

with alpha(0) = alpha0 and eta(0) = 0.  Its solution is written with Jacobi
functions of real argument and parameter mu = alpha0^2 / (alpha0^2 + 1):

    alpha(tau)     = alpha0 * cd(v | mu)
    sinh(eta(tau)) = alpha0 / sqrt(alpha0^2 + 1) * sd(v | mu)

with v = tau * sqrt(alpha0^2 + 1).  This is the imaginary-argument form
alpha0 * dn(i tau alpha0 | -1/alpha0^2) rewritten through Jacobi's imaginary
transformation and the negative-parameter transformation, so that every
kernel evaluation stays in real arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

_EPS = 1e-16


def _agm_sequence(m: float, m1: float) -> tuple[list[float], list[float]]:
    a, b, c = 1.0, math.sqrt(m1), math.sqrt(m)
    a_list, c_list = [a], [c]
    while abs(c) > _EPS * a and len(a_list) < 64:
        a, b, c = 0.5 * (a + b), math.sqrt(a * b), 0.5 * (a - b)
        a_list.append(a)
        c_list.append(c)
    return a_list, c_list


def _jacobi_unit(u: np.ndarray, m: float, m1: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """sn, cn, dn for 0 < m < 1 by descending Landen (AGM) recursion."""
    a_list, c_list = _agm_sequence(m, m1)
    n = len(a_list) - 1
    phi = (2.0**n) * a_list[n] * u
    for k in range(n, 0, -1):
        phi = 0.5 * (phi + np.arcsin(np.clip(c_list[k] / a_list[k] * np.sin(phi), -1.0, 1.0)))
    sn = np.sin(phi)
    cn = np.cos(phi)
    # dn^2 = cn^2 + (1 - m) sn^2 has no cancellation, even at u = K with m -> 1
    dn = np.sqrt(cn**2 + m1 * sn**2)
    return sn, cn, dn


def jacobi_elliptic(u, m: float, m1: float | None = None):
    """Jacobi sn, cn, dn of real argument ``u`` and real parameter ``m``.

    ``0 <= m <= 1`` uses the arithmetic-geometric-mean recursion.  Negative
    parameters use the transformation to m / (m - 1), and ``m > 1`` the
    reciprocal-parameter transformation.  ``u`` may be a scalar or array.
    ``m1`` optionally supplies the complementary parameter 1 - m when it is
    known more accurately than the rounded difference.
    """
    u_arr = np.asarray(u, dtype=float)
    m = float(m)
    m1 = 1.0 - m if m1 is None else float(m1)
    if m < 0.0:
        # sn(u|m) = sd(v|mu)/sqrt(1-m), cn = cd(v|mu), dn = nd(v|mu)
        scale = math.sqrt(m1)
        mu = -m / m1
        sn, cn, dn = jacobi_elliptic(u_arr * scale, mu, 1.0 / m1)
        out = (sn / (dn * scale), cn / dn, 1.0 / dn)
    elif m > 1.0:
        root = math.sqrt(m)
        sn, cn, dn = jacobi_elliptic(u_arr * root, 1.0 / m)
        out = (sn / root, dn, cn)
    elif m == 0.0:
        out = (np.sin(u_arr), np.cos(u_arr), np.ones_like(u_arr))
    elif m == 1.0:
        sech = 1.0 / np.cosh(u_arr)
        out = (np.tanh(u_arr), sech, sech.copy())
    else:
        out = _jacobi_unit(u_arr, m, m1)
    if np.ndim(u) == 0:
        return tuple(float(x) for x in out)
    return out


def ellipk(m: float, m1: float | None = None) -> float:
    """Complete elliptic integral of the first kind K(m) for m < 1."""
    if m >= 1.0:
        if m == 1.0:
            return math.inf
        raise ValueError("K(m) is complex for m > 1; use real_ellipk")
    a, b = 1.0, math.sqrt(1.0 - m if m1 is None else m1)
    for _ in range(64):
        if abs(a - b) <= _EPS * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return math.pi / (2.0 * a)


def real_ellipk(m: float) -> float:
    """Re K(m) for any real m; for m > 1 it equals K(1/m)/sqrt(m)."""
    if m > 1.0:
        return ellipk(1.0 / m) / math.sqrt(m)
    return ellipk(m)


class PeriodError(ValueError):
    """Raised for times beyond the first period of the second-order solution."""


@dataclass(frozen=True)
class SecondOrderSolution:
    """Closed-form solution of the second-order closure for pump amplitude alpha0."""

    alpha0: float

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")

    @property
    def parameter(self) -> float:
        a2 = self.alpha0**2
        return a2 / (a2 + 1.0)

    @property
    def complementary(self) -> float:
        return 1.0 / (self.alpha0**2 + 1.0)

    @property
    def frequency(self) -> float:
        return math.sqrt(self.alpha0**2 + 1.0)

    @property
    def tau_max(self) -> float:
        """Zero of alpha(tau), where sinh^2(eta) peaks at alpha0^2."""
        return ellipk(self.parameter, self.complementary) / self.frequency

    @property
    def period(self) -> float:
        return 4.0 * self.tau_max

    def eta_alpha(self, tau):
        """(eta, alpha) at ``tau``; scalar or array input."""
        tau_arr = np.asarray(tau, dtype=float)
        if np.any(tau_arr < 0) or np.any(tau_arr > self.period * (1 + 1e-12)):
            raise PeriodError(f"tau must lie in [0, {self.period:.6g}] (first period)")
        sn, cn, dn = jacobi_elliptic(tau_arr * self.frequency, self.parameter, self.complementary)
        alpha = self.alpha0 * cn / dn
        sinh_eta = self.alpha0 / self.frequency * sn / dn
        eta = np.arcsinh(sinh_eta)
        if np.ndim(tau) == 0:
            return float(eta), float(alpha)
        return eta, alpha

    def signal_population(self, tau):
        eta, _ = self.eta_alpha(tau)
        return np.sinh(eta) ** 2

    def pair_amplitude(self, tau):
        """<a_s a_i> = sinh(2 eta)/2."""
        eta, _ = self.eta_alpha(tau)
        return 0.5 * np.sinh(2 * eta)


def eta_alpha(sol: SecondOrderSolution, tau):
    return sol.eta_alpha(tau)


def depletion_time(alpha0: float, delta: float) -> tuple[float, float]:
    """(approximate, exact) time at which alpha^2 has dropped by the fraction delta.

    The approximation is asinh(sqrt(delta) alpha0)/alpha0; the exact value is
    the root of sinh^2(eta) = delta alpha0^2 on (0, tau_max).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    approx = math.asinh(math.sqrt(delta) * alpha0) / alpha0
    sol = SecondOrderSolution(alpha0)
    target = delta * alpha0**2
    exact = brentq(lambda t: sol.signal_population(t) - target, 0.0, sol.tau_max, xtol=1e-14, rtol=1e-15)
    return approx, exact


def tau_max(alpha0: float) -> tuple[float, float]:
    """(exact, approximate) first zero of alpha(tau).

    exact = Re K(1 + 1/alpha0^2)/alpha0; approx = ln(4 alpha0)/alpha0.
    """
    exact = real_ellipk(1.0 + 1.0 / alpha0**2) / alpha0
    return exact, math.log(4.0 * alpha0) / alpha0


@dataclass(frozen=True)
class ThresholdTimes:
    sqz: float
    ent: float
    sqz_asymptote: float
    ent_asymptote: float


def _smallest_positive_root(coeffs) -> float:
    roots = np.roots(coeffs)
    real = [r.real for r in roots if abs(r.imag) <= 1e-9 * max(1.0, abs(r)) and r.real > 0]
    if not real:
        raise ValueError("no positive real root")
    return min(real)


def threshold_times(alpha0: float, delta: float = 0.01) -> ThresholdTimes:
    """Squeezing and purity threshold times from the short-time series.

    tau_sqz solves (a^4/45 - a^2/18) t^6 + (a^2/6) t^4 - delta/2 = 0 and
    tau_ent solves (4 a^6/45 - 2 a^4/9) t^8 + (2 a^4/9) t^6 - delta = 0,
    with a = alpha0.  Both are cubic/quartic in s = t^2.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    a2 = alpha0**2
    s_sqz = _smallest_positive_root([a2**2 / 45 - a2 / 18, a2 / 6, 0.0, -delta / 2])
    s_ent = _smallest_positive_root([4 * a2**3 / 45 - 2 * a2**2 / 9, 2 * a2**2 / 9, 0.0, 0.0, -delta])
    return ThresholdTimes(
        sqz=math.sqrt(s_sqz),
        ent=math.sqrt(s_ent),
        sqz_asymptote=(180 * delta) ** (1 / 6) / math.sqrt(2) * alpha0 ** (-2 / 3),
        ent_asymptote=1.5**0.25 * (5 * delta) ** 0.125 * alpha0 ** (-0.75),
    )
