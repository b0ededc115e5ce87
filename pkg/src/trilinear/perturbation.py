"""Short-time perturbation series and log-log residual fits.

Each series is a polynomial in tau whose coefficients are polynomials in
alpha0, stored exactly as ``{tau_power: {alpha0_power: Fraction}}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction as F
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import linregress

SeriesCoeffs = Mapping[int, Mapping[int, F]]

SERIES: dict[str, SeriesCoeffs] = {
    # <N_s> - sinh^2(eta) (= alpha^2 - <N_p>)
    "population_correction": {
        6: {4: F(-7, 45)},
        8: {6: F(-48, 630), 4: F(77, 630)},
    },
    # variance of the pump momentum quadrature
    "var_P_p": {
        0: {0: F(1, 2)},
        4: {2: F(-1, 6)},
        6: {2: F(1, 18), 4: F(-1, 45)},
        8: {6: F(-4, 2520), 4: F(144, 2520), 2: F(-19, 2520)},
    },
    "g2_p": {
        0: {0: F(1)},
        4: {0: F(1, 3)},
        6: {2: F(22, 45), 0: F(10, 45)},
        8: {4: F(114, 630), 2: F(-128, 630), 0: F(97, 630)},
    },
    "g2_s": {
        0: {0: F(2)},
        2: {0: F(-2, 3)},
        4: {0: F(45, 810), 2: F(-432, 810)},
        6: {4: F(198, 405), 2: F(-459, 405), 0: F(69, 405)},
        8: {6: F(-888, 4050), 4: F(1935, 4050), 2: F(-2838, 4050), 0: F(415, 4050)},
    },
    # pump purity Tr rho_p^2
    "purity": {
        0: {0: F(1)},
        6: {4: F(-2, 9)},
        8: {4: F(2, 9), 6: F(-4, 45)},
    },
    # squeezing parameter of the second-order solution
    "eta": {
        1: {1: F(1)},
        3: {1: F(-1, 6)},
        5: {3: F(-4, 120), 1: F(1, 120)},
        7: {5: F(-16, 5040), 3: F(44, 5040), 1: F(-1, 5040)},
    },
}

LEADING_POWER = {
    "population_correction": 6,
    "var_P_p": 4,
    "g2_p": 4,
    "g2_s": 2,
    "purity": 6,
    "eta": 1,
}


def series_coefficient(name: str, tau_power: int, alpha0: float) -> float:
    coeffs = _lookup(name).get(tau_power, {})
    return float(sum(float(c) * alpha0**j for j, c in coeffs.items()))


def _lookup(name: str) -> SeriesCoeffs:
    try:
        return SERIES[name]
    except KeyError:
        raise KeyError(f"unknown series {name!r}; known: {sorted(SERIES)}") from None


def eval_series(name: str, alpha0: float, tau, order: int = 8):
    """Truncated series value through tau**order (scalar or array ``tau``)."""
    coeffs = _lookup(name)
    t = np.asarray(tau, dtype=float)
    out = np.zeros_like(t)
    for k in sorted(coeffs):
        if k <= order:
            out = out + series_coefficient(name, k, alpha0) * t**k
    return float(out) if np.ndim(tau) == 0 else out


def thermal_purity(r):
    """Purity sech(2r) of one half of a two-mode squeezed vacuum."""
    return 1.0 / np.cosh(2.0 * np.asarray(r, dtype=float))


# --- fits -----------------------------------------------------------------

class FitError(ValueError):
    """Input unsuitable for a log-log fit."""


@dataclass(frozen=True)
class PowerLaw:
    exponent: float
    prefactor: float
    stderr: float

    def __iter__(self):
        return iter((self.exponent, self.prefactor, self.stderr))


def powerlaw_fit(x: Sequence[float], y: Sequence[float]) -> PowerLaw:
    """Least squares on (log x, log y): y ~ prefactor * x**exponent."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 4:
        raise FitError("need at least 4 paired points")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise FitError("power-law fit needs positive finite data")
    res = linregress(np.log(x), np.log(y))
    return PowerLaw(float(res.slope), float(math.exp(res.intercept)), float(res.stderr))


@dataclass(frozen=True)
class ResidualScaling:
    slope: float
    stderr: float
    expected: int
    decades: float
    sufficient_range: bool


def residual_scaling(
    taus: Sequence[float],
    exact: Sequence[float],
    analytic: Sequence[float],
    expected: int,
    min_decades: float = 0.5,
) -> ResidualScaling:
    """Log-log slope of |exact - analytic| against tau.

    Points where the residual is exactly zero are dropped.  ``sufficient_range``
    is False if fewer than ``min_decades`` of tau remain.
    """
    t = np.asarray(taus, dtype=float)
    r = np.abs(np.asarray(exact, dtype=float) - np.asarray(analytic, dtype=float))
    keep = (t > 0) & (r > 0) & np.isfinite(r)
    t, r = t[keep], r[keep]
    decades = float(np.log10(t.max() / t.min())) if t.size >= 2 else 0.0
    fit = powerlaw_fit(t, r)
    return ResidualScaling(fit.exponent, fit.stderr, expected, decades, decades >= min_decades)
