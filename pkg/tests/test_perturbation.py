import json
import math
from pathlib import Path

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from trilinear.elliptic import SecondOrderSolution
from trilinear.experiments import exact_series
from trilinear.perturbation import (
    LEADING_POWER,
    SERIES,
    FitError,
    eval_series,
    powerlaw_fit,
    residual_scaling,
    series_coefficient,
    thermal_purity,
)

GOLDEN = json.loads((Path(__file__).parent / "golden" / "series.json").read_text())
a, t = sympy.symbols("a t")
# golden name -> (stored name, sign)
STORED = {
    "population": ("population_correction", -1),
    "var_P_p": ("var_P_p", 1),
    "g2_p": ("g2_p", 1),
    "g2_s": ("g2_s", 1),
    "purity": ("purity", 1),
}


def _stored_poly(name: str) -> sympy.Expr:
    return sum(
        sympy.Rational(c.numerator, c.denominator) * a**j * t**k
        for k, coeffs in SERIES[name].items()
        for j, c in coeffs.items()
    )


@pytest.mark.parametrize("golden_name", sorted(STORED))
def test_golden_double_entry_agrees(golden_name):
    entry = GOLDEN[golden_name]
    expr = sympy.sympify(entry["expression"])
    by_power = sum(sympy.sympify(c) * t ** int(k) for k, c in entry["coefficients"].items())
    assert sympy.expand(expr - by_power) == 0


@pytest.mark.parametrize("golden_name", sorted(STORED))
def test_stored_series_match_golden(golden_name):
    name, sign = STORED[golden_name]
    expr = sympy.sympify(GOLDEN[golden_name]["expression"])
    assert sympy.expand(_stored_poly(name) - sign * expr) == 0


def test_eta_series_from_reduced_flow():
    # eta'' = -sinh(2 eta)/2 with eta(0) = 0, eta'(0) = a, solved order by order
    coeffs = sympy.symbols("c3 c5 c7")
    eta = a * t + coeffs[0] * t**3 + coeffs[1] * t**5 + coeffs[2] * t**7
    residual = sympy.diff(eta, t, 2) + sympy.series(sympy.sinh(2 * eta) / 2, t, 0, 8).removeO()
    sol = sympy.solve([sympy.expand(residual).coeff(t, k) for k in (1, 3, 5)], coeffs, dict=True)[0]
    assert sympy.expand(_stored_poly("eta") - eta.subs(sol)) == 0


@pytest.mark.parametrize("alpha0", [3.0, 10.0])
def test_eta_series_matches_closed_form(alpha0):
    sol = SecondOrderSolution(alpha0)
    taus = np.array([0.002, 0.005, 0.01]) / math.sqrt(alpha0)
    eta, _ = sol.eta_alpha(taus)
    series = eval_series("eta", alpha0, taus, order=7)
    np.testing.assert_allclose(series, eta, rtol=1e-12)


def test_population_series_against_exact_simulation():
    alpha0 = 10.0
    taus = np.array([0.01, 0.015, 0.02])
    ex = exact_series(alpha0, taus)
    resid = ex["N_s"] - SecondOrderSolution(alpha0).signal_population(taus)
    np.testing.assert_allclose(resid, eval_series("population_correction", alpha0, taus), rtol=0.02)


def test_variance_series_against_exact_simulation():
    alpha0 = 10.0
    taus = np.array([0.01, 0.02, 0.03])
    ex = exact_series(alpha0, taus)
    np.testing.assert_allclose(ex["var_P_p"] - 0.5, eval_series("var_P_p", alpha0, taus) - 0.5, rtol=0.01)


def test_leading_powers_and_lookup():
    for name, power in LEADING_POWER.items():
        nonconst = [k for k in SERIES[name] if k > 0]
        assert min(nonconst) == power
    assert series_coefficient("var_P_p", 4, 10.0) == pytest.approx(-100 / 6)
    assert series_coefficient("var_P_p", 5, 10.0) == 0.0
    with pytest.raises(KeyError):
        eval_series("nope", 1.0, 0.1)


def test_thermal_purity():
    assert float(thermal_purity(0.0)) == 1.0
    r = 0.7
    # purity of a thermal state with mean n = sinh^2 r is 1/(2n+1)
    assert float(thermal_purity(r)) == pytest.approx(1 / (2 * math.sinh(r) ** 2 + 1))


def test_powerlaw_fit_exact():
    x = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    fit = powerlaw_fit(x, 3 * x**2)
    assert fit.exponent == pytest.approx(2.0, abs=1e-12)
    assert fit.prefactor == pytest.approx(3.0, rel=1e-12)
    exponent, prefactor, stderr = fit
    assert stderr < 1e-12


def test_powerlaw_fit_noisy():
    rng = np.random.default_rng(0)
    x = np.geomspace(1, 100, 20)
    y = x ** (-2 / 3) * (1 + 0.01 * rng.normal(size=x.size))
    fit = powerlaw_fit(x, y)
    assert fit.exponent == pytest.approx(-0.667, abs=0.02)


def test_powerlaw_fit_errors():
    with pytest.raises(FitError):
        powerlaw_fit([1.0], [1.0])
    with pytest.raises(FitError):
        powerlaw_fit([1, 2, 3, 4], [1, -2, 3, 4])


@settings(max_examples=30, deadline=None)
@given(st.floats(-4, 4), st.floats(0.1, 10))
def test_powerlaw_fit_recovers_exponent(p, c):
    x = np.geomspace(0.1, 10, 8)
    fit = powerlaw_fit(x, c * x**p)
    assert fit.exponent == pytest.approx(p, abs=1e-9)


def test_residual_scaling():
    taus = np.geomspace(0.1, 1.0, 12)
    rs = residual_scaling(taus, 2 + 5 * taus**6, np.full_like(taus, 2.0), expected=6)
    assert rs.slope == pytest.approx(6.0, abs=1e-6)
    assert rs.decades == pytest.approx(1.0)
    assert rs.sufficient_range
