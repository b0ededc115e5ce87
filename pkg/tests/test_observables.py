import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from trilinear.algebra import Monomial
from trilinear.fock import SectorEnsemble, apply_gauge
from trilinear.observables import (
    OutOfGridError,
    covariance,
    g2,
    local_maxima,
    moment,
    parity_split,
    photon_statistics,
    purity,
    quadrature_variances,
    reduced_density,
    series_table,
    standard_series,
)
from trilinear.perturbation import thermal_purity


class SparseEmbedding:
    """Full three-mode vector of a SuperposedState with sparse ladder operators."""

    def __init__(self, state):
        rows, cols = state.beta.shape
        self.dims = (rows, cols, cols)
        psi = np.zeros(rows * cols * cols, dtype=complex)
        for m in range(rows):
            for k in range(cols):
                psi[(m * cols + k) * cols + k] = state.beta[m, k]
        self.psi = psi
        eye = [sp.identity(d, format="csr") for d in self.dims]
        self.ops = []
        for j, d in enumerate(self.dims):
            a = sp.diags(np.sqrt(np.arange(1, d, dtype=float)), 1, format="csr")
            parts = [a if i == j else eye[i] for i in range(3)]
            self.ops.append(sp.kron(sp.kron(parts[0], parts[1]), parts[2], format="csr"))

    def expect(self, m: Monomial) -> complex:
        v = self.psi
        for a, (n_dag, n_ann) in reversed(list(zip(self.ops, ((m.c, m.d), (m.e, m.f), (m.g, m.h))))):
            for _ in range(n_ann):
                v = a @ v
            for _ in range(n_dag):
                v = a.T @ v
        return complex(np.vdot(self.psi, v))


@pytest.fixture(scope="module")
def small_states():
    ens = SectorEnsemble(2.0, pad=8)
    return [apply_gauge(s, 0.3, 0.5) for s in ens.states([0.0, 0.25, 0.6, 1.3])]


powers = st.integers(0, 2)


@settings(max_examples=40, deadline=None)
@given(st.builds(Monomial, powers, powers, powers, powers, powers, powers), st.integers(0, 3))
def test_moment_matches_sparse_operator_oracle(small_states, m, which):
    state = small_states[which]
    oracle = SparseEmbedding(state).expect(m)
    assert moment(state, m) == pytest.approx(oracle, abs=1e-10)


def test_selection_rule():
    state = next(iter(SectorEnsemble(3.0).states([0.3])))
    assert moment(state, (0, 0, 1, 0, 0, 0)) == 0
    assert moment(state, (0, 1, 0, 1, 0, 0)) == 0
    assert moment(state, (0, 0, 2, 1, 0, 0)) == 0
    assert abs(moment(state, (0, 0, 0, 1, 0, 1))) > 0.1


def test_out_of_grid_detection():
    state = next(iter(SectorEnsemble(3.0, cutoffs=(0, 4), pad=0).states([0.5])))
    with pytest.raises(OutOfGridError):
        moment(state, (0, 0, 3, 0, 3, 0))
    with pytest.raises(ValueError):
        moment(state, (-1, 0, 0, 0, 0, 0))


def test_initial_coherent_state_series():
    state = next(iter(SectorEnsemble(5.0).states([0.0])))
    row = standard_series(state)
    assert row["N_p"] == pytest.approx(25.0, rel=1e-12)
    assert row["re_a_p"] == pytest.approx(5.0, rel=1e-12)
    assert row["var_X_p"] == pytest.approx(0.5, abs=1e-10)
    assert row["var_P_p"] == pytest.approx(0.5, abs=1e-10)
    assert row["g2_p"] == pytest.approx(1.0, abs=1e-12)
    assert math.isnan(row["g2_s"])


def test_quadrature_and_g2_helpers():
    # vacuum: a = 0, a^2 = 0, n = 0
    assert quadrature_variances(0j, 0j, 0.0) == (0.5, 0.5)
    # squeezed vacuum with real r: <a^2> = -sinh r cosh r, n = sinh^2 r
    r = 0.4
    vx, vp = quadrature_variances(0j, complex(-math.sinh(r) * math.cosh(r)), math.sinh(r) ** 2)
    assert vx == pytest.approx(0.5 * math.exp(-2 * r))
    assert vp == pytest.approx(0.5 * math.exp(2 * r))
    assert math.isnan(g2(1.0, 1e-15))
    assert g2(2.0, 1.0) == 2.0


def test_early_time_parametric_limit():
    # small tau: the pair looks like a two-mode squeezed vacuum with r = alpha0 tau
    alpha0, tau = 10.0, 0.005
    state = next(iter(SectorEnsemble(alpha0).states([tau])))
    row = standard_series(state)
    assert row["N_s"] == pytest.approx(math.sinh(alpha0 * tau) ** 2, rel=1e-4)
    assert row["g2_s"] == pytest.approx(2.0, abs=1e-3)
    assert purity(state, "signal") == pytest.approx(float(thermal_purity(alpha0 * tau)), rel=1e-4)


def test_covariance_structure():
    for state in SectorEnsemble(4.0).states([0.1, 0.4]):
        cov = covariance(state)
        v = cov.matrix
        np.testing.assert_allclose(v, v.T, atol=1e-12)
        np.testing.assert_allclose(v[:2, 2:], 0.0, atol=1e-10)
        # signal and idler are symmetric
        np.testing.assert_allclose(v[2:4, 2:4], v[4:6, 4:6], atol=1e-10)
        assert cov.symplectic_check() > -1e-10
        assert cov.mean[0] == pytest.approx(math.sqrt(2) * moment(state, (0, 1, 0, 0, 0, 0)).real)


def test_covariance_of_coherent_state():
    state = next(iter(SectorEnsemble(3.0).states([0.0])))
    np.testing.assert_allclose(covariance(state).matrix, 0.5 * np.eye(6), atol=1e-10)


def test_reduced_densities_and_purity(small_states):
    for state in small_states:
        rho = reduced_density(state, "pump")
        q = reduced_density(state, "signal")
        assert rho.trace == pytest.approx(1.0, abs=1e-12)
        assert q.trace == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(rho.matrix, rho.matrix.conj().T, atol=1e-14)
        p_pump = purity(state)
        assert p_pump == pytest.approx(purity(rho), abs=1e-12)
        assert 0 < p_pump <= 1 + 1e-12
        # Tr rho_si^2 contains the diagonal sum that makes up the signal purity
        assert purity(q) <= p_pump + 1e-12
    with pytest.raises(ValueError):
        reduced_density(small_states[0], "bogus")


def test_pump_purity_from_dense_partial_trace():
    state = next(iter(SectorEnsemble(2.0, pad=4).states([0.5])))
    rows, cols = state.beta.shape
    psi = np.zeros((rows, cols * cols), dtype=complex)
    for k in range(cols):
        psi[:, k * cols + k] = state.beta[:, k]
    rho = psi @ psi.conj().T
    assert purity(state) == pytest.approx(float(np.real(np.trace(rho @ rho))), abs=1e-12)


def test_photon_statistics():
    state = next(iter(SectorEnsemble(3.0).states([0.0, 0.3])))
    pp = photon_statistics(state, "pump")
    assert pp.sum() == pytest.approx(1.0)
    from scipy.stats import poisson

    np.testing.assert_allclose(pp[:40], poisson.pmf(np.arange(40), 9.0), atol=1e-14)
    even, odd = parity_split(pp)
    assert even.sum() + odd.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        photon_statistics(state, "x")


def test_series_table_columns():
    table = series_table(SectorEnsemble(3.0).states([0.0, 0.1, 0.2]))
    np.testing.assert_allclose(table["tau"], [0.0, 0.1, 0.2])
    np.testing.assert_allclose(table["N_p"] + table["N_s"], 9.0, rtol=1e-12)


def test_local_maxima():
    t = np.linspace(0, 4 * np.pi, 401)
    peaks = local_maxima(t, np.sin(t + 0.1), count=2)
    np.testing.assert_allclose(peaks, [np.pi / 2 - 0.1, 5 * np.pi / 2 - 0.1], atol=1e-5)
    assert local_maxima(t, t) == []


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 0.6))
def test_invariants_along_trajectory(tau):
    state = next(iter(SectorEnsemble(5.0).states([tau])))
    assert state.norm == pytest.approx(1.0, abs=1e-10)
    row = standard_series(state)
    assert row["N_p"] + row["N_s"] == pytest.approx(25.0, rel=1e-10)
    # Cauchy-Schwarz and uncertainty
    assert row["var_X_p"] * row["var_P_p"] >= 0.25 - 1e-10
