from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trilinear.algebra import (
    GENERATOR,
    IDENTITY,
    N_P,
    N_S,
    Monomial,
    OperatorPoly,
    commutator,
    heisenberg_rhs,
    normal_order_product,
    parse_monomial,
)

small = st.integers(min_value=0, max_value=2)
monomials = st.builds(Monomial, small, small, small, small, small, small)


def test_single_mode_commutator():
    a = OperatorPoly.from_monomial(Monomial(f=1))
    ad = OperatorPoly.from_monomial(Monomial(e=1))
    assert commutator(a, ad) == OperatorPoly.from_monomial(IDENTITY)


def test_annihilator_times_creator_squared():
    # a (a^dag)^2 = (a^dag)^2 a + 2 a^dag
    prod = normal_order_product(Monomial(d=1), Monomial(c=2))
    assert prod == OperatorPoly({Monomial(c=2, d=1): 1, Monomial(c=1): 2})


def test_generator_is_anti_hermitian():
    assert GENERATOR.dagger() == -GENERATOR


def test_conserved_quantities_commute_with_generator():
    n_p = OperatorPoly.from_monomial(N_P)
    n_s = OperatorPoly.from_monomial(N_S)
    n_i = OperatorPoly.from_monomial(Monomial(g=1, h=1))
    assert len(commutator(n_p + n_s, GENERATOR)) == 0
    assert len(commutator(n_p + n_i, GENERATOR)) == 0
    assert len(commutator(n_s - n_i, GENERATOR)) == 0


def test_heisenberg_rhs_first_order():
    # d<a_p>/dtau = -<a_s a_i>, d<a_s>/dtau = <a_p a_i^dag>
    assert heisenberg_rhs(Monomial(d=1)) == OperatorPoly({Monomial(f=1, h=1): -1})
    assert heisenberg_rhs(Monomial(f=1)) == OperatorPoly({Monomial(d=1, g=1): 1})


def test_exact_coefficients_stay_fractions():
    p = OperatorPoly({Monomial(d=1): Fraction(1, 3)}) * OperatorPoly({Monomial(c=1): Fraction(3, 2)})
    assert all(isinstance(v, Fraction) for v in p.terms.values())
    assert p.terms[IDENTITY] == Fraction(1, 2)


@pytest.mark.parametrize("text", ["ap' ap", "as' as^2 ai'", "ap^3 ai", "1"])
def test_label_roundtrip(text):
    assert parse_monomial(text).label() == text


def test_parse_rejects_anti_normal_order():
    with pytest.raises(ValueError):
        parse_monomial("as as'")
    with pytest.raises(ValueError):
        parse_monomial("bq")


@settings(max_examples=60, deadline=None)
@given(monomials, monomials)
def test_product_matches_dense_matrices(dense_modes, x, y):
    """Normal-ordered products agree with dense ladder matrices away from the cutoff."""
    lhs = dense_modes.poly(normal_order_product(x, y))
    rhs = dense_modes.monomial(x) @ dense_modes.monomial(y)
    idx = dense_modes.low_block(margin=2)
    # columns in the low block only see rows that were not truncated by the product
    np.testing.assert_allclose(lhs[:, idx], rhs[:, idx], atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(monomials)
def test_dagger_is_involution_and_matches_transpose(dense_modes, m):
    assert m.dagger().dagger() == m
    mat = dense_modes.monomial(m)
    np.testing.assert_allclose(dense_modes.monomial(m.dagger()), mat.T, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(monomials, monomials, monomials)
def test_product_is_associative(x, y, z):
    px, py, pz = (OperatorPoly.from_monomial(m) for m in (x, y, z))
    assert (px * py) * pz == px * (py * pz)


@settings(max_examples=40, deadline=None)
@given(monomials, monomials)
def test_dagger_reverses_products(x, y):
    px, py = OperatorPoly.from_monomial(x), OperatorPoly.from_monomial(y)
    assert (px * py).dagger() == py.dagger() * px.dagger()
