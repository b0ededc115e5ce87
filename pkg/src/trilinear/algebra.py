"""Normal-ordered bosonic operator algebra for the three-mode trilinear Hamiltonian.

Operators are polynomials in the ladder operators of the pump (p), signal (s)
and idler (i) modes.  Every monomial is kept in the canonical normal order

    (a_p^dag)^c a_p^d (a_s^dag)^e a_s^f (a_i^dag)^g a_i^h

so two monomials are equal iff their power tuples are equal.
"""
from __future__ import annotations

from fractions import Fraction
from math import comb, factorial
from typing import Iterable, Iterator, Mapping, NamedTuple

MODES = ("p", "s", "i")


class Monomial(NamedTuple):
    """Power tuple of a normal-ordered three-mode monomial."""

    c: int = 0  # pump creation
    d: int = 0  # pump annihilation
    e: int = 0  # signal creation
    f: int = 0  # signal annihilation
    g: int = 0  # idler creation
    h: int = 0  # idler annihilation

    @property
    def order(self) -> int:
        return sum(self)

    @property
    def creations(self) -> tuple[int, int, int]:
        return (self.c, self.e, self.g)

    @property
    def annihilations(self) -> tuple[int, int, int]:
        return (self.d, self.f, self.h)

    def dagger(self) -> "Monomial":
        return Monomial(self.d, self.c, self.f, self.e, self.h, self.g)

    def swap_signal_idler(self) -> "Monomial":
        return Monomial(self.c, self.d, self.g, self.h, self.e, self.f)

    def is_hermitian(self) -> bool:
        return self == self.dagger()

    def factors(self) -> list["Monomial"]:
        """The monomial as an ordered word of single ladder operators."""
        word = []
        for slot, power in enumerate(self):
            unit = [0] * 6
            unit[slot] = 1
            word.extend([Monomial(*unit)] * power)
        return word

    def label(self) -> str:
        """Render as e.g. ``ap'^2 as ai`` (``'`` marks a creation operator)."""
        if self.order == 0:
            return "1"
        parts = []
        for mode, (n_dag, n_ann) in zip(MODES, ((self.c, self.d), (self.e, self.f), (self.g, self.h))):
            for name, power in ((f"a{mode}'", n_dag), (f"a{mode}", n_ann)):
                if power == 1:
                    parts.append(name)
                elif power > 1:
                    parts.append(f"{name}^{power}")
        return " ".join(parts)

    def __str__(self) -> str:
        return f"<{self.label()}>"


IDENTITY = Monomial()
A_P, A_P_DAG = Monomial(d=1), Monomial(c=1)
A_S, A_S_DAG = Monomial(f=1), Monomial(e=1)
A_I, A_I_DAG = Monomial(h=1), Monomial(g=1)
N_P = Monomial(c=1, d=1)
N_S = Monomial(e=1, f=1)
N_I = Monomial(g=1, h=1)
FIRST_ORDER = (A_P, A_P_DAG, A_S, A_S_DAG, A_I, A_I_DAG)

_SLOTS = {"ap'": 0, "ap": 1, "as'": 2, "as": 3, "ai'": 4, "ai": 5}


def parse_monomial(text: str) -> Monomial:
    """Inverse of :meth:`Monomial.label`; accepts the operators in any order.

    The operators of different modes commute, but within one mode the word
    must already be normal ordered.
    """
    text = text.strip().strip("<>").strip()
    powers = [0] * 6
    if text in ("", "1"):
        return IDENTITY
    last_slot = {}
    for token in text.split():
        name, _, power = token.partition("^")
        if name not in _SLOTS:
            raise ValueError(f"unknown ladder operator {name!r} in {text!r}")
        slot = _SLOTS[name]
        mode = slot // 2
        if slot % 2 == 0 and last_slot.get(mode) == slot + 1:
            raise ValueError(f"{text!r} is not normal ordered in mode {MODES[mode]}")
        last_slot[mode] = slot
        powers[slot] += int(power) if power else 1
    return Monomial(*powers)


class OperatorPoly:
    """Finite linear combination of normal-ordered monomials.

    Coefficients may be any numbers (``int``, ``Fraction``, ``float`` or
    ``complex``); exact inputs stay exact.  Zero coefficients are dropped.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Monomial, object] | Iterable[tuple[Monomial, object]] = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Monomial, object] = {}
        for mono, coef in items:
            acc[mono] = acc.get(mono, 0) + coef
        self.terms = {m: v for m, v in acc.items() if v != 0}

    @classmethod
    def from_monomial(cls, mono: Monomial, coef=1) -> "OperatorPoly":
        return cls({mono: coef})

    def __iter__(self) -> Iterator[tuple[Monomial, object]]:
        return iter(sorted(self.terms.items()))

    def __len__(self) -> int:
        return len(self.terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, Monomial):
            other = OperatorPoly.from_monomial(other)
        if not isinstance(other, OperatorPoly):
            return NotImplemented
        return self.terms == other.terms

    def __add__(self, other: "OperatorPoly") -> "OperatorPoly":
        return OperatorPoly(list(self.terms.items()) + list(other.terms.items()))

    def __neg__(self) -> "OperatorPoly":
        return OperatorPoly({m: -v for m, v in self.terms.items()})

    def __sub__(self, other: "OperatorPoly") -> "OperatorPoly":
        return self + (-other)

    def scale(self, factor) -> "OperatorPoly":
        return OperatorPoly({m: v * factor for m, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, Monomial):
            other = OperatorPoly.from_monomial(other)
        if not isinstance(other, OperatorPoly):
            return self.scale(other)
        out: list[tuple[Monomial, object]] = []
        for mx, vx in self.terms.items():
            for my, vy in other.terms.items():
                for mono, coef in normal_order_product(mx, my).terms.items():
                    out.append((mono, vx * vy * coef))
        return OperatorPoly(out)

    __rmul__ = scale

    def dagger(self) -> "OperatorPoly":
        return OperatorPoly({m.dagger(): _conj(v) for m, v in self.terms.items()})

    def __repr__(self) -> str:
        if not self.terms:
            return "OperatorPoly(0)"
        body = " + ".join(f"{v}*{m.label()}" for m, v in self)
        return f"OperatorPoly({body})"


def _conj(value):
    return value.conjugate() if isinstance(value, complex) else value


def _mode_product(x_dag: int, x_ann: int, y_dag: int, y_ann: int) -> list[tuple[int, int, int]]:
    """Normal order (a^dag)^x_dag a^x_ann (a^dag)^y_dag a^y_ann in one mode.

    Uses a^n (a^dag)^m = sum_k C(n,k) C(m,k) k! (a^dag)^(m-k) a^(n-k).
    """
    return [
        (comb(x_ann, k) * comb(y_dag, k) * factorial(k), x_dag + y_dag - k, x_ann + y_ann - k)
        for k in range(min(x_ann, y_dag) + 1)
    ]


def normal_order_product(x: Monomial, y: Monomial) -> OperatorPoly:
    """Normal-ordered expansion of the operator product ``x * y`` (integer coefficients)."""
    pump = _mode_product(x.c, x.d, y.c, y.d)
    signal = _mode_product(x.e, x.f, y.e, y.f)
    idler = _mode_product(x.g, x.h, y.g, y.h)
    out = []
    for wp, c, d in pump:
        for ws, e, f in signal:
            for wi, g, h in idler:
                out.append((Monomial(c, d, e, f, g, h), wp * ws * wi))
    return OperatorPoly(out)


# H = i hbar chi K with K = a_p a_s^dag a_i^dag - a_p^dag a_s a_i, so that
# d<A>/dtau = (i / hbar chi) <[H, A]> = <[A, K]>.
GENERATOR = OperatorPoly({Monomial(d=1, e=1, g=1): 1, Monomial(c=1, f=1, h=1): -1})


def commutator(x: OperatorPoly, y: OperatorPoly) -> OperatorPoly:
    return x * y - y * x


def heisenberg_rhs(m: Monomial) -> OperatorPoly:
    """Normal-ordered P with d<m>/dtau = <P> under the trilinear Hamiltonian."""
    return commutator(OperatorPoly.from_monomial(m), GENERATOR)


def as_fraction_poly(poly: OperatorPoly) -> OperatorPoly:
    return OperatorPoly({m: Fraction(v) for m, v in poly.terms.items()})
