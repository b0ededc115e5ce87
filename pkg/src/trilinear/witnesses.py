"""Moment-matrix entanglement witnesses for the pump | signal-idler cut.

Separable states keep every principal minor of the partial-transpose moment
matrix nonnegative.  ``w4`` and ``w6`` are two such 3x3 minors with the
second subsystem represented by b = a_s cos(theta) + a_i sin(theta).  Each
entry is written as an operator word, normal-ordered by the algebra module
and evaluated term by term, so no hand expansion enters the result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np

from .algebra import Monomial, OperatorPoly
from .elliptic import SecondOrderSolution
from .fock import NormLossError, SuperposedState, frame_transform
from .observables import moment

MomentSource = Union[SuperposedState, Callable[[Monomial], complex]]

DEFAULT_THETA = math.pi / 4
ABS_TOL = 1e-9
REL_TOL = 1e-12


def _source(src: MomentSource) -> Callable[[Monomial], complex]:
    if isinstance(src, SuperposedState):
        return lambda m: moment(src, m)
    return src


def expectation(src: MomentSource, poly: OperatorPoly) -> complex:
    """<poly> as the coefficient-weighted sum of monomial moments."""
    f = _source(src)
    return complex(sum(complex(coef) * f(mono) for mono, coef in poly.terms.items()))


# --- operator words -------------------------------------------------------

_AP = OperatorPoly.from_monomial(Monomial(d=1))
_AP_DAG = OperatorPoly.from_monomial(Monomial(c=1))


def _b_ops(theta: float) -> tuple[OperatorPoly, OperatorPoly]:
    c, s = math.cos(theta), math.sin(theta)
    b = OperatorPoly({Monomial(f=1): c, Monomial(h=1): s})
    return b, b.dagger()


def _word(letters: str, theta: float) -> OperatorPoly:
    """Product of letters a (a_p), A (a_p^dag), b, B (b^dag), left to right."""
    b, bd = _b_ops(theta)
    table = {"a": _AP, "A": _AP_DAG, "b": b, "B": bd}
    out = OperatorPoly.from_monomial(Monomial())
    for ch in letters:
        out = out * table[ch]
    return out


# entry words; a/A = a_p/a_p^dag, b/B = b/b^dag
W4_WORDS = (
    ("AaBb", "AABb", "AAbb"),
    ("aaBb", "aABb", "aAbb"),
    ("aaBB", "aABB", "aAbB"),
)
W6_WORDS = (
    ("", "aBB", "Abb"),
    ("Abb", "AaBBbb", "AAbbbb"),
    ("aBB", "aaBBBB", "aAbbBB"),
)


@lru_cache(maxsize=32)
def witness_polys(kind: str, theta: float = DEFAULT_THETA) -> tuple[tuple[OperatorPoly, ...], ...]:
    """Normal-ordered entries of the w4 or w6 moment matrix."""
    words = {"w4": W4_WORDS, "w6": W6_WORDS}[kind]
    return tuple(tuple(_word(w, theta) for w in row) for row in words)


def moment_matrix(src: MomentSource, kind: str, theta: float = DEFAULT_THETA) -> np.ndarray:
    f = _source(src)
    cache: dict[Monomial, complex] = {}

    def get(m: Monomial) -> complex:
        if m not in cache:
            cache[m] = f(m)
        return cache[m]

    polys = witness_polys(kind, float(theta))
    return np.array([[expectation(get, p) for p in row] for row in polys])


def _det(mat: np.ndarray) -> float:
    d = np.linalg.det(mat)
    scale = max(1.0, float(np.max(np.abs(mat)))) ** 3
    if abs(d.imag) > 1e-9 * scale:
        raise ArithmeticError(f"determinant has imaginary part {d.imag:.3g}")
    return float(d.real)


def w4(src: MomentSource, theta: float = DEFAULT_THETA) -> float:
    return _det(moment_matrix(src, "w4", theta))


def w6(src: MomentSource, theta: float = DEFAULT_THETA) -> float:
    return _det(moment_matrix(src, "w6", theta))


def tripartite_witness(src: MomentSource) -> float:
    """sqrt(<N_p><N_s N_i>) - |<a_p a_s a_i>|; negative flags entanglement.

    Meant for the output of :func:`frame_transform`.
    """
    f = _source(src)
    n_p = f(Monomial(c=1, d=1)).real
    n_si = f(Monomial(e=1, f=1, g=1, h=1)).real
    triple = abs(f(Monomial(d=1, f=1, h=1)))
    return math.sqrt(max(n_p, 0.0) * max(n_si, 0.0)) - triple


def verdict(value: float, scale: float = 0.0) -> bool:
    """True (entangled) when value < -max(1e-9, 1e-12 * scale)."""
    return value < -max(ABS_TOL, REL_TOL * scale)


def determinant_scale(mat: np.ndarray) -> float:
    """|product of the diagonal|, the Hadamard bound for a positive matrix.

    Product states give exactly singular w4 matrices; their computed
    determinant is rounding noise of about eps times this product.
    """
    return float(abs(np.prod(np.real(np.diag(mat)))))


# --- reports --------------------------------------------------------------

@dataclass
class WitnessReport:
    theta: float
    tau: list[float] = field(default_factory=list)
    w4: list[float] = field(default_factory=list)
    w6: list[float] = field(default_factory=list)
    tripartite: list[float] = field(default_factory=list)
    w4_entangled: list[bool] = field(default_factory=list)
    w6_entangled: list[bool] = field(default_factory=list)
    tripartite_entangled: list[bool] = field(default_factory=list)

    def add(self, tau: float, state: SuperposedState, transformed: SuperposedState | None = None) -> None:
        m4 = moment_matrix(state, "w4", self.theta)
        m6 = moment_matrix(state, "w6", self.theta)
        v4, v6 = _det(m4), _det(m6)
        self.tau.append(float(tau))
        self.w4.append(v4)
        self.w6.append(v6)
        self.w4_entangled.append(verdict(v4, determinant_scale(m4)))
        self.w6_entangled.append(verdict(v6, determinant_scale(m6)))
        if transformed is not None:
            t = tripartite_witness(transformed)
            self.tripartite.append(t)
            self.tripartite_entangled.append(verdict(t))
        else:
            self.tripartite.append(math.nan)
            self.tripartite_entangled.append(False)

    def columns(self) -> dict[str, list]:
        return {
            "tau": self.tau,
            "w4": self.w4,
            "w6": self.w6,
            "tripartite": self.tripartite,
            "w4_entangled": [int(v) for v in self.w4_entangled],
            "w6_entangled": [int(v) for v in self.w6_entangled],
            "tripartite_entangled": [int(v) for v in self.tripartite_entangled],
        }

    def intervals(self) -> dict[str, list[tuple[float, float]]]:
        """Maximal runs of grid times with an entangled verdict, per witness."""
        out = {}
        for name, flags in (("w4", self.w4_entangled), ("w6", self.w6_entangled), ("tripartite", self.tripartite_entangled)):
            out[name] = entangled_intervals(self.tau, flags)
        return out


def entangled_intervals(taus: Sequence[float], flags: Sequence[bool]) -> list[tuple[float, float]]:
    runs: list[tuple[float, float]] = []
    start = None
    for t, f in zip(taus, flags):
        if f and start is None:
            start = t
        if f:
            last = t
        if not f and start is not None:
            runs.append((start, last))
            start = None
    if start is not None:
        runs.append((start, last))
    return runs


def transformed_state(state: SuperposedState, **kwargs) -> SuperposedState:
    """State in the frame displaced and squeezed by the second-order solution at its tau."""
    eta, alpha = SecondOrderSolution(state.alpha0).eta_alpha(state.tau)
    return frame_transform(state, alpha, eta, **kwargs)


def witness_report(states: Sequence[SuperposedState], theta: float = DEFAULT_THETA, tripartite: bool = True) -> WitnessReport:
    """Witness values on every state.

    The tripartite margin is NaN where the state has moved too far from the
    displaced squeezed vacuum for the padded frame transform to hold it.
    """
    rep = WitnessReport(theta)
    for s in states:
        ts = None
        if tripartite:
            try:
                ts = transformed_state(s)
            except NormLossError:
                ts = None
        rep.add(s.tau, s, ts)
    return rep


# --- product-state oracle -------------------------------------------------

def product_state_moment(alpha: float, eta: float, req: Sequence[int]) -> complex:
    """Moment of |alpha>_p (x) TMSV(eta)_{s,i} from Wick pairings.

    The pump factor is alpha^(c+d) (real alpha).  The signal-idler factor
    pairs j annihilators a_s with a_i (weight sinh eta cosh eta), j' creators
    likewise, and the rest within each mode (weight sinh^2 eta).
    """
    c, d, e, f, g, h = (int(x) for x in req)
    pump = alpha ** (c + d)
    if e - f != g - h:
        return 0j
    n = math.sinh(eta) ** 2
    s = math.sinh(eta) * math.cosh(eta)
    total = 0.0
    for j in range(min(f, h) + 1):
        jp = j + e - f
        if jp < 0 or jp > min(e, g):
            continue
        ways = (
            math.comb(f, j) * math.comb(h, j) * math.factorial(j)
            * math.comb(e, jp) * math.comb(g, jp) * math.factorial(jp)
            * math.factorial(f - j) * math.factorial(h - j)
        )
        total += ways * s ** (j + jp) * n ** ((f - j) + (h - j))
    return complex(pump * total)


def product_state_source(alpha: float, eta: float) -> Callable[[Monomial], complex]:
    return lambda m: product_state_moment(alpha, eta, m)
