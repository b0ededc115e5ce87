"""Cumulant-truncated moment equations of the trilinear Hamiltonian.

A :class:`MomentPoly` is a polynomial whose indeterminates are expectation
values of normal-ordered monomials.  :func:`generate_system` closes the
Heisenberg equations of the first-order moments by setting every cumulant of
order ``n + 1`` to zero, and :func:`reduce_for_initial_state` prunes the
result for the initial state coherent(alpha0) x vacuum x vacuum.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .algebra import (
    FIRST_ORDER,
    IDENTITY,
    N_P,
    N_S,
    A_P,
    Monomial,
    OperatorPoly,
    heisenberg_rhs,
    parse_monomial,
)

Term = tuple[Monomial, ...]


def _term(moments: Iterable[Monomial]) -> Term:
    return tuple(sorted(m for m in moments if m != IDENTITY))


class MomentPoly:
    """Polynomial over moments with exact rational coefficients.

    Keys are sorted tuples of monomials (a product of expectation values);
    the empty tuple is the constant term.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Term, object] | Iterable[tuple[Term, object]] = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Term, Fraction] = {}
        for key, coef in items:
            key = _term(key)
            acc[key] = acc.get(key, 0) + Fraction(coef)
        self.terms = {k: v for k, v in acc.items() if v != 0}

    @classmethod
    def moment(cls, m: Monomial, coef=1) -> "MomentPoly":
        return cls({(m,): coef})

    @classmethod
    def constant(cls, value) -> "MomentPoly":
        return cls({(): value})

    def __iter__(self):
        return iter(sorted(self.terms.items(), key=lambda kv: (len(kv[0]), kv[0])))

    def __len__(self) -> int:
        return len(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, MomentPoly) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __add__(self, other: "MomentPoly") -> "MomentPoly":
        return MomentPoly(list(self.terms.items()) + list(other.terms.items()))

    def __neg__(self) -> "MomentPoly":
        return MomentPoly({k: -v for k, v in self.terms.items()})

    def __sub__(self, other: "MomentPoly") -> "MomentPoly":
        return self + (-other)

    def __mul__(self, other) -> "MomentPoly":
        if not isinstance(other, MomentPoly):
            return MomentPoly({k: v * Fraction(other) for k, v in self.terms.items()})
        return MomentPoly(
            (kx + ky, vx * vy) for kx, vx in self.terms.items() for ky, vy in other.terms.items()
        )

    __rmul__ = __mul__

    def moments(self) -> set[Monomial]:
        return {m for key in self.terms for m in key}

    @property
    def degree(self) -> int:
        return max((len(k) for k in self.terms), default=0)

    def conjugate(self) -> "MomentPoly":
        """Complex conjugate, using <A>* = <A^dag> and real coefficients."""
        return MomentPoly((tuple(m.dagger() for m in key), v) for key, v in self.terms.items())

    def substitute(self, rule: Callable[[Monomial], "MomentPoly | None"]) -> "MomentPoly":
        """Replace each moment m by ``rule(m)``; ``None`` keeps m unchanged."""
        cache: dict[Monomial, MomentPoly] = {}
        out = MomentPoly()
        for key, coef in self.terms.items():
            prod = MomentPoly.constant(coef)
            for m in key:
                if m not in cache:
                    sub = rule(m)
                    cache[m] = MomentPoly.moment(m) if sub is None else sub
                prod = prod * cache[m]
                if not prod:
                    break
            out = out + prod
        return out

    def rename(self, mapping: Mapping[Monomial, Monomial]) -> "MomentPoly":
        return MomentPoly((tuple(mapping.get(m, m) for m in key), v) for key, v in self.terms.items())

    def evaluate(self, values: Mapping[Monomial, complex]) -> complex:
        total = 0
        for key, coef in self.terms.items():
            prod = complex(coef) if isinstance(coef, complex) else float(coef)
            for m in key:
                prod = prod * values[m]
            total = total + prod
        return total

    def to_text(self) -> str:
        return format_poly(self)

    def __repr__(self) -> str:
        return f"MomentPoly({self.to_text()})"


# --- cumulant truncation -------------------------------------------------

def _set_partitions(n: int) -> list[list[list[int]]]:
    if n == 0:
        return [[]]
    out = []
    for part in _set_partitions(n - 1):
        for i in range(len(part)):
            out.append(part[:i] + [part[i] + [n - 1]] + part[i + 1 :])
        out.append(part + [[n - 1]])
    return out


@lru_cache(maxsize=None)
def _partitions_min2(n: int) -> tuple[tuple[tuple[int, ...], ...], ...]:
    return tuple(tuple(tuple(b) for b in p) for p in _set_partitions(n) if len(p) >= 2)


def _block_monomial(word: Sequence[Monomial], block: Sequence[int]) -> Monomial:
    powers = [0] * 6
    for idx in block:
        powers = [a + b for a, b in zip(powers, word[idx])]
    return Monomial(*powers)


@lru_cache(maxsize=None)
def _factorize_top(m: Monomial) -> MomentPoly:
    """<m> expressed through lower-order moments with its own cumulant set to zero.

    Blocks are subsequences of the normal-ordered word, hence normal ordered.
    """
    word = m.factors()
    out: dict[Term, Fraction] = {}
    for part in _partitions_min2(len(word)):
        k = len(part)
        weight = factorial(k - 1) * (-1) ** k
        key = _term(_block_monomial(word, b) for b in part)
        out[key] = out.get(key, 0) + weight
    return MomentPoly(out)


def cumulant_truncate(p: OperatorPoly | MomentPoly, n: int) -> MomentPoly:
    """Replace moments of order ``n + 1`` in ``<p>`` by products of lower-order moments.

    Moments of order ``<= n`` pass through.  Order ``> n + 1`` is rejected:
    closures are built one order at a time.
    """
    if n < 1:
        raise ValueError("closure order must be >= 1")
    if isinstance(p, OperatorPoly):
        p = MomentPoly(((m,), v) for m, v in p.terms.items())

    def rule(m: Monomial):
        if m.order <= n:
            return None
        if m.order == n + 1:
            return _factorize_top(m)
        raise ValueError(f"moment {m} has order {m.order} > {n + 1}")

    return p.substitute(rule)


@lru_cache(maxsize=None)
def expand_moment(m: Monomial, n: int) -> MomentPoly:
    """<m> with every cumulant above order ``n`` set to zero, for any order of m."""
    if m.order <= n:
        return MomentPoly.moment(m)
    return _factorize_top(m).substitute(lambda x: expand_moment(x, n) if x.order > n else None)


# --- moment systems -------------------------------------------------------

def conjugate_representative(m: Monomial) -> Monomial:
    """Member of {m, m^dag} with the smaller creation-power tuple."""
    return min((m, m.dagger()), key=lambda x: (x.creations, x))


def symmetric_representative(m: Monomial) -> Monomial:
    """Representative of {m, m^dag, swap(m), swap(m)^dag}, preferring signal powers."""
    members = {m, m.dagger(), m.swap_signal_idler(), m.swap_signal_idler().dagger()}
    return min(members, key=lambda x: (x.g + x.h - x.e - x.f, x.creations, x))


@dataclass(frozen=True)
class MomentSystem:
    """Closed ODE system d<v>/dtau = rhs[v] over moment variables.

    ``derived`` maps variables that are fixed by a conservation law to
    ``(c, poly)`` meaning ``<v> = c * alpha0**2 + poly``; they keep no ODE.
    """

    variables: tuple[Monomial, ...]
    rhs: Mapping[Monomial, MomentPoly]
    order: int
    reduced: bool = False
    real: bool = False
    derived: Mapping[Monomial, tuple[Fraction, MomentPoly]] = field(default_factory=dict)
    zero_set: frozenset[Monomial] = frozenset()

    @property
    def dynamic(self) -> tuple[Monomial, ...]:
        return tuple(v for v in self.variables if v not in self.derived)

    def is_closed(self) -> bool:
        known = set(self.variables)
        return all(p.moments() <= known for p in self.rhs.values()) and all(
            p.moments() <= known for _, p in self.derived.values()
        )

    def conjugate_classes(self) -> list[Monomial]:
        """One representative per {A, A^dag} pair among the variables."""
        return sorted({conjugate_representative(v) for v in self.variables})

    def observable(self, m: Monomial) -> MomentPoly:
        """<m> as a polynomial in the system variables (closure applied if needed)."""
        poly = expand_moment(m, self.order)
        if self.reduced:
            poly = poly.substitute(self._reduce_rule)
        missing = poly.moments() - set(self.variables)
        if missing:
            names = ", ".join(str(x) for x in sorted(missing))
            raise KeyError(f"{m} needs moments outside the system: {names}")
        return poly

    def _reduce_rule(self, m: Monomial):
        if m in self.zero_set or m.e - m.f != m.g - m.h:
            return MomentPoly()
        return MomentPoly.moment(symmetric_representative(m))


def generate_system(n: int, seeds: Iterable[Monomial] = ()) -> MomentSystem:
    """Close the Heisenberg equations of the first-order moments at order ``n``.

    Variables are the transitive closure of the first-order moments (plus
    optional ``seeds`` of order ``<= n``) under ``heisenberg_rhs`` followed by
    :func:`cumulant_truncate`.
    """
    if n < 1:
        raise ValueError("closure order must be >= 1")
    queue = list(FIRST_ORDER)
    for s in seeds:
        if s.order > n or s.order == 0:
            raise ValueError(f"seed {s} must have order in 1..{n}")
        queue.append(s)
    rhs: dict[Monomial, MomentPoly] = {}
    while queue:
        m = queue.pop()
        if m in rhs:
            continue
        rhs[m] = cumulant_truncate(heisenberg_rhs(m), n)
        queue.extend(x for x in rhs[m].moments() if x not in rhs)
    variables = tuple(sorted(rhs, key=lambda v: (v.order, v)))
    return MomentSystem(variables, rhs, n)


def coherent_vacuum_value(m: Monomial, alpha0: float) -> float:
    """<m> in coherent(alpha0) x vacuum x vacuum with real alpha0."""
    if m.e or m.f or m.g or m.h:
        return 0.0
    return float(alpha0) ** (m.c + m.d)


def zero_set(system: MomentSystem) -> frozenset[Monomial]:
    """Largest set of initially-zero variables whose RHS vanishes on the set itself."""
    zero = {v for v in system.variables if v.e or v.f or v.g or v.h}
    while True:
        rule = lambda m: MomentPoly() if m in zero else None  # noqa: E731
        keep = {v for v in zero if not system.rhs[v].substitute(rule)}
        if keep == zero:
            return frozenset(zero)
        zero = keep


def reduce_for_initial_state(
    system: MomentSystem,
    targets: Iterable[Monomial] = (A_P, N_S),
) -> MomentSystem:
    """Prune ``system`` for the coherent x vacuum x vacuum initial state with real alpha0.

    Steps: drop variables that vanish for all time, identify each moment
    with its conjugate and with its signal/idler mirror image (both exact
    for this state), mark <N_p> as fixed by photon-number conservation, and
    keep only the variables that ``targets`` depend on.
    """
    zero = zero_set(system)
    rep_of = {v: symmetric_representative(v) for v in system.variables if v not in zero}

    def rule(m: Monomial):
        # unbalanced signal/idler powers vanish for all time by the
        # phase symmetry a_s -> e^{i phi} a_s, a_i -> e^{-i phi} a_i
        if m in zero or m.e - m.f != m.g - m.h:
            return MomentPoly()
        return MomentPoly.moment(rep_of.get(m, symmetric_representative(m)))

    reps = sorted(set(rep_of.values()), key=lambda v: (v.order, v))
    rhs = {v: system.rhs[v].substitute(rule) for v in reps}
    for v, rep in rep_of.items():
        if system.rhs[v].substitute(rule) != rhs[rep]:
            raise ValueError(f"realness/symmetry identification inconsistent at {v}")

    derived = {}
    if N_P in rhs and N_S in rhs:
        if rhs[N_P] != -rhs[N_S]:
            raise ValueError("pump and signal populations are not conserved")
        derived[N_P] = (Fraction(1), -MomentPoly.moment(N_S))

    # dependency cone of the targets
    wanted = []
    for t in targets:
        poly = expand_moment(t, system.order).substitute(rule)
        wanted.extend(poly.moments())
    keep: set[Monomial] = set()
    stack = [w for w in wanted if w in rhs]
    while stack:
        v = stack.pop()
        if v in keep:
            continue
        keep.add(v)
        deps = derived[v][1].moments() if v in derived else rhs[v].moments()
        stack.extend(x for x in deps if x not in keep)
    variables = tuple(v for v in reps if v in keep)
    out = MomentSystem(
        variables,
        {v: rhs[v] for v in variables},
        system.order,
        reduced=True,
        real=True,
        derived={v: d for v, d in derived.items() if v in keep},
        zero_set=zero,
    )
    return out


def initial_values(system: MomentSystem, alpha0: float) -> np.ndarray:
    """Initial state vector over ``system.dynamic`` (complex unless the system is real)."""
    dtype = float if system.real else complex
    return np.array([coherent_vacuum_value(v, alpha0) for v in system.dynamic], dtype=dtype)


def build_reduced_system(n: int, observables: Iterable[Monomial] = ()) -> MomentSystem:
    """Reduced order-``n`` system able to evaluate the given observables."""
    observables = list(observables)
    seeds = set()
    for m in observables:
        seeds |= {x for x in expand_moment(m, n).moments()}
    seeds = {symmetric_representative(s) for s in seeds} | seeds
    full = generate_system(n, seeds=sorted(seeds))
    return reduce_for_initial_state(full, targets=[A_P, N_S, *observables])


# --- compiled evaluation --------------------------------------------------

class CompiledRHS:
    """Vectorized evaluation of a MomentSystem right-hand side.

    The state vector covers ``system.dynamic``; derived variables are filled
    in from the conservation law before each evaluation.
    """

    def __init__(self, system: MomentSystem, alpha0: float):
        self.system = system
        self.alpha0 = float(alpha0)
        self.index = {v: i for i, v in enumerate(system.dynamic)}
        n_dyn = len(self.index)
        ext = list(system.dynamic) + [v for v in system.variables if v in system.derived]
        self.ext_index = {v: i for i, v in enumerate(ext)}
        self.one = len(ext)  # slot holding the constant 1
        self.size = n_dyn
        self.derived_rows = []
        for v in ext[n_dyn:]:
            c, poly = system.derived[v]
            self.derived_rows.append((self.ext_index[v], float(c) * self.alpha0**2, self._compile(poly)))
        groups: dict[int, tuple[list, list, list]] = {}
        for v in system.dynamic:
            for key, coef in system.rhs[v].terms.items():
                d = max(len(key), 1)
                idx = [self.ext_index[m] for m in key] or [self.one]
                g = groups.setdefault(d, ([], [], []))
                g[0].append(self.index[v])
                g[1].append(float(coef))
                g[2].append(idx)
        self.groups = [
            (np.array(rows, dtype=np.intp), np.array(coefs), np.array(idx, dtype=np.intp))
            for rows, coefs, idx in groups.values()
        ]

    def _compile(self, poly: MomentPoly):
        return [(float(c), [self.ext_index[m] for m in key]) for key, c in poly.terms.items()]

    def extend(self, y: np.ndarray) -> np.ndarray:
        z = np.empty(self.one + 1, dtype=y.dtype)
        z[: self.size] = y
        z[self.one] = 1.0
        for slot, const, terms in self.derived_rows:
            val = const
            for c, idx in terms:
                val = val + c * np.prod(z[idx])
            z[slot] = val
        return z

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        z = self.extend(y)
        out = np.zeros(self.size, dtype=z.dtype)
        for rows, coefs, idx in self.groups:
            contrib = coefs * np.prod(z[idx], axis=1)
            if np.iscomplexobj(contrib):
                out = out + np.bincount(rows, contrib.real, self.size) + 1j * np.bincount(rows, contrib.imag, self.size)
            else:
                out += np.bincount(rows, contrib, self.size)
        return out

    def observable(self, m: Monomial) -> Callable[[np.ndarray], np.ndarray]:
        """Vectorized evaluator of <m> over a states array of shape (n_dyn, n_times)."""
        poly = self.system.observable(m)
        terms = self._compile(poly)

        def evaluate(states: np.ndarray) -> np.ndarray:
            states = np.asarray(states)
            z = np.array([self.extend(col) for col in states.T]).T
            total = np.zeros(states.shape[1], dtype=z.dtype)
            for c, idx in terms:
                total = total + c * (np.prod(z[idx], axis=0) if idx else 1.0)
            return total

        return evaluate


# --- text export ----------------------------------------------------------

def _format_coef(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _format_product(key: Term) -> str:
    parts = []
    for m in sorted(set(key)):
        power = key.count(m)
        parts.append(str(m) if power == 1 else f"{m}^{power}")
    return "*".join(parts)


def format_poly(poly: MomentPoly) -> str:
    if not poly:
        return "0"
    pieces = []
    for key, coef in poly:
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        if not key:
            body = _format_coef(mag)
        elif mag == 1:
            body = _format_product(key)
        else:
            body = f"{_format_coef(mag)}*{_format_product(key)}"
        pieces.append((sign, body))
    first_sign, first = pieces[0]
    text = ("-" if first_sign == "-" else "") + first
    for sign, body in pieces[1:]:
        text += f" {sign} {body}"
    return text


def export_system(system: MomentSystem) -> str:
    """Canonical text: one ``d<m>/dtau = ...`` line per equation.

    For complex systems only one member of each {A, A^dag} pair is written,
    since the other equation is its conjugate.  Derived variables are written
    as ``<m> = alpha0^2 ...`` lines after the ODEs.
    """
    if system.real:
        lhs = [v for v in system.dynamic]
    else:
        lhs = [v for v in system.dynamic if v == conjugate_representative(v)]
    lines = [f"d{v}/dtau = {format_poly(system.rhs[v])}" for v in sorted(lhs)]
    for v in sorted(system.derived):
        c, poly = system.derived[v]
        const = "alpha0^2" if c == 1 else f"{_format_coef(c)}*alpha0^2"
        rest = format_poly(poly)
        if rest != "0":
            rest = f" - {rest[1:]}" if rest.startswith("-") else f" + {rest}"
        else:
            rest = ""
        lines.append(f"{v} = {const}{rest}")
    return "\n".join(lines) + ("\n" if lines else "")


_TERM_RE = re.compile(r"\s*([+-])?\s*([^+-]+)")
_FACTOR_RE = re.compile(r"^(<[^>]*>)(?:\^(\d+))?$")


def parse_poly(text: str) -> MomentPoly:
    """Parse a polynomial written by :func:`format_poly` (factor order is free)."""
    text = text.strip()
    if text == "0":
        return MomentPoly()
    out = []
    # split on top-level signs; moments never contain + or -
    tokens = []
    buf = ""
    sign = 1
    for ch in text:
        if ch in "+-" and buf.strip():
            tokens.append((sign, buf))
            buf = ""
            sign = 1 if ch == "+" else -1
        elif ch in "+-":
            sign *= 1 if ch == "+" else -1
        else:
            buf += ch
    if buf.strip():
        tokens.append((sign, buf))
    for sign, body in tokens:
        coef = Fraction(sign)
        key: list[Monomial] = []
        for factor in body.split("*"):
            factor = factor.strip()
            fm = _FACTOR_RE.match(factor)
            if fm:
                key.extend([parse_monomial(fm.group(1))] * int(fm.group(2) or 1))
            else:
                coef *= Fraction(factor)
        out.append((tuple(key), coef))
    return MomentPoly(out)


def parse_system(text: str) -> tuple[dict[Monomial, MomentPoly], dict[Monomial, tuple[Fraction, MomentPoly]]]:
    """Parse exported text into (ODE right-hand sides, derived relations).

    Blank lines and ``#`` comments are ignored.
    """
    rhs: dict[Monomial, MomentPoly] = {}
    derived: dict[Monomial, tuple[Fraction, MomentPoly]] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        lhs, _, body = line.partition("=")
        lhs = lhs.strip()
        if lhs.startswith("d<") and lhs.endswith("/dtau"):
            rhs[parse_monomial(lhs[1:-5])] = parse_poly(body)
        elif lhs.startswith("<"):
            m = re.match(r"\s*(?:([0-9/]+)\*)?alpha0\^2(.*)$", body)
            if not m:
                raise ValueError(f"cannot parse derived relation: {raw!r}")
            c = Fraction(m.group(1) or 1)
            rest = m.group(2).strip()
            derived[parse_monomial(lhs)] = (c, parse_poly(rest) if rest else MomentPoly())
        else:
            raise ValueError(f"cannot parse line: {raw!r}")
    return rhs, derived


def canonical_text(text: str) -> str:
    """Re-export parsed text in canonical form, for order-insensitive comparison."""
    rhs, derived = parse_system(text)
    lines = [f"d{v}/dtau = {format_poly(rhs[v])}" for v in sorted(rhs)]
    for v in sorted(derived):
        c, poly = derived[v]
        lines.append(f"{v} = {_format_coef(c)}*alpha0^2 + {format_poly(poly)}")
    return "\n".join(lines) + ("\n" if lines else "")
