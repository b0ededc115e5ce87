"""Moments, correlations, covariances, reduced densities and photon statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .algebra import Monomial
from .fock import SuperposedState

OUT_OF_GRID_TOL = 1e-15


class OutOfGridError(ValueError):
    """A moment needs amplitudes beyond the stored (m, k) grid."""


def _sqrt_falling(n: np.ndarray, j: int) -> np.ndarray:
    """sqrt(n (n-1) ... (n-j+1)), zero where n < j."""
    out = np.ones(n.shape)
    for i in range(j):
        out = out * np.sqrt(np.clip(n - i, 0.0, None))
    return out


def moment(state: SuperposedState, req: Monomial | Sequence[int]) -> complex:
    """<(a_p^dag)^c a_p^d (a_s^dag)^e a_s^f (a_i^dag)^g a_i^h> on the beta grid.

    Signal and idler occupations are equal in every basis state, so the
    moment vanishes unless e - f == g - h.  Otherwise it is the weighted
    overlap sum_{m,k} conj(beta[m+dm, k+dk]) beta[m, k] r(m) q(k) with
    dm = c - d, dk = e - f and square-root falling-factorial weights.
    """
    c, d, e, f, g, h = (int(x) for x in req)
    if min(c, d, e, f, g, h) < 0:
        raise ValueError("powers must be non-negative")
    if e - f != g - h:
        return 0j
    beta = state.beta
    rows, cols = beta.shape
    dm, dk = c - d, e - f
    m_lo, m_hi = max(0, -dm), min(rows, rows - dm)
    k_lo, k_hi = max(0, -dk), min(cols, cols - dk)
    if m_hi <= m_lo or k_hi <= k_lo:
        raise OutOfGridError("shift larger than the grid")
    _check_edges(beta, dm, dk)
    m = np.arange(m_lo, m_hi, dtype=float)
    k = np.arange(k_lo, k_hi, dtype=float)
    r = _sqrt_falling(m, d) * _sqrt_falling(m + dm, c)
    q = _sqrt_falling(k, f) * _sqrt_falling(k, h) * _sqrt_falling(k + dk, e) * _sqrt_falling(k + dk, g)
    ket = beta[m_lo:m_hi, k_lo:k_hi]
    bra = beta[m_lo + dm : m_hi + dm, k_lo + dk : k_hi + dk]
    if np.iscomplexobj(bra):
        bra = bra.conj()
    val = r @ (bra * ket) @ q
    return complex(val)


def _check_edges(beta, dm, dk):
    # Pairs whose partner index lies past the grid are dropped; for either
    # sign of the shift these are the last |dm| rows and last |dk| columns.
    # Partners below index 0 carry a zero falling-factorial weight.
    lost = 0.0
    if dm:
        lost += float(np.sum(np.abs(beta[-abs(dm) :, :]) ** 2))
    if dk:
        lost += float(np.sum(np.abs(beta[:, -abs(dk) :]) ** 2))
    if lost > OUT_OF_GRID_TOL:
        raise OutOfGridError(f"edge mass {lost:.3g} would be dropped; pad the state")


def moments(state: SuperposedState, reqs: Iterable[Monomial | Sequence[int]]) -> dict:
    return {tuple(r): moment(state, r) for r in reqs}


# --- standard series ------------------------------------------------------

POPULATION_GUARD = 1e-14

SERIES_COLUMNS = (
    "N_p", "N_s", "re_a_p", "im_a_p", "re_a_p2", "im_a_p2", "re_a_s_a_i", "im_a_s_a_i",
    "var_X_p", "var_P_p", "g2_p", "g2_s",
)


def quadrature_variances(mean_a: complex, mean_a2: complex, n: float) -> tuple[float, float]:
    """(Var X, Var P) with X = (a + a^dag)/sqrt2 and P = (a - a^dag)/(sqrt2 i)."""
    var_x = mean_a2.real + n + 0.5 - 2.0 * mean_a.real**2
    var_p = -mean_a2.real + n + 0.5 - 2.0 * mean_a.imag**2
    return var_x, var_p


def g2(numerator: float, population: float) -> float:
    """<(a^dag)^2 a^2>/<a^dag a>^2, NaN when the population is below the guard."""
    if population < POPULATION_GUARD:
        return math.nan
    return numerator / population**2


def standard_series(state: SuperposedState) -> dict[str, float]:
    """Populations, pump moments, quadrature variances and g2 at one time."""
    n_p = moment(state, (1, 1, 0, 0, 0, 0)).real
    n_s = moment(state, (0, 0, 1, 1, 0, 0)).real
    a_p = moment(state, (0, 1, 0, 0, 0, 0))
    a_p2 = moment(state, (0, 2, 0, 0, 0, 0))
    pair = moment(state, (0, 0, 0, 1, 0, 1))
    var_x, var_p = quadrature_variances(a_p, a_p2, n_p)
    return {
        "N_p": n_p,
        "N_s": n_s,
        "re_a_p": a_p.real,
        "im_a_p": a_p.imag,
        "re_a_p2": a_p2.real,
        "im_a_p2": a_p2.imag,
        "re_a_s_a_i": pair.real,
        "im_a_s_a_i": pair.imag,
        "var_X_p": var_x,
        "var_P_p": var_p,
        "g2_p": g2(moment(state, (2, 2, 0, 0, 0, 0)).real, n_p),
        "g2_s": g2(moment(state, (0, 0, 2, 2, 0, 0)).real, n_s),
    }


def series_table(states: Iterable[SuperposedState]) -> dict[str, np.ndarray]:
    rows = [(s.tau, standard_series(s)) for s in states]
    table = {"tau": np.array([t for t, _ in rows])}
    for col in SERIES_COLUMNS:
        table[col] = np.array([r[col] for _, r in rows])
    return table


# --- covariance -----------------------------------------------------------

@dataclass(frozen=True)
class CovarianceMatrix6:
    """Quadrature covariance over R = (X_p, P_p, X_s, P_s, X_i, P_i)."""

    matrix: np.ndarray
    mean: np.ndarray

    def symplectic_check(self) -> float:
        """Smallest eigenvalue of V + i Omega/2 (>= 0 for a physical state)."""
        omega = np.kron(np.eye(3), np.array([[0.0, 1.0], [-1.0, 0.0]]))
        return float(np.linalg.eigvalsh(self.matrix + 0.5j * omega).min())


_UNIT = {
    # (mode, dagger) -> slot in (c, d, e, f, g, h)
    (0, True): 0, (0, False): 1, (1, True): 2, (1, False): 3, (2, True): 4, (2, False): 5,
}


def _ladder_moment(state, ops: Sequence[tuple[int, bool]]) -> complex:
    """<o1 o2> for single ladder operators, reduced to normal order."""
    powers = [0] * 6
    for op in ops:
        powers[_UNIT[op]] += 1
    val = moment(state, powers)
    if len(ops) == 2:
        (m1, d1), (m2, d2) = ops
        if m1 == m2 and not d1 and d2:  # a a^dag = a^dag a + 1
            val += 1.0
    return val


def covariance(state: SuperposedState) -> CovarianceMatrix6:
    """V_ij = <R_i R_j + R_j R_i>/2 - <R_i><R_j> from first and second moments."""
    # R = U a with a = (a_p, a_p^dag, a_s, a_s^dag, a_i, a_i^dag)
    s2 = 1.0 / math.sqrt(2.0)
    u1 = np.array([[s2, s2], [-1j * s2, 1j * s2]])
    u = np.kron(np.eye(3), u1)
    ops = [(mode, dag) for mode in range(3) for dag in (False, True)]
    first = np.array([_ladder_moment(state, [op]) for op in ops])
    second = np.empty((6, 6), dtype=complex)
    for i, oi in enumerate(ops):
        for j, oj in enumerate(ops):
            second[i, j] = _ladder_moment(state, [oi, oj])
    sym = 0.5 * (second + second.T)
    mean = (u @ first).real
    v = (u @ sym @ u.T).real - np.outer(mean, mean)
    return CovarianceMatrix6(0.5 * (v + v.T), mean)


# --- reduced densities ----------------------------------------------------

@dataclass(frozen=True)
class ReducedDensity:
    mode: str
    matrix: np.ndarray  # dense for the pump, diagonal vector for the signal

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix))) if self.matrix.ndim == 2 else float(np.sum(self.matrix))

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)) if self.matrix.ndim == 2 else self.matrix


def reduced_density(state: SuperposedState, mode: str) -> ReducedDensity:
    """Pump: rho[m, m'] = sum_k beta[m,k] conj(beta[m',k]); signal: q_k = sum_m |beta[m,k]|^2."""
    beta = state.beta
    if mode == "pump":
        return ReducedDensity("pump", beta @ beta.conj().T)
    if mode in ("signal", "idler"):
        return ReducedDensity(mode, np.sum(np.abs(beta) ** 2, axis=0))
    raise ValueError(f"unknown mode {mode!r}")


def purity(rho: ReducedDensity | SuperposedState, mode: str = "pump") -> float:
    """Tr rho^2.

    For a SuperposedState the pump purity is ||beta^dag beta||_F^2, computed
    on the smaller Gram matrix after trimming empty rows and columns.
    """
    if isinstance(rho, SuperposedState):
        if mode != "pump":
            q = reduced_density(rho, mode).matrix
            return float(np.sum(q**2))
        beta = _trim(rho.beta)
        gram = beta.conj().T @ beta if beta.shape[0] >= beta.shape[1] else beta @ beta.conj().T
        return float(np.sum(np.abs(gram) ** 2))
    if rho.matrix.ndim == 2:
        return float(np.sum(np.abs(rho.matrix) ** 2))
    return float(np.sum(rho.matrix**2))


def _trim(beta: np.ndarray, tol: float = 1e-36) -> np.ndarray:
    mass = np.abs(beta) ** 2
    rows = np.nonzero(mass.sum(axis=1) > tol)[0]
    cols = np.nonzero(mass.sum(axis=0) > tol)[0]
    if rows.size == 0 or cols.size == 0:
        return beta[:1, :1]
    return beta[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]


def photon_statistics(state: SuperposedState, mode: str) -> np.ndarray:
    """Photon-number distribution of one mode (signal and idler coincide)."""
    weights = np.abs(state.beta) ** 2
    if mode == "pump":
        return weights.sum(axis=1)
    if mode in ("signal", "idler"):
        return weights.sum(axis=0)
    raise ValueError(f"unknown mode {mode!r}")


def parity_split(probabilities: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(probabilities)
    return p[0::2], p[1::2]


# --- maxima ---------------------------------------------------------------

def local_maxima(times: Sequence[float], values: Sequence[float], count: int = 2) -> list[float]:
    """Times of the first ``count`` interior local maxima, refined by a 3-point parabola.

    Returns fewer entries (possibly none) if the series has fewer maxima.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    found: list[float] = []
    for j in range(1, len(y) - 1):
        if y[j] > y[j - 1] and y[j] >= y[j + 1]:
            t0, t1, t2 = t[j - 1], t[j], t[j + 1]
            y0, y1, y2 = y[j - 1], y[j], y[j + 1]
            denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
            a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom
            b = (t2**2 * (y0 - y1) + t1**2 * (y2 - y0) + t0**2 * (y1 - y2)) / denom
            found.append(float(-b / (2 * a)) if a < 0 else float(t1))
            if len(found) == count:
                break
    return found
