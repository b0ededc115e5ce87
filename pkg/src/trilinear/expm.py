"""Action of exp(tA) on vectors for real skew-symmetric tridiagonal A.

The default method is the Chebyshev-Bessel expansion

    exp(tA) v = J_0(z) v + 2 sum_k J_k(z) psi_k,
    psi_0 = v,  psi_1 = B v,  psi_{k+1} = 2 B psi_k + psi_{k-1},

with B = A / rho, z = t rho and rho an upper bound on the spectral radius.
Because A = i T up to a diagonal similarity, with T the symmetric
tridiagonal matrix sharing the off-diagonal, the recursion stays real and
the truncation error is bounded by 2 sum_{k>K} |J_k(z)| ||v||.
A scaled Taylor method is kept as an independent cross-check.
"""
from __future__ import annotations

import math
from typing import Iterator, Sequence

import numba
import numpy as np
from scipy.linalg import eigvalsh_tridiagonal
from scipy.special import jv


class SkewTridiagonal:
    """Real matrix with A[k+1, k] = sub[k] and A[k, k+1] = -sub[k], zero diagonal."""

    def __init__(self, sub: Sequence[float] | np.ndarray, rho: float | None = None):
        self.sub = np.asarray(sub, dtype=float)
        self.size = self.sub.size + 1
        self._rho = rho

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """A @ x along axis 0 (x may carry extra trailing axes)."""
        s = self.sub.reshape((-1,) + (1,) * (x.ndim - 1))
        y = np.zeros_like(x)
        y[1:] += s * x[:-1]
        y[:-1] -= s * x[1:]
        return y

    def dense(self) -> np.ndarray:
        a = np.diag(self.sub, -1)
        return a - a.T

    def spectral_radius(self) -> float:
        """Largest |eigenvalue|, exact for sizes up to a few thousand."""
        if self._rho is None:
            if self.size == 1 or not np.any(self.sub):
                self._rho = 0.0
            elif self.size <= 4000:
                w = eigvalsh_tridiagonal(np.zeros(self.size), self.sub, select="i",
                                         select_range=(self.size - 1, self.size - 1))
                self._rho = float(abs(w[0]))
            else:
                self._rho = self.gershgorin()
        return self._rho

    def gershgorin(self) -> float:
        s = np.abs(self.sub)
        if s.size == 0:
            return 0.0
        left = np.concatenate(([0.0], s))
        right = np.concatenate((s, [0.0]))
        return float(np.max(left + right))

    def one_norm(self) -> float:
        return self.gershgorin()


def chebyshev_terms(z: float, tol: float) -> np.ndarray:
    """Bessel coefficients J_0..J_K(z) with 2 sum_{k>K} |J_k| below tol."""
    if z == 0.0:
        return np.array([1.0])
    k_max = int(z + 12.0 * max(z, 1.0) ** (1.0 / 3.0) + 40)
    while True:
        coeffs = jv(np.arange(k_max + 1), z)
        tail = 2.0 * np.cumsum(np.abs(coeffs[::-1]))[::-1]
        ok = np.nonzero(tail < tol)[0]
        if ok.size and ok[0] > 0:
            return coeffs[: ok[0]]
        k_max = int(1.5 * k_max) + 20


@numba.njit(cache=True)
def _chebyshev_1d(sub, v, coeffs, scale):  # pragma: no cover - compiled
    n = v.size
    psi_prev = v.copy()
    out = coeffs[0] * v
    if coeffs.size == 1:
        return out
    psi = np.empty(n)
    for i in range(n):
        acc = 0.0
        if i > 0:
            acc += sub[i - 1] * v[i - 1]
        if i < n - 1:
            acc -= sub[i] * v[i + 1]
        psi[i] = scale * acc
        out[i] += 2.0 * coeffs[1] * psi[i]
    two_scale = 2.0 * scale
    for k in range(2, coeffs.size):
        c2 = 2.0 * coeffs[k]
        # psi_prev <- 2 B psi + psi_prev, then swap roles
        for i in range(n):
            acc = 0.0
            if i > 0:
                acc += sub[i - 1] * psi[i - 1]
            if i < n - 1:
                acc -= sub[i] * psi[i + 1]
            val = two_scale * acc + psi_prev[i]
            psi_prev[i] = val
            out[i] += c2 * val
        psi, psi_prev = psi_prev, psi
    return out


def expm_action_chebyshev(op: SkewTridiagonal, v: np.ndarray, t: float, tol: float = 1e-12) -> np.ndarray:
    rho = op.spectral_radius() * (1.0 + 1e-6)
    if rho == 0.0 or t == 0.0:
        return np.array(v, dtype=float if np.isrealobj(v) else complex, copy=True)
    z = t * rho
    coeffs = chebyshev_terms(abs(z), tol / 10.0)
    scale = math.copysign(1.0, z) / rho  # B = sign(t) A / rho, psi uses |z|
    if v.ndim == 1 and v.dtype == np.float64 and v.size > 1:
        # fused single-pass kernel for the long stacked sector vectors
        return _chebyshev_1d(op.sub, v, coeffs, scale)
    psi_prev = np.array(v, copy=True)
    out = coeffs[0] * psi_prev
    if coeffs.size == 1:
        return out
    psi = scale * op.matvec(psi_prev)
    out += 2.0 * coeffs[1] * psi
    for k in range(2, coeffs.size):
        psi_next = 2.0 * scale * op.matvec(psi)
        psi_next += psi_prev
        psi_prev, psi = psi, psi_next
        out += 2.0 * coeffs[k] * psi
    return out


def expm_action_taylor(op: SkewTridiagonal, v: np.ndarray, t: float, tol: float = 1e-12) -> np.ndarray:
    """Scaled truncated Taylor series with a term-norm stopping rule."""
    norm = op.one_norm() * abs(t)
    n_sub = max(1, int(math.ceil(norm / 2.0)))
    h = t / n_sub
    out = np.array(v, copy=True)
    for _ in range(n_sub):
        term = out.copy()
        acc = out.copy()
        base = max(np.linalg.norm(out), 1e-300)
        for j in range(1, 200):
            term = (h / j) * op.matvec(term)
            acc += term
            if np.linalg.norm(term) < tol / 10.0 * base / n_sub:
                break
        out = acc
    return out


def expm_action(op: SkewTridiagonal, v: np.ndarray, t: float, tol: float = 1e-12, method: str = "chebyshev") -> np.ndarray:
    """exp(t A) v along axis 0 of ``v``."""
    if method == "chebyshev":
        return expm_action_chebyshev(op, v, t, tol)
    if method == "taylor":
        return expm_action_taylor(op, v, t, tol)
    raise ValueError(f"unknown method {method!r}")


def propagate(
    op: SkewTridiagonal,
    v: np.ndarray,
    times: Sequence[float],
    tol: float = 1e-12,
    method: str = "chebyshev",
) -> Iterator[tuple[float, np.ndarray]]:
    """Yield (t, exp(t A) v) for increasing ``times``, chaining steps from t = 0."""
    times = np.asarray(times, dtype=float)
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ValueError("times must be non-negative and non-decreasing")
    t_prev, state = 0.0, np.array(v, copy=True)
    for t in times:
        if t > t_prev:
            state = expm_action(op, state, t - t_prev, tol, method)
            t_prev = t
        yield float(t), state
