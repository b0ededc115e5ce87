"""Exact dynamics in the fixed-photon-number sectors of the trilinear Hamiltonian.

Both N_p + N_s and N_p + N_i are conserved, so a pump Fock state |N, 0, 0>
stays in span{|N-k, k, k>, k = 0..N}.  With amplitudes c_k the Schroedinger
equation is dc/dtau = M c where M is real, skew-symmetric and tridiagonal
with M[k+1, k] = (k+1) sqrt(N-k).  A coherent pump is a Poisson superposition
of such sectors, giving amplitudes beta[m, k] on |m, k, k>.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np
from scipy.stats import poisson

from .expm import SkewTridiagonal, expm_action, propagate

POISSON_THRESHOLD = 1e-16


def poisson_cutoffs(alpha0: float, threshold: float = POISSON_THRESHOLD) -> tuple[int, int]:
    """Smallest and largest n with Poisson(alpha0^2) probability above ``threshold``."""
    mean = float(alpha0) ** 2
    if mean == 0.0:
        return 0, 0
    log_thr = math.log(threshold)
    width = int(10 * math.sqrt(mean) + 60)
    n = np.arange(max(0, int(mean) - width), int(mean) + width + 1)
    logp = poisson.logpmf(n, mean)
    while logp[-1] > log_thr:
        width *= 2
        n = np.arange(max(0, int(mean) - width), int(mean) + width + 1)
        logp = poisson.logpmf(n, mean)
    keep = n[logp > log_thr]
    if keep.size == 0:
        mode = int(np.argmax(logp))
        return int(n[mode]), int(n[mode])
    return int(keep[0]), int(keep[-1])


def sector_generator(n: int) -> SkewTridiagonal:
    """Generator M of the sector with n total pump-equivalent photons."""
    k = np.arange(n, dtype=float)
    return SkewTridiagonal((k + 1.0) * np.sqrt(n - k))


def evolve_sector(
    n: int,
    c0: Sequence[float] | None = None,
    taus: Sequence[float] = (0.0,),
    tol: float = 1e-12,
    method: str = "chebyshev",
) -> np.ndarray:
    """Amplitudes c(tau) = exp(tau M) c0 for every tau; shape (len(taus), n+1).

    ``c0`` defaults to the pure pump state (1, 0, ..., 0).  Times must be
    non-decreasing; the propagation is chained from one time to the next.
    """
    gen = sector_generator(n)
    if c0 is None:
        c0 = np.zeros(n + 1)
        c0[0] = 1.0
    c0 = np.asarray(c0, dtype=float)
    if c0.shape != (n + 1,):
        raise ValueError(f"c0 must have length {n + 1}")
    return np.array([state for _, state in propagate(gen, c0, taus, tol, method)])


@dataclass(frozen=True)
class SuperposedState:
    """Amplitudes beta[m, k] on |m>_p |k>_s |k>_i.

    Rows cover pump photons 0..n2+pad_m and columns twin photons
    0..n2+pad_k.  ``phases`` records (phi0, theta) from :func:`apply_gauge`.
    """

    alpha0: float
    tau: float
    n1: int
    n2: int
    beta: np.ndarray
    pad_m: int
    pad_k: int
    phases: tuple[float, float] = (0.0, 0.0)
    transformed: bool = False

    @property
    def norm(self) -> float:
        return float(math.sqrt(np.sum(np.abs(self.beta) ** 2)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.beta.shape


class SectorEnsemble:
    """All sectors n1..n2 stacked into one block-diagonal skew generator.

    Couplings vanish at block junctions, so one Chebyshev propagation evolves
    every sector at once; the initial vector holds sqrt(p_n) at each block
    start.  States for a monotone time grid are produced by chaining.
    """

    def __init__(self, alpha0: float, cutoffs: tuple[int, int] | None = None, pad: int = 6):
        self.alpha0 = float(alpha0)
        self.n1, self.n2 = cutoffs if cutoffs is not None else poisson_cutoffs(alpha0)
        self.pad = pad
        sizes = np.arange(self.n1, self.n2 + 1) + 1
        self.offsets = np.concatenate(([0], np.cumsum(sizes)))
        total = int(self.offsets[-1])
        sub = np.zeros(total - 1)
        rows = np.empty(total, dtype=np.intp)
        cols = np.empty(total, dtype=np.intp)
        for j, n in enumerate(range(self.n1, self.n2 + 1)):
            lo = self.offsets[j]
            k = np.arange(n + 1)
            if n:
                sub[lo : lo + n] = (k[:-1] + 1.0) * np.sqrt(n - k[:-1])
            rows[lo : lo + n + 1] = n - k
            cols[lo : lo + n + 1] = k
        # the largest sector bounds the spectrum of every smaller one
        rho = sector_generator(self.n2).spectral_radius() if self.n2 else 0.0
        self.generator = SkewTridiagonal(sub, rho=rho)
        self.rows, self.cols = rows, cols
        n = np.arange(self.n1, self.n2 + 1)
        self.weights = np.exp(0.5 * poisson.logpmf(n, self.alpha0**2)) if self.alpha0 > 0 else np.ones(1)
        self.v0 = np.zeros(total)
        self.v0[self.offsets[:-1]] = self.weights

    @property
    def captured_mass(self) -> float:
        return float(np.sum(self.weights**2))

    def to_state(self, vec: np.ndarray, tau: float) -> SuperposedState:
        dim = self.n2 + 1 + self.pad
        beta = np.zeros((dim, dim), dtype=vec.dtype)
        beta[self.rows, self.cols] = vec
        return SuperposedState(self.alpha0, float(tau), self.n1, self.n2, beta, self.pad, self.pad)

    def sector(self, vec: np.ndarray, n: int) -> np.ndarray:
        j = n - self.n1
        return vec[self.offsets[j] : self.offsets[j + 1]] / self.weights[j]

    def vectors(self, taus: Sequence[float], tol: float = 1e-12, method: str = "chebyshev") -> Iterator[tuple[float, np.ndarray]]:
        return propagate(self.generator, self.v0, taus, tol, method)

    def states(self, taus: Sequence[float], tol: float = 1e-12, method: str = "chebyshev") -> Iterator[SuperposedState]:
        for tau, vec in self.vectors(taus, tol, method):
            yield self.to_state(vec, tau)


def assemble(alpha0: float, taus: Sequence[float], tol: float = 1e-12, pad: int = 6) -> list[SuperposedState]:
    """SuperposedState at every tau (kept in memory; use SectorEnsemble.states to stream)."""
    return list(SectorEnsemble(alpha0, pad=pad).states(taus, tol))


def apply_gauge(state: SuperposedState, phi0: float, theta: float) -> SuperposedState:
    """Multiply beta[m, k] by exp(i phi0 m) exp(i (theta + phi0) k).

    This is the state for pump phase phi0 and coupling phase theta; a
    normal-ordered moment picks up exp(i phi0 (d-c)) exp(i (theta+phi0) (f-e)).
    """
    m = np.arange(state.beta.shape[0])[:, None]
    k = np.arange(state.beta.shape[1])[None, :]
    phase = np.exp(1j * (phi0 * m + (theta + phi0) * k))
    p0, t0 = state.phases
    return replace(state, beta=state.beta * phase, phases=(p0 + phi0, t0 + theta))


class NormLossError(RuntimeError):
    """The padded grid could not hold the transformed state to the requested accuracy."""


def frame_transform(
    state: SuperposedState,
    alpha: float,
    eta: float,
    pad: int | None = None,
    loss_tol: float = 1e-15,
    max_retries: int = 2,
    tol: float = 1e-12,
) -> SuperposedState:
    """Apply D(-alpha) to the pump and S(-eta) to the signal-idler pair.

    The truncated generators are skew-symmetric, so the transformed vector
    keeps its norm exactly; the truncation error instead shows up as mass
    pushed against the grid edge.  If the outer quarter of the padding holds
    more than ``loss_tol`` of probability the pad grows and the transform is
    retried.
    """
    if pad is None:
        pad = int(math.ceil(6.0 * math.sqrt(max(state.n2, 1)) + 4.0 * abs(alpha)))
    beta0 = state.beta
    for _ in range(max_retries + 1):
        rows = state.n2 + 1 + pad
        cols = state.n2 + 1 + pad
        beta = np.zeros((rows, cols), dtype=beta0.dtype)
        r0, c0 = min(rows, beta0.shape[0]), min(cols, beta0.shape[1])
        beta[:r0, :c0] = beta0[:r0, :c0]
        if alpha != 0.0:
            disp = SkewTridiagonal(-alpha * np.sqrt(np.arange(1, rows, dtype=float)))
            beta = expm_action(disp, beta, 1.0, tol)
        if eta != 0.0:
            sq = SkewTridiagonal(-eta * np.arange(1, cols, dtype=float))
            beta = expm_action(sq, beta.T, 1.0, tol).T
        edge = max(1, pad // 4)
        lost = float(np.sum(np.abs(beta[-edge:, :]) ** 2) + np.sum(np.abs(beta[:, -edge:]) ** 2))
        if lost <= loss_tol:
            return replace(state, beta=beta, pad_m=pad, pad_k=pad, transformed=True)
        pad *= 2
    raise NormLossError(f"edge mass {lost:.3g} exceeds {loss_tol:g} after {max_retries} retries")


# --- binary checkpoint ----------------------------------------------------

_MAGIC = b"TRLNBETA"
_HEADER = struct.Struct("<8sdd5q")


def save_state(state: SuperposedState, path) -> None:
    """Write the documented little-endian dump: header, then row-major complex128 beta."""
    beta = np.ascontiguousarray(state.beta, dtype="<c16")
    rows, cols = beta.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, state.alpha0, state.tau, state.n1, state.n2, state.pad_m, rows, cols))
        fh.write(beta.tobytes(order="C"))


def load_state(path) -> SuperposedState:
    with open(path, "rb") as fh:
        magic, alpha0, tau, n1, n2, pad, rows, cols = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC:
            raise ValueError("not a state dump")
        beta = np.frombuffer(fh.read(), dtype="<c16").reshape(rows, cols).copy()
    return SuperposedState(alpha0, tau, n1, n2, beta, pad, cols - n2 - 1)
