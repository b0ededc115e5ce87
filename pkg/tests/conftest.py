"""Shared brute-force oracles: dense ladder operators on a truncated three-mode space."""
from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm

from trilinear.algebra import Monomial, OperatorPoly


def ladder(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)


class DenseModes:
    """a_p, a_s, a_i as dense matrices on a dims[0] x dims[1] x dims[2] grid."""

    def __init__(self, dims=(6, 6, 6)):
        self.dims = tuple(dims)
        eye = [np.eye(d) for d in dims]
        self.ops = []
        for j, d in enumerate(dims):
            parts = [ladder(d) if k == j else eye[k] for k in range(3)]
            self.ops.append(np.kron(np.kron(parts[0], parts[1]), parts[2]))

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def monomial(self, m: Monomial) -> np.ndarray:
        out = np.eye(self.size)
        mp = np.linalg.matrix_power
        for a, (n_dag, n_ann) in zip(self.ops, ((m.c, m.d), (m.e, m.f), (m.g, m.h))):
            out = out @ mp(a.T, n_dag) @ mp(a, n_ann)
        return out

    def poly(self, p: OperatorPoly) -> np.ndarray:
        out = np.zeros((self.size, self.size), dtype=complex)
        for mono, coef in p.terms.items():
            out = out + complex(coef) * self.monomial(mono)
        return out

    def index(self, n_p: int, n_s: int, n_i: int) -> int:
        return (n_p * self.dims[1] + n_s) * self.dims[2] + n_i

    def low_block(self, margin: int) -> np.ndarray:
        """Indices with every occupation below dim - margin (away from the cutoff)."""
        return np.array(
            [
                self.index(p, s, i)
                for p in range(self.dims[0] - margin)
                for s in range(self.dims[1] - margin)
                for i in range(self.dims[2] - margin)
            ]
        )

    def generator(self) -> np.ndarray:
        """K = a_p a_s^dag a_i^dag - h.c.; psi(tau) = exp(tau K) psi(0)."""
        a_p, a_s, a_i = self.ops
        k = a_p @ a_s.T @ a_i.T
        return k - k.T

    def coherent_vacuum(self, alpha0: float) -> np.ndarray:
        from scipy.stats import poisson

        n = np.arange(self.dims[0])
        amp = np.exp(0.5 * poisson.logpmf(n, alpha0**2))
        psi = np.zeros(self.size)
        for k, c in enumerate(amp):
            psi[self.index(k, 0, 0)] = c
        return psi

    def evolve(self, psi0: np.ndarray, tau: float) -> np.ndarray:
        return expm(tau * self.generator()) @ psi0

    def expect(self, psi: np.ndarray, mat: np.ndarray) -> complex:
        return complex(np.vdot(psi, mat @ psi))


@pytest.fixture(scope="session")
def dense_modes():
    return DenseModes((6, 6, 6))


# --- acceptance report ----------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
