"""P1 finite-element matrices on the interval (0, L).

Nodes are x_i = i*h, i = 0..n.  The Dirichlet node x_0 is eliminated, so the
reduced matrices act on the n values at x_1..x_n, the last of which sits on
the dynamic boundary x = L.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import sparse


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class P1Operators:
    """Symmetric tridiagonal stiffness and interior mass, stored as bands."""

    length: float
    n_cells: int
    lumped: bool
    k_diag: np.ndarray
    k_off: np.ndarray
    m_diag: np.ndarray
    m_off: np.ndarray

    @property
    def h(self) -> float:
        return self.length / self.n_cells

    def stiffness(self) -> sparse.csr_matrix:
        return _tridiag(self.k_diag, self.k_off)

    def mass(self) -> sparse.csr_matrix:
        return _tridiag(self.m_diag, self.m_off)

    def boundary_gram(self) -> sparse.csr_matrix:
        """Point mass at x = L (counting measure on the one-point boundary)."""
        n = self.n_cells
        return sparse.csr_matrix(([1.0], ([n - 1], [n - 1])), shape=(n, n))


def _tridiag(diag: np.ndarray, off: np.ndarray) -> sparse.csr_matrix:
    return sparse.diags([off, diag, off], [-1, 0, 1], format="csr")


def full_p1_matrices(length: float, n_cells: int, lumped: bool = False):
    """Stiffness and mass on all n+1 nodes, before any boundary condition."""
    if n_cells < 1 or length <= 0:
        raise ValueError("need n_cells >= 1 and length > 0")
    h = length / n_cells
    n1 = n_cells + 1
    k_diag = np.full(n1, 2.0 / h)
    k_diag[[0, -1]] = 1.0 / h
    k_off = np.full(n_cells, -1.0 / h)
    if lumped:
        m_diag = np.full(n1, h)
        m_diag[[0, -1]] = h / 2.0
        m_off = np.zeros(n_cells)
    else:
        m_diag = np.full(n1, 2.0 * h / 3.0)
        m_diag[[0, -1]] = h / 3.0
        m_off = np.full(n_cells, h / 6.0)
    return _tridiag(k_diag, k_off), _tridiag(m_diag, m_off)


@functools.lru_cache(maxsize=128)
def p1_operators(length: float, n_cells: int, lumped: bool = False) -> P1Operators:
    """Reduced P1 operators with u(0) = 0 eliminated.

    Results are cached and the band arrays are read-only.
    """
    if n_cells < 2:
        raise ValueError(f"n_cells must be >= 2, got {n_cells}")
    if not length > 0:
        raise ValueError(f"length must be positive, got {length}")
    h = length / n_cells
    n = n_cells
    k_diag = np.full(n, 2.0 / h)
    k_diag[-1] = 1.0 / h
    k_off = np.full(n - 1, -1.0 / h)
    if lumped:
        m_diag = np.full(n, h)
        m_diag[-1] = h / 2.0
        m_off = np.zeros(n - 1)
    else:
        m_diag = np.full(n, 2.0 * h / 3.0)
        m_diag[-1] = h / 3.0
        m_off = np.full(n - 1, h / 6.0)
    return P1Operators(
        length=float(length),
        n_cells=int(n_cells),
        lumped=bool(lumped),
        k_diag=_frozen(k_diag),
        k_off=_frozen(k_off),
        m_diag=_frozen(m_diag),
        m_off=_frozen(m_off),
    )


def tridiag_matvec(diag: np.ndarray, off: np.ndarray, x: np.ndarray) -> np.ndarray:
    y = diag * x
    y[:-1] += off * x[1:]
    y[1:] += off * x[:-1]
    return y
