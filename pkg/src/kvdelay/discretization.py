"""Semidiscretization of the delayed Kelvin-Voigt wave system on (0, L).

Packed state ordering is ``[u_1..u_n, v_1..v_n, z_1..z_N]`` with ``n`` the
number of spatial cells and ``N`` the number of delay-line cells.  The
Dirichlet node ``x_0`` and the delay-line inflow ``z_0 = v_n`` are eliminated,
so the packed length is ``2n + N``.

The generator is stored in Gram-weighted form ``GA = G @ A``, which is sparse
even though ``A`` itself carries the inverse mass matrix:

    u' = v
    M v' = -K u - alpha K v - (mu1 v_n + mu2 z_N) e_n
    z_k' = -(z_k - z_{k-1}) / (tau * d_rho),   k = 1..N

with ``M`` the interior mass plus a unit point mass at ``x = L`` and
``G = diag(K, M, xi * d_rho * I)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from .fem import P1Operators, p1_operators
from .params import SystemParams


@dataclass(frozen=True)
class Mesh:
    n_cells: int
    n_rho: int
    length: float = 1.0
    lumped: bool = False

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ValueError(f"n_cells must be an integer >= 2, got {self.n_cells}")
        if int(self.n_rho) != self.n_rho or self.n_rho < 2:
            raise ValueError(f"n_rho must be an integer >= 2, got {self.n_rho}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / self.n_cells

    @property
    def d_rho(self) -> float:
        return 1.0 / self.n_rho

    @property
    def x(self) -> np.ndarray:
        """Unknown spatial nodes x_1..x_n."""
        return self.h * np.arange(1, self.n_cells + 1)

    @property
    def rho(self) -> np.ndarray:
        """Delay-line nodes rho_k = k * d_rho, k = 0..N."""
        return self.d_rho * np.arange(self.n_rho + 1)

    @property
    def packed_size(self) -> int:
        return 2 * self.n_cells + self.n_rho

    def operators(self) -> P1Operators:
        return p1_operators(float(self.length), int(self.n_cells), bool(self.lumped))


@dataclass
class DiscreteState:
    """Semigroup state (u, v, w, z); ``w`` and ``z[0]`` duplicate ``v[-1]``."""

    u: np.ndarray
    v: np.ndarray
    w: float
    z: np.ndarray

    def scaled(self, c: float) -> "DiscreteState":
        return DiscreteState(c * self.u, c * self.v, c * self.w, c * self.z)


def pack(state: DiscreteState) -> np.ndarray:
    return np.concatenate([state.u, state.v, state.z[1:]])


def unpack(vec: np.ndarray, mesh: Mesh) -> DiscreteState:
    vec = np.asarray(vec, dtype=float)
    n, N = mesh.n_cells, mesh.n_rho
    if vec.shape != (mesh.packed_size,):
        raise ValueError(f"packed vector has shape {vec.shape}, expected ({mesh.packed_size},)")
    u = vec[:n].copy()
    v = vec[n:2 * n].copy()
    z = np.empty(N + 1)
    z[0] = v[-1]
    z[1:] = vec[2 * n:]
    return DiscreteState(u, v, float(v[-1]), z)


def zero_state(mesh: Mesh) -> DiscreteState:
    return unpack(np.zeros(mesh.packed_size), mesh)


@dataclass(frozen=True, eq=False)
class GeneratorPair:
    """Discrete generator ``A`` and the Gram matrix ``G`` of the energy inner product.

    ``GA`` is the sparse product ``G @ A``.  Pairs built by :func:`assemble`
    also carry the mesh, parameters and P1 operators so that the structured
    time-stepping kernel can be used.
    """

    G: sparse.csr_matrix
    GA: sparse.csr_matrix
    mesh: Optional[Mesh] = None
    params: Optional[SystemParams] = None
    ops: Optional[P1Operators] = None

    @classmethod
    def from_matrix(cls, A, G=None) -> "GeneratorPair":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("generator must be square")
        G = np.eye(A.shape[0]) if G is None else np.atleast_2d(np.asarray(G, dtype=float))
        if G.shape != A.shape:
            raise ValueError("G and A must have the same shape")
        return cls(sparse.csr_matrix(G), sparse.csr_matrix(G @ A))

    @property
    def size(self) -> int:
        return self.G.shape[0]

    @functools.cached_property
    def A(self) -> np.ndarray:
        """Dense generator ``G^{-1} GA``."""
        from scipy import linalg

        return linalg.solve(self.G.toarray(), self.GA.toarray(), assume_a="pos")

    def inner(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(x @ (self.G @ y))

    def norm(self, x: np.ndarray) -> float:
        return math.sqrt(max(self.inner(x, x), 0.0))


def delay_line_operator(n_rho: int, tau: float) -> tuple[sparse.csr_matrix, np.ndarray]:
    """First-order upwind transport ``z' = D z + b z_0`` on the delay line."""
    if n_rho < 2:
        raise ValueError("n_rho must be >= 2")
    c = n_rho / tau
    D = sparse.diags([np.full(n_rho - 1, c), np.full(n_rho, -c)], [-1, 0], format="csr")
    b = np.zeros(n_rho)
    b[0] = c
    return D, b


def full_mass(ops: P1Operators) -> sparse.csr_matrix:
    """Interior mass plus the unit point mass at x = L."""
    return (ops.mass() + ops.boundary_gram()).tocsr()


def assemble(params: SystemParams, mesh: Mesh) -> GeneratorPair:
    if mesh.n_cells < 2:
        raise ValueError("mesh too coarse: n_cells must be >= 2")
    if params.xi is None:
        raise ValueError("params.xi must be set before assembly (see params.resolve_xi)")
    if not math.isclose(params.length, mesh.length, rel_tol=1e-12):
        raise ValueError(f"params.length={params.length} differs from mesh.length={mesh.length}")
    n, N = mesh.n_cells, mesh.n_rho
    ops = mesh.operators()
    K = ops.stiffness()
    M = full_mass(ops)
    xi, tau = params.xi, params.tau

    e_b = sparse.csr_matrix(([1.0], ([n - 1], [0])), shape=(n, 1))
    boundary = (e_b @ e_b.T).tocsr()
    # v-row coupling to z_N
    vz = sparse.csr_matrix(([-params.mu2], ([n - 1], [N - 1])), shape=(n, N))

    D, b = delay_line_operator(N, tau)
    w_rho = xi * mesh.d_rho
    zz = w_rho * D
    zv = sparse.csr_matrix((w_rho * b[:1], ([0], [n - 1])), shape=(N, n))

    GA = sparse.bmat(
        [
            [None, K, None],
            [-K, -params.alpha * K - params.mu1 * boundary, vz],
            [None, zv, zz],
        ],
        format="csr",
        dtype=float,
    )
    G = sparse.block_diag([K, M, w_rho * sparse.identity(N)], format="csr")
    return GeneratorPair(G=G, GA=GA, mesh=mesh, params=params, ops=ops)


def _as_vector_fn(f, *args) -> np.ndarray:
    out = f(*args)
    return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(*args).shape).copy()


def initial_state(
    u0: Callable,
    u1: Callable,
    f0: Callable,
    mesh: Mesh,
    tau: float,
    atol: float = 1e-10,
) -> DiscreteState:
    """Nodal sampling of the initial displacement, velocity and velocity history.

    ``f0(x, s)`` gives the boundary velocity at past time ``s`` in (-tau, 0);
    the delay line is ``z_k = f0(L, -tau * rho_k)`` for k >= 1, and
    ``z_0 = u1(L)`` by compatibility.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    at_zero = float(np.asarray(u0(np.array([0.0])), dtype=float).ravel()[0])
    if abs(at_zero) > atol:
        raise ValueError(f"u0(0) = {at_zero} violates the Dirichlet condition u(0) = 0")
    x = mesh.x
    u = _as_vector_fn(u0, x)
    v = _as_vector_fn(u1, x)
    rho = mesh.rho
    z = np.empty(mesh.n_rho + 1)
    z[0] = v[-1]
    z[1:] = _as_vector_fn(f0, np.full(mesh.n_rho, mesh.length), -tau * rho[1:])
    return DiscreteState(u, v, float(v[-1]), z)
