"""Energy, Lyapunov functional, energy-identity residual and decay fits.

The delay line holds cell values ``z_1..z_N`` on ``((k-1) d_rho, k d_rho]``;
the inflow value ``z_0`` is the boundary velocity.  Integrals over the delay
line are exact for that piecewise-constant reconstruction, which is also the
weighting of the Gram matrix, so ``energy == 0.5 * ||V||_G**2`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .discretization import DiscreteState, GeneratorPair, Mesh, full_mass
from .fem import tridiag_matvec
from .params import SystemParams

EPSILON_GRID = tuple(2.0 ** -k for k in range(1, 25))
MONOTONE_RTOL = 1e-10


@dataclass(frozen=True)
class EnergySample:
    t: float
    E: float
    E1: float
    Lyap: float
    dE_residual: float


@dataclass(frozen=True)
class DecayFit:
    gamma_hat: float
    C_hat: float
    r_squared: float
    window: tuple[float, float]


@dataclass(frozen=True)
class EpsilonChoice:
    epsilon: float
    beta1: float
    beta2: float


class NoAdmissibleEpsilon(RuntimeError):
    """No epsilon in the search grid gives a decreasing, equivalent functional."""


def _xi(params: SystemParams) -> float:
    if params.xi is None:
        raise ValueError("params.xi must be set")
    return params.xi


def lyapunov_weights(mesh: Mesh, tau: float) -> np.ndarray:
    """Exact cell integrals of exp(-2 tau rho) over the delay-line cells."""
    edges = np.exp(-2.0 * tau * mesh.rho)
    return (edges[:-1] - edges[1:]) / (2.0 * tau)


def _quadratics(state: DiscreteState, mesh: Mesh):
    ops = mesh.operators()
    Ku = tridiag_matvec(ops.k_diag, ops.k_off, state.u)
    Mv = tridiag_matvec(ops.m_diag, ops.m_off, state.v)
    Mv[-1] += state.v[-1]
    return Ku, Mv


def energy1(state: DiscreteState, mesh: Mesh) -> float:
    """||u'||^2 + ||u_t||^2 + u_t(L)^2."""
    Ku, Mv = _quadratics(state, mesh)
    return float(state.u @ Ku + state.v @ Mv)


def delay_integral(state: DiscreteState, mesh: Mesh) -> float:
    z = state.z[1:]
    return mesh.d_rho * float(z @ z)


def energy(state: DiscreteState, params: SystemParams, mesh: Mesh) -> float:
    return 0.5 * energy1(state, mesh) + 0.5 * _xi(params) * delay_integral(state, mesh)


def lyapunov_coefficient(state: DiscreteState, params: SystemParams, mesh: Mesh) -> float:
    """The factor multiplying epsilon in the Lyapunov functional."""
    Ku, Mv = _quadratics(state, mesh)
    z = state.z[1:]
    w = lyapunov_weights(mesh, params.tau)
    return float(state.u @ Mv + 0.5 * params.alpha * (state.u @ Ku) + _xi(params) * (w @ (z * z)))


def lyapunov(state: DiscreteState, params: SystemParams, mesh: Mesh, epsilon: float) -> float:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return energy(state, params, mesh) + epsilon * lyapunov_coefficient(state, params, mesh)


def energy_rate(state: DiscreteState, params: SystemParams, mesh: Mesh) -> float:
    """Right-hand side of the semidiscrete energy identity.

    -alpha|v'|^2 - (mu1 - xi/2tau) v_n^2 - (xi/2tau) z_N^2 - mu2 v_n z_N
    minus the upwind dissipation (xi/2tau) sum (z_k - z_{k-1})^2.
    """
    ops = mesh.operators()
    xi, tau = _xi(params), params.tau
    v = state.v
    vb = v[-1]
    z = state.z.copy()
    z[0] = vb
    vKv = float(v @ tridiag_matvec(ops.k_diag, ops.k_off, v))
    jumps = np.diff(z)
    return (
        -params.alpha * vKv
        - (params.mu1 - xi / (2 * tau)) * vb * vb
        - (xi / (2 * tau)) * z[-1] ** 2
        - params.mu2 * vb * z[-1]
        - (xi / (2 * tau)) * float(jumps @ jumps)
    )


def energy_identity_residual(times, E, rate) -> np.ndarray:
    """|central-difference dE/dt - identity right-hand side| at interior samples."""
    times = np.asarray(times, dtype=float)
    E = np.asarray(E, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if times.shape[0] < 3:
        raise ValueError("need at least 3 samples for a central difference")
    dEdt = (E[2:] - E[:-2]) / (times[2:] - times[:-2])
    return np.abs(dEdt - rate[1:-1])


def fit_decay(times, E, window: Optional[Sequence[float]] = None) -> DecayFit:
    """Least-squares line through (t, log E) on the window."""
    times = np.asarray(times, dtype=float)
    E = np.asarray(E, dtype=float)
    if window is None:
        window = (times[-1] / 10.0, times[-1])
    t0, t1 = float(window[0]), float(window[1])
    sel = (times >= t0 - 1e-12) & (times <= t1 + 1e-12)
    t, e = times[sel], E[sel]
    if t.shape[0] < 5:
        raise ValueError(f"need at least 5 samples in window [{t0}, {t1}], got {t.shape[0]}")
    if np.any(e <= 0):
        raise ValueError("energy must be positive on the fit window")
    y = np.log(e)
    tm = t.mean()
    dt = t - tm
    slope = float(dt @ (y - y.mean()) / (dt @ dt))
    intercept = float(y.mean() - slope * tm)
    resid = y - (intercept + slope * t)
    ss_tot = float((y - y.mean()) @ (y - y.mean()))
    ss_res = float(resid @ resid)
    if ss_tot <= 1e-30 * max(1.0, float(y @ y)):
        r2 = 1.0
    else:
        r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return DecayFit(gamma_hat=-slope, C_hat=math.exp(intercept), r_squared=r2, window=(t0, t1))


def lyapunov_form(pair: GeneratorPair) -> np.ndarray:
    """Dense symmetric H with 0.5 V^T H V equal to the epsilon coefficient."""
    mesh, params, ops = pair.mesh, pair.params, pair.ops
    if mesh is None or params is None or ops is None:
        raise ValueError("pair must come from discretization.assemble")
    n = mesh.n_cells
    H = np.zeros((pair.size, pair.size))
    M = full_mass(ops).toarray()
    H[:n, n:2 * n] = M
    H[n:2 * n, :n] = M
    H[:n, :n] = params.alpha * ops.stiffness().toarray()
    w = lyapunov_weights(mesh, params.tau)
    H[2 * n:, 2 * n:] = np.diag(2.0 * params.xi * w)
    return H


def _nonincreasing(values: np.ndarray, rtol: float) -> bool:
    if values.shape[0] < 2:
        return True
    scale = np.maximum(np.abs(values[:-1]), 1e-300)
    return bool(np.all(values[1:] <= values[:-1] + rtol * scale))


def epsilon_search(pair: GeneratorPair, params: SystemParams, mesh: Mesh, probe,
                   grid: Sequence[float] = EPSILON_GRID, rtol: float = MONOTONE_RTOL) -> EpsilonChoice:
    """Largest grid epsilon making L nonincreasing along ``probe`` and equivalent to E.

    ``probe`` needs ``energy`` and ``lyap_coeff`` arrays (a Trajectory).  The
    equivalence constants are the extreme generalized eigenvalues of the
    Lyapunov quadratic form against the energy Gram matrix, so they hold for
    every state, not only the sampled ones.
    """
    E = np.asarray(probe.energy, dtype=float)
    P = np.asarray(probe.lyap_coeff, dtype=float)
    H = lyapunov_form(pair)
    G = pair.G.toarray()
    ev = linalg.eigh(H, G, eigvals_only=True)
    lo, hi = float(ev[0]), float(ev[-1])
    for eps in sorted(grid, reverse=True):
        beta1 = 1.0 + eps * lo
        beta2 = 1.0 + eps * hi
        if not beta1 > 0:
            continue
        if _nonincreasing(E + eps * P, rtol):
            return EpsilonChoice(float(eps), beta1, beta2)
    raise NoAdmissibleEpsilon(
        "no epsilon in the grid gives a nonincreasing Lyapunov functional; "
        "parameters are probably outside the proved regimes"
    )
