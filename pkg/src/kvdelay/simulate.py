"""Implicit theta-scheme time integration of V' = A V.

Two routes produce the same iterates:

* ``method="generic"`` factors ``G - theta*dt*GA`` with a sparse LU and works
  for any :class:`GeneratorPair`;
* ``method="kernel"`` uses the structured march in :mod:`kvdelay.kernels`
  (compiled when available) and needs a pair built by ``assemble``.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from . import functionals, kernels
from .discretization import DiscreteState, GeneratorPair, Mesh, delay_line_operator, pack, unpack
from .params import SystemParams

DEFAULT_STRIDE = 10


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    t_end: float
    theta: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0.5, 1], got {self.theta}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @classmethod
    def default_for(cls, tau: float, n_rho: int, t_end: float, theta: float = 0.5) -> "TimeGrid":
        """dt = tau / (2 n_rho): two steps per delay-line cell transit."""
        return cls(dt=tau / (2.0 * n_rho), t_end=t_end, theta=theta)


@dataclass
class Trajectory:
    times: np.ndarray
    energy: np.ndarray
    energy1: np.ndarray
    lyap_coeff: np.ndarray
    rate: np.ndarray
    snapshot_steps: np.ndarray
    snapshots: np.ndarray
    mesh: Optional[Mesh] = None
    params: Optional[SystemParams] = None
    epsilon: Optional[float] = None
    backend: str = "generic"

    @property
    def snapshot_times(self) -> np.ndarray:
        return self.times[self.snapshot_steps]

    @property
    def states(self) -> list[DiscreteState]:
        if self.mesh is None:
            raise ValueError("trajectory has no mesh; use .snapshots")
        return [unpack(s, self.mesh) for s in self.snapshots]

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    def lyapunov(self, epsilon: Optional[float] = None) -> np.ndarray:
        eps = self.epsilon if epsilon is None else epsilon
        if eps is None:
            raise ValueError("no epsilon configured")
        return self.energy + eps * self.lyap_coeff

    def residuals(self) -> np.ndarray:
        return functionals.energy_identity_residual(self.times, self.energy, self.rate)

    def samples(self, epsilon: Optional[float] = None) -> list[functionals.EnergySample]:
        eps = self.epsilon if epsilon is None else epsilon
        lyap = self.lyapunov(eps) if eps is not None else np.full_like(self.energy, np.nan)
        res = np.full_like(self.energy, np.nan)
        if self.times.shape[0] >= 3:
            res[1:-1] = self.residuals()
        return [
            functionals.EnergySample(float(t), float(e), float(e1), float(l), float(r))
            for t, e, e1, l, r in zip(self.times, self.energy, self.energy1, lyap, res)
        ]


class ThetaStepper:
    """Cached sparse LU of ``G - theta*dt*GA`` and the explicit operator."""

    def __init__(self, pair: GeneratorPair, dt: float, theta: float):
        if not dt > 0 or not 0.5 <= theta <= 1.0:
            raise ValueError("need dt > 0 and theta in [0.5, 1]")
        self.dt = dt
        self.theta = theta
        left = (pair.G - theta * dt * pair.GA).tocsc()
        self.right = (pair.G + (1.0 - theta) * dt * pair.GA).tocsr()
        try:
            self.lu = splinalg.splu(left)
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"theta-step matrix is singular: {exc}") from exc

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.lu.solve(self.right @ x)


_stepper_cache: "weakref.WeakKeyDictionary[GeneratorPair, dict]" = weakref.WeakKeyDictionary()


def _stepper(pair: GeneratorPair, dt: float, theta: float) -> ThetaStepper:
    per_pair = _stepper_cache.setdefault(pair, {})
    key = (float(dt), float(theta))
    if key not in per_pair:
        per_pair[key] = ThetaStepper(pair, dt, theta)
    return per_pair[key]


def step(state, pair: GeneratorPair, grid: TimeGrid):
    """One theta-step; accepts and returns either a packed vector or a DiscreteState."""
    as_state = isinstance(state, DiscreteState)
    x = pack(state) if as_state else np.asarray(state, dtype=float)
    if x.shape != (pair.size,):
        raise ValueError(f"state has length {x.shape}, generator has size {pair.size}")
    out = _stepper(pair, grid.dt, grid.theta)(x)
    if as_state:
        if pair.mesh is None:
            raise ValueError("pair has no mesh to unpack into")
        return unpack(out, pair.mesh)
    return out


def _generic_march(pair: GeneratorPair, x0: np.ndarray, grid: TimeGrid, stride: int):
    stepper = ThetaStepper(pair, grid.dt, grid.theta)
    n_steps = grid.n_steps
    stride = max(int(stride), 1)
    snap_steps = list(range(0, n_steps + 1, stride))
    if snap_steps[-1] != n_steps:
        snap_steps.append(n_steps)
    snaps = np.empty((len(snap_steps), x0.shape[0]))
    E = np.empty(n_steps + 1)
    E1 = np.full(n_steps + 1, np.nan)
    P = np.full(n_steps + 1, np.nan)
    Q = np.empty(n_steps + 1)
    structured = pair.mesh is not None and pair.params is not None

    def record(i, x):
        if structured:
            s = unpack(x, pair.mesh)
            E[i] = functionals.energy(s, pair.params, pair.mesh)
            E1[i] = functionals.energy1(s, pair.mesh)
            P[i] = functionals.lyapunov_coefficient(s, pair.params, pair.mesh)
            Q[i] = functionals.energy_rate(s, pair.params, pair.mesh)
        else:
            E[i] = 0.5 * float(x @ (pair.G @ x))
            Q[i] = float(x @ (pair.GA @ x))

    x = x0.copy()
    pos = 0
    for i in range(n_steps + 1):
        if i > 0:
            x = stepper(x)
        record(i, x)
        if pos < len(snap_steps) and snap_steps[pos] == i:
            snaps[pos] = x
            pos += 1
    return E, E1, P, Q, snaps, np.asarray(snap_steps, dtype=np.int64)


def integrate(
    initial: Union[DiscreteState, np.ndarray],
    pair: GeneratorPair,
    grid: TimeGrid,
    stride: int = DEFAULT_STRIDE,
    epsilon: Optional[float] = None,
    method: str = "auto",
    backend: Optional[Callable] = None,
) -> Trajectory:
    """Run the theta-scheme from ``initial`` and sample the functionals every step.

    ``backend`` overrides the kernel implementation (used by the benchmark).
    """
    x0 = pack(initial) if isinstance(initial, DiscreteState) else np.asarray(initial, dtype=float).copy()
    if x0.shape != (pair.size,):
        raise ValueError(f"initial state has length {x0.shape}, generator has size {pair.size}")
    structured = pair.mesh is not None and pair.params is not None and pair.ops is not None
    if method == "auto":
        method = "kernel" if structured else "generic"
    if method == "kernel":
        if not structured:
            raise ValueError("kernel method needs a pair from discretization.assemble")
        march = backend or kernels.march
        p, mesh, ops = pair.params, pair.mesh, pair.ops
        m_diag = np.array(ops.m_diag)
        m_diag[-1] += 1.0
        _, E, E1, P, Q, snaps, snap_steps = march(
            ops.k_diag, ops.k_off, m_diag, ops.m_off,
            functionals.lyapunov_weights(mesh, p.tau), x0,
            p.alpha, p.mu1, p.mu2, p.tau, p.xi, mesh.d_rho,
            grid.dt, grid.theta, grid.n_steps, stride,
        )
        used = kernels.BACKEND if backend is None else getattr(backend, "__module__", "custom")
    elif method == "generic":
        E, E1, P, Q, snaps, snap_steps = _generic_march(pair, x0, grid, stride)
        used = "generic"
    else:
        raise ValueError(f"unknown method {method!r}")
    return Trajectory(
        times=grid.times,
        energy=np.asarray(E),
        energy1=np.asarray(E1),
        lyap_coeff=np.asarray(P),
        rate=np.asarray(Q),
        snapshot_steps=np.asarray(snap_steps),
        snapshots=np.asarray(snaps),
        mesh=pair.mesh,
        params=pair.params,
        epsilon=epsilon,
        backend=used,
    )


def transport_delay_line(
    signal: Callable[[float], float],
    history: Callable[[np.ndarray], np.ndarray],
    n_rho: int,
    tau: float,
    t_end: float,
    dt: Optional[float] = None,
    theta: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """Drive the delay line alone with a prescribed boundary velocity.

    ``history(s)`` gives the boundary velocity for s in (-tau, 0).  Returns the
    delay-line nodes rho_1..rho_N and the values z_1..z_N at ``t_end``; the
    exact solution is ``signal(t_end - tau*rho)`` once ``t_end > tau``.
    """
    grid = TimeGrid(dt if dt is not None else tau / (2.0 * n_rho), t_end, theta)
    D, b = delay_line_operator(n_rho, tau)
    eye = sparse.identity(n_rho, format="csc")
    lu = splinalg.splu((eye - grid.theta * grid.dt * D).tocsc())
    right = (eye + (1.0 - grid.theta) * grid.dt * D).tocsr()
    rho = np.arange(1, n_rho + 1) / n_rho
    z = np.asarray(history(-tau * rho), dtype=float).copy()
    t = 0.0
    for _ in range(grid.n_steps):
        inflow = grid.theta * signal(t + grid.dt) + (1.0 - grid.theta) * signal(t)
        z = lu.solve(right @ z + grid.dt * inflow * b)
        t += grid.dt
    return rho, z
