"""Pure-Python theta-scheme march for the assembled delay-wave system.

Same algorithm and signature as the compiled ``_march`` extension.  Each step
eliminates the displacement and the delay line so that only one symmetric
tridiagonal solve remains:

* the delay line is lower bidiagonal, so ``z_N^+ = q**N * v_n^+ + zeta``;
* ``u^+ = u + dt*(theta*v^+ + (1-theta)*v)`` is substituted into the
  momentum equation;
* the remaining matrix ``M + (theta^2 dt^2 + theta dt alpha) K`` plus a
  rank-one boundary term is factored once.

Per-step quantities returned alongside the states:

``E``   half the squared energy norm
``E1``  ``||u'||^2 + ||v||^2 + v_n^2``
``P``   coefficient of epsilon in the Lyapunov functional
``Q``   energy rate ``<A V, V>_G`` evaluated at the state
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack
from scipy.signal import lfilter


def _tmv(diag, off, x):
    y = diag * x
    y[:-1] += off * x[1:]
    y[1:] += off * x[:-1]
    return y


def march(k_diag, k_off, m_diag, m_off, wexp, state0,
          alpha, mu1, mu2, tau, xi, d_rho, dt, theta, n_steps, stride):
    """Advance ``n_steps`` theta-steps.

    ``m_diag`` must already include the unit boundary point mass.  Returns
    ``(final, E, E1, P, Q, snapshots, snap_steps)``.
    """
    k_diag = np.asarray(k_diag, dtype=float)
    k_off = np.asarray(k_off, dtype=float)
    m_diag = np.asarray(m_diag, dtype=float)
    m_off = np.asarray(m_off, dtype=float)
    wexp = np.asarray(wexp, dtype=float)
    n = k_diag.shape[0]
    N = wexp.shape[0]
    x = np.array(state0, dtype=float, copy=True)
    if x.shape != (2 * n + N,):
        raise ValueError("state length does not match operator sizes")
    n_steps = int(n_steps)
    stride = max(int(stride), 1)

    sigma = dt / (tau * d_rho)
    denom = 1.0 + theta * sigma
    q = theta * sigma / denom
    qpow = q ** np.arange(1, N + 1)
    qN = qpow[-1]
    c_stiff = theta * theta * dt * dt + theta * dt * alpha

    t_diag = m_diag + c_stiff * k_diag
    t_off = m_off + c_stiff * k_off
    t_diag[-1] += theta * dt * (mu1 + mu2 * qN)
    dl, d, du, du2, ipiv, info = lapack.dgttrf(t_off, t_diag, t_off)
    if info != 0:
        raise np.linalg.LinAlgError("tridiagonal step matrix is singular")

    snap_idx = list(range(0, n_steps + 1, stride))
    if snap_idx[-1] != n_steps:
        snap_idx.append(n_steps)
    snaps = np.empty((len(snap_idx), x.shape[0]))
    E = np.empty(n_steps + 1)
    E1 = np.empty(n_steps + 1)
    P = np.empty(n_steps + 1)
    Q = np.empty(n_steps + 1)

    def record(i, u, v, z):
        Ku = _tmv(k_diag, k_off, u)
        Kv = _tmv(k_diag, k_off, v)
        Mv = _tmv(m_diag, m_off, v)
        uKu = u @ Ku
        e1 = uKu + v @ Mv
        zz = d_rho * (z @ z)
        E1[i] = e1
        E[i] = 0.5 * e1 + 0.5 * xi * zz
        P[i] = u @ Mv + 0.5 * alpha * uKu + xi * (wexp @ (z * z))
        vb = v[-1]
        dz = z.copy()
        dz[0] -= vb
        dz[1:] -= z[:-1]
        Q[i] = (-alpha * (v @ Kv) - mu1 * vb * vb - mu2 * vb * z[-1]
                - (xi / tau) * (z @ dz))
        return Ku, Kv, Mv

    u, v, z = x[:n], x[n:2 * n], x[2 * n:]
    Ku, Kv, Mv = record(0, u, v, z)
    snap_pos = 0
    if snap_idx[0] == 0:
        snaps[0] = x
        snap_pos = 1

    filt_b = [1.0 / denom]
    filt_a = [1.0, -q]
    for step in range(1, n_steps + 1):
        vb = v[-1]
        zN = z[-1]
        # explicit part of the delay line, z_0 = v_n
        zprev = np.empty(N)
        zprev[0] = vb
        zprev[1:] = z[:-1]
        r = z - (1.0 - theta) * sigma * (z - zprev)
        sweep = lfilter(filt_b, filt_a, r)
        zeta = sweep[-1]

        rhs = Mv - (1.0 - theta) * dt * (Ku + alpha * Kv)
        rhs[-1] -= (1.0 - theta) * dt * (mu1 * vb + mu2 * zN)
        rhs -= theta * dt * (Ku + dt * (1.0 - theta) * Kv)
        rhs[-1] -= theta * dt * mu2 * zeta
        v_new, info = lapack.dgttrs(dl, d, du, du2, ipiv, rhs)
        if info != 0:
            raise np.linalg.LinAlgError("tridiagonal solve failed")

        x[:n] = u + dt * (theta * v_new + (1.0 - theta) * v)
        x[n:2 * n] = v_new
        x[2 * n:] = sweep + qpow * v_new[-1]
        u, v, z = x[:n], x[n:2 * n], x[2 * n:]
        Ku, Kv, Mv = record(step, u, v, z)
        if snap_pos < len(snap_idx) and snap_idx[snap_pos] == step:
            snaps[snap_pos] = x
            snap_pos += 1

    return x.copy(), E, E1, P, Q, snaps, np.asarray(snap_idx, dtype=np.int64)
