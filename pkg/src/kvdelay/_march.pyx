# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled theta-scheme march; see ``_march_py`` for the algorithm."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline void _tmv(const double[::1] diag, const double[::1] off,
                      const double[::1] x, double[::1] y, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    if n == 1:
        y[0] = diag[0] * x[0]
        return
    y[0] = diag[0] * x[0] + off[0] * x[1]
    for i in range(1, n - 1):
        y[i] = off[i - 1] * x[i - 1] + diag[i] * x[i] + off[i] * x[i + 1]
    y[n - 1] = off[n - 2] * x[n - 2] + diag[n - 1] * x[n - 1]


cdef inline double _dot(const double[::1] a, const double[::1] b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s += a[i] * b[i]
    return s


def march(k_diag, k_off, m_diag, m_off, wexp, state0,
          double alpha, double mu1, double mu2, double tau, double xi,
          double d_rho, double dt, double theta, n_steps, stride):
    cdef const double[::1] kd = np.ascontiguousarray(k_diag, dtype=np.float64)
    cdef const double[::1] ko = np.ascontiguousarray(k_off, dtype=np.float64)
    cdef const double[::1] md = np.ascontiguousarray(m_diag, dtype=np.float64)
    cdef const double[::1] mo = np.ascontiguousarray(m_off, dtype=np.float64)
    cdef const double[::1] we = np.ascontiguousarray(wexp, dtype=np.float64)
    cdef Py_ssize_t n = kd.shape[0]
    cdef Py_ssize_t N = we.shape[0]
    cdef Py_ssize_t nst = n_steps
    cdef Py_ssize_t strd = max(int(stride), 1)
    if n < 2:
        raise ValueError("need at least two spatial unknowns")

    xarr = np.array(state0, dtype=np.float64, copy=True)
    if xarr.shape[0] != 2 * n + N:
        raise ValueError("state length does not match operator sizes")
    cdef double[::1] x = xarr
    cdef double[::1] u = xarr[:n]
    cdef double[::1] v = xarr[n:2 * n]
    cdef double[::1] z = xarr[2 * n:]

    cdef double sigma = dt / (tau * d_rho)
    cdef double denom = 1.0 + theta * sigma
    cdef double q = theta * sigma / denom
    cdef double c_stiff = theta * theta * dt * dt + theta * dt * alpha
    cdef double qN = q ** N

    # Thomas factorization of the symmetric tridiagonal step matrix (SPD, no pivoting)
    piv_arr = np.empty(n)
    mult_arr = np.empty(n)
    toff_arr = np.empty(max(n - 1, 1))
    cdef double[::1] piv = piv_arr
    cdef double[::1] mult = mult_arr
    cdef double[::1] toff = toff_arr
    cdef Py_ssize_t i, k, step
    for i in range(n - 1):
        toff[i] = mo[i] + c_stiff * ko[i]
    piv[0] = md[0] + c_stiff * kd[0]
    mult[0] = 0.0
    cdef double a_i
    for i in range(1, n):
        a_i = md[i] + c_stiff * kd[i]
        if i == n - 1:
            a_i += theta * dt * (mu1 + mu2 * qN)
        mult[i] = toff[i - 1] / piv[i - 1]
        a_i -= mult[i] * toff[i - 1]
        piv[i] = a_i
    for i in range(n):
        if not piv[i] > 0.0:
            raise np.linalg.LinAlgError("tridiagonal step matrix is not positive definite")

    snap_list = list(range(0, nst + 1, strd))
    if snap_list[len(snap_list) - 1] != nst:
        snap_list.append(nst)
    cdef Py_ssize_t n_snap = len(snap_list)
    snap_steps = np.asarray(snap_list, dtype=np.int64)
    cdef const cnp.int64_t[::1] ss = snap_steps
    snaps_arr = np.empty((n_snap, 2 * n + N))
    cdef double[:, ::1] snaps = snaps_arr

    E_arr = np.empty(nst + 1)
    E1_arr = np.empty(nst + 1)
    P_arr = np.empty(nst + 1)
    Q_arr = np.empty(nst + 1)
    cdef double[::1] E = E_arr
    cdef double[::1] E1 = E1_arr
    cdef double[::1] P = P_arr
    cdef double[::1] Q = Q_arr

    Ku_arr = np.empty(n)
    Kv_arr = np.empty(n)
    Mv_arr = np.empty(n)
    rhs_arr = np.empty(n)
    vnew_arr = np.empty(n)
    r_arr = np.empty(N)
    cdef double[::1] Ku = Ku_arr
    cdef double[::1] Kv = Kv_arr
    cdef double[::1] Mv = Mv_arr
    cdef double[::1] rhs = rhs_arr
    cdef double[::1] vnew = vnew_arr
    cdef double[::1] r = r_arr

    cdef double uKu, e1, zz, pz, qz, zprev, vb, zN, zeta, s, vbn
    cdef Py_ssize_t snap_pos = 0
    cdef double one_m = 1.0 - theta
    cdef double inv_denom = 1.0 / denom

    with nogil:
        step = 0
        while True:
            # per-step functionals
            _tmv(kd, ko, u, Ku, n)
            _tmv(kd, ko, v, Kv, n)
            _tmv(md, mo, v, Mv, n)
            uKu = _dot(u, Ku, n)
            e1 = uKu + _dot(v, Mv, n)
            zz = 0.0
            pz = 0.0
            qz = 0.0
            vb = v[n - 1]
            zprev = vb
            for k in range(N):
                zz += z[k] * z[k]
                pz += we[k] * z[k] * z[k]
                qz += z[k] * (z[k] - zprev)
                zprev = z[k]
            E1[step] = e1
            E[step] = 0.5 * e1 + 0.5 * xi * d_rho * zz
            P[step] = _dot(u, Mv, n) + 0.5 * alpha * uKu + xi * pz
            Q[step] = (-alpha * _dot(v, Kv, n) - mu1 * vb * vb - mu2 * vb * z[N - 1]
                       - (xi / tau) * qz)
            if snap_pos < n_snap and ss[snap_pos] == step:
                for i in range(2 * n + N):
                    snaps[snap_pos, i] = x[i]
                snap_pos += 1
            if step == nst:
                break
            step += 1

            # delay-line sweep with zero inflow; keep r for the final pass
            zN = z[N - 1]
            zprev = vb
            s = 0.0
            for k in range(N):
                r[k] = z[k] - one_m * sigma * (z[k] - zprev)
                zprev = z[k]
                s = q * s + r[k] * inv_denom
            zeta = s

            for i in range(n):
                rhs[i] = (Mv[i] - one_m * dt * (Ku[i] + alpha * Kv[i])
                          - theta * dt * (Ku[i] + dt * one_m * Kv[i]))
            rhs[n - 1] -= one_m * dt * (mu1 * vb + mu2 * zN) + theta * dt * mu2 * zeta

            # Thomas solve
            vnew[0] = rhs[0]
            for i in range(1, n):
                vnew[i] = rhs[i] - mult[i] * vnew[i - 1]
            vnew[n - 1] = vnew[n - 1] / piv[n - 1]
            i = n - 2
            while i >= 0:
                vnew[i] = (vnew[i] - toff[i] * vnew[i + 1]) / piv[i]
                i -= 1

            for i in range(n):
                u[i] = u[i] + dt * (theta * vnew[i] + one_m * v[i])
                v[i] = vnew[i]
            vbn = vnew[n - 1]
            s = vbn
            for k in range(N):
                s = q * s + r[k] * inv_denom
                z[k] = s

    return xarr.copy(), E_arr, E1_arr, P_arr, Q_arr, snaps_arr, snap_steps
