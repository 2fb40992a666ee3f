# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled estimator iteration loop.

Semantically identical to ``lims._kernel_py.iterate`` (chip-normalized
quantities, same rank guard and ridge, same clamp/collision handling);
see that module for the contract.  The compiled loop avoids per-iteration
Python/NumPy dispatch, which dominates at the typical problem size
(N ~ 31 lags, M <= 8 paths, hundreds of iterations per observation).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, floor, sqrt

cnp.import_array()

RANK_TOL = 1e-20
RIDGE_REL = 1e-8

cdef double _RANK_TOL = 1e-20
cdef double _RIDGE_REL = 1e-8


cdef inline double _acf_val(double x, int kind, double[::1] table,
                            double z0, double dz, Py_ssize_t ntab) nogil:
    cdef double ax
    if kind == 0:
        ax = fabs(x)
        return 1.0 - ax if ax < 1.0 else 0.0
    return _cubic(x, z0, dz, table, ntab)


cdef inline double _acf_dderiv(double x, int kind, double[::1] dtable,
                               double z0, double dz, Py_ssize_t ntab) nogil:
    if kind == 0:
        if x > -1.0 and x <= 0.0:
            return -1.0
        if x > 0.0 and x <= 1.0:
            return 1.0
        return 0.0
    return -_cubic(x, z0, dz, dtable, ntab)


cdef inline double _cubic(double x, double z0, double dz,
                          double[::1] table, Py_ssize_t n) nogil:
    cdef double pos = (x - z0) / dz
    cdef Py_ssize_t i
    cdef double u, v0, v1, v2, v3
    if pos < 0.0 or pos > n - 1:
        return 0.0
    i = <Py_ssize_t>floor(pos)
    if i < 1:
        i = 1
    elif i > n - 3:
        i = n - 3
    u = pos - i
    v0 = table[i - 1]
    v1 = table[i]
    v2 = table[i + 1]
    v3 = table[i + 2]
    return 0.5 * (2.0 * v1 + (v2 - v0) * u
                  + (2.0 * v0 - 5.0 * v1 + 4.0 * v2 - v3) * u * u
                  + (3.0 * (v1 - v2) + v3 - v0) * u * u * u)


cdef int _cholesky(double[:, ::1] gram, double[:, ::1] low, Py_ssize_t m) nogil:
    """Lower Cholesky of the real SPD gram; returns 0 on success."""
    cdef Py_ssize_t i, j, k
    cdef double s
    for i in range(m):
        for j in range(i + 1):
            s = gram[i, j]
            for k in range(j):
                s -= low[i, k] * low[j, k]
            if i == j:
                if s <= 0.0:
                    return 1
                low[i, i] = sqrt(s)
            else:
                low[i, j] = s / low[j, j]
    return 0


cdef int _solve_gram(double[:, ::1] gram, double[:, ::1] low,
                     double complex[::1] rhs, double complex[::1] out,
                     Py_ssize_t m) nogil:
    """Solve gram @ out = rhs with the shared rank guard; 1 if ridged."""
    cdef Py_ssize_t i, j
    cdef double tr = 0.0, pmin, pmax, p
    cdef double complex s
    cdef int deficient = 0
    for i in range(m):
        tr += gram[i, i]
    if tr <= 0.0:
        for i in range(m):
            out[i] = 0.0
        return 1
    if _cholesky(gram, low, m):
        deficient = 1
    else:
        pmin = low[0, 0] * low[0, 0]
        pmax = pmin
        for i in range(1, m):
            p = low[i, i] * low[i, i]
            if p < pmin:
                pmin = p
            if p > pmax:
                pmax = p
        if pmin <= _RANK_TOL * pmax:
            deficient = 1
    if deficient:
        for i in range(m):
            gram[i, i] += _RIDGE_REL * tr / m
        _cholesky(gram, low, m)
    for i in range(m):
        s = rhs[i]
        for j in range(i):
            s -= low[i, j] * out[j]
        out[i] = s / low[i, i]
    for i in range(m - 1, -1, -1):
        s = out[i]
        for j in range(i + 1, m):
            s -= low[j, i] * out[j]
        out[i] = s / low[i, i]
    return deficient


cdef double _lambda_max(double[:, ::1] gram, double[::1] v, double[::1] w,
                        Py_ssize_t m) nogil:
    cdef Py_ssize_t i, j, sweep
    cdef double nw, lam
    for i in range(m):
        v[i] = 1.0 / sqrt(<double>m)
    for sweep in range(8):
        nw = 0.0
        for i in range(m):
            w[i] = 0.0
            for j in range(m):
                w[i] += gram[i, j] * v[j]
            nw += w[i] * w[i]
        nw = sqrt(nw)
        if nw == 0.0:
            return 0.0
        for i in range(m):
            v[i] = w[i] / nw
    lam = 0.0
    for i in range(m):
        nw = 0.0
        for j in range(m):
            nw += gram[i, j] * v[j]
        lam += v[i] * nw
    return lam


def iterate(y_w, lags, weight, t0, c0, int iterations, double beta,
            int coeff_mode, double alpha, int delay_mode,
            int acf_kind, table, dtable, double z0, double dz,
            double clamp_lo, double clamp_hi,
            double collide_tol, double collide_sep,
            double stop_tol, int stop_count, bint record):
    """Compiled twin of ``lims._kernel_py.iterate`` (same signature)."""
    cdef double complex[::1] yv = np.ascontiguousarray(y_w, dtype=np.complex128)
    cdef double[::1] lagv = np.ascontiguousarray(lags, dtype=np.float64)
    cdef Py_ssize_t n = lagv.shape[0]
    cdef Py_ssize_t m = len(t0)

    cdef bint has_w = weight is not None
    cdef double[:, ::1] wv
    if has_w:
        wv = np.ascontiguousarray(weight, dtype=np.float64)
    else:
        wv = np.zeros((1, 1))

    tab_arr = np.ascontiguousarray(table, dtype=np.float64)
    dtab_arr = np.ascontiguousarray(dtable, dtype=np.float64)
    cdef double[::1] tabv = tab_arr
    cdef double[::1] dtabv = dtab_arr
    cdef Py_ssize_t ntab = tabv.shape[0]

    t_arr = np.array(t0, dtype=np.float64)
    c_arr = np.array(c0, dtype=np.complex128)
    cdef double[::1] tv = t_arr
    cdef double complex[::1] cv = c_arr

    a_arr = np.empty((n, m))
    aw_arr = np.empty((n, m))
    dbw_arr = np.empty((n, m))
    gram_arr = np.empty((m, m))
    low_arr = np.empty((m, m))
    rhs_arr = np.empty(m, dtype=np.complex128)
    resid_arr = np.empty(n, dtype=np.complex128)
    grad_arr = np.empty(m)
    pv_arr = np.empty(m)
    pw_arr = np.empty(m)
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] aw = aw_arr
    cdef double[:, ::1] dbw = dbw_arr
    cdef double[:, ::1] gram = gram_arr
    cdef double[:, ::1] low = low_arr
    cdef double complex[::1] rhs = rhs_arr
    cdef double complex[::1] resid = resid_arr
    cdef double[::1] grad = grad_arr
    cdef double[::1] pv = pv_arr
    cdef double[::1] pw = pw_arr

    t_hist = np.empty((iterations, m)) if record else None
    c_hist = np.empty((iterations, m), dtype=np.complex128) if record else None
    cdef double[:, ::1] thv = t_hist if record else np.zeros((1, 1))
    cdef double complex[:, ::1] chv = c_hist if record else \
        np.zeros((1, 1), dtype=np.complex128)

    cdef Py_ssize_t it, i, j, k, done = 0
    cdef int ridge_iters = 0, still = 0
    cdef double step, moved, d, lam
    cdef double complex s, acc

    for it in range(iterations):
        # A(t), weighted
        for i in range(n):
            for j in range(m):
                a[i, j] = _acf_val(lagv[i] - tv[j], acf_kind, tabv, z0, dz, ntab)
        if has_w:
            for i in range(n):
                for j in range(m):
                    d = 0.0
                    for k in range(n):
                        d += wv[i, k] * a[k, j]
                    aw[i, j] = d
        else:
            for i in range(n):
                for j in range(m):
                    aw[i, j] = a[i, j]

        for i in range(m):
            for j in range(m):
                d = 0.0
                for k in range(n):
                    d += aw[k, i] * aw[k, j]
                gram[i, j] = d

        if coeff_mode == 0:
            for i in range(m):
                s = 0.0
                for k in range(n):
                    s += aw[k, i] * yv[k]
                rhs[i] = s
            ridge_iters += _solve_gram(gram, low, rhs, cv, m)
        else:
            step = alpha
            if step <= 0.0:
                lam = _lambda_max(gram, pv, pw, m)
                step = 0.5 / lam if lam > 0.0 else 0.0
            for k in range(n):
                s = 0.0
                for j in range(m):
                    s += aw[k, j] * cv[j]
                resid[k] = yv[k] - s
            for i in range(m):
                s = 0.0
                for k in range(n):
                    s += aw[k, i] * resid[k]
                cv[i] = cv[i] + step * s

        for k in range(n):
            s = 0.0
            for j in range(m):
                s += aw[k, j] * cv[j]
            resid[k] = yv[k] - s

        # weighted delay-derivative columns; grad = Re(conj(c) * dbw^T r)
        for i in range(n):
            for j in range(m):
                a[i, j] = _acf_dderiv(lagv[i] - tv[j], acf_kind, dtabv,
                                      z0, dz, ntab)
        if has_w:
            for i in range(n):
                for j in range(m):
                    d = 0.0
                    for k in range(n):
                        d += wv[i, k] * a[k, j]
                    dbw[i, j] = d
        else:
            for i in range(n):
                for j in range(m):
                    dbw[i, j] = a[i, j]
        for j in range(m):
            acc = 0.0
            for k in range(n):
                acc += dbw[k, j] * resid[k]
            grad[j] = (cv[j].conjugate() * acc).real

        moved = 0.0
        for j in range(m):
            if delay_mode == 1:
                step = beta * ((grad[j] > 0.0) - (grad[j] < 0.0))
            else:
                step = beta * grad[j]
            d = tv[j] + step
            if d < clamp_lo:
                d = clamp_lo
            elif d > clamp_hi:
                d = clamp_hi
            pv[j] = d
        for i in range(m - 1):
            for j in range(i + 1, m):
                if fabs(pv[i] - pv[j]) < collide_tol:
                    pv[i] = pv[j] - collide_sep
        for j in range(m):
            if pv[j] < clamp_lo:
                pv[j] = clamp_lo
            elif pv[j] > clamp_hi:
                pv[j] = clamp_hi
            d = fabs(pv[j] - tv[j])
            if d > moved:
                moved = d
            tv[j] = pv[j]

        done = it + 1
        if record:
            for j in range(m):
                thv[it, j] = tv[j]
                chv[it, j] = cv[j]
        if stop_tol > 0.0:
            still = still + 1 if moved < stop_tol else 0
            if still >= stop_count:
                break

    if record:
        return c_arr, t_arr, done, ridge_iters, t_hist[:done], c_hist[:done]
    return c_arr, t_arr, done, ridge_iters, None, None
