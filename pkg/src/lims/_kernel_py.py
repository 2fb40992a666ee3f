"""NumPy implementation of the estimator iteration loop.

This is the fallback for (and the semantic twin of) the compiled kernel
in ``lims._kernel``; both are selected through ``lims._backend``.  All
quantities here are chip-normalized: lags, delays, the step size and the
ACF derivative are expressed in chip units, which is the scaling under
which the delay gradient update with the stock step size is well
behaved (and under which the two-sample special case reduces exactly to
the early-late power difference).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

RANK_TOL = 1e-20          # on Cholesky pivots, ~ (1e-10 singular-value ratio)^2
RIDGE_REL = 1e-8

COEFF_EXACT_LS = 0
COEFF_GRADIENT = 1
DELAY_PLAIN = 0
DELAY_SIGNED = 1

_EMPTY = np.zeros(0)


def _acf_values(x, kind, table, z0, dz):
    if kind == 0:
        return np.where(np.abs(x) < 1.0, 1.0 - np.abs(x), 0.0)
    return _cubic(x, z0, dz, table)


def _acf_delay_derivative(x, kind, dtable, z0, dz):
    if kind == 0:
        return np.where((x > -1.0) & (x <= 0.0), -1.0,
                        np.where((x > 0.0) & (x <= 1.0), 1.0, 0.0))
    return -_cubic(x, z0, dz, dtable)


def _cubic(x, z0, dz, table):
    pos = (x - z0) / dz
    n = table.size
    i = np.floor(pos).astype(np.int64)
    inside = (pos >= 0.0) & (pos <= n - 1)
    i = np.clip(i, 1, n - 3)
    u = pos - i
    v0, v1, v2, v3 = table[i - 1], table[i], table[i + 1], table[i + 2]
    out = 0.5 * (2.0 * v1 + (v2 - v0) * u
                 + (2.0 * v0 - 5.0 * v1 + 4.0 * v2 - v3) * u * u
                 + (3.0 * (v1 - v2) + v3 - v0) * u * u * u)
    return np.where(inside, out, 0.0)


def solve_gram(gram: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, bool]:
    """Solve gram @ c = rhs by Cholesky with a rank guard.

    A failed factorization or a pivot ratio below RANK_TOL marks the
    system rank-deficient; it is then re-solved with a ridge of
    RIDGE_REL * trace/M on the diagonal and flagged.
    """
    m = gram.shape[0]
    tr = gram.trace().real
    if tr <= 0.0:
        return np.zeros(m, dtype=np.complex128), True
    deficient = False
    try:
        low = np.linalg.cholesky(gram)
        piv = np.abs(np.diag(low)) ** 2
        deficient = piv.min() <= RANK_TOL * piv.max()
    except np.linalg.LinAlgError:
        deficient = True
    if deficient:
        low = np.linalg.cholesky(gram + (RIDGE_REL * tr / m) * np.eye(m))
    z = solve_triangular(low, rhs, lower=True)
    c = solve_triangular(low.conj().T, z, lower=False)
    return c, deficient


def _lambda_max(gram: np.ndarray, sweeps: int = 8) -> float:
    m = gram.shape[0]
    v = np.full(m, 1.0 / np.sqrt(m), dtype=np.complex128)
    for _ in range(sweeps):
        w = gram @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    return float((v.conj() @ (gram @ v)).real)


def iterate(y_w, lags, weight, t0, c0, iterations, beta,
            coeff_mode, alpha, delay_mode,
            acf_kind, table, dtable, z0, dz,
            clamp_lo, clamp_hi, collide_tol, collide_sep,
            stop_tol, stop_count, record):
    """Run the alternating coefficient/delay iteration.

    y_w is the (already weighted) observation; ``weight`` is the N x N
    weighting matrix applied to the model matrices each iteration, or
    None for the identity.  Returns
    ``(c, t, iterations_run, ridge_iterations, t_hist, c_hist)`` with the
    histories populated only when ``record`` is true.
    """
    lags = np.asarray(lags, dtype=np.float64)
    t = np.array(t0, dtype=np.float64)
    c = np.array(c0, dtype=np.complex128)
    m = t.size

    t_hist = np.empty((iterations, m)) if record else None
    c_hist = np.empty((iterations, m), dtype=np.complex128) if record else None

    ridge_iters = 0
    still = 0
    done = 0
    for it in range(iterations):
        diff = lags[:, None] - t[None, :]
        a = _acf_values(diff, acf_kind, table, z0, dz)
        aw = a if weight is None else weight @ a

        if coeff_mode == COEFF_EXACT_LS:
            gram = aw.conj().T @ aw
            c, deficient = solve_gram(gram, aw.conj().T @ y_w)
            if deficient:
                ridge_iters += 1
        else:
            gram = aw.conj().T @ aw
            step = alpha if alpha > 0.0 else _safe_alpha(gram)
            c = c + step * (aw.conj().T @ (y_w - aw @ c))

        resid = y_w - aw @ c
        b = c[None, :] * _acf_delay_derivative(diff, acf_kind, dtable, z0, dz)
        bw = b if weight is None else weight @ b
        grad = (bw.conj().T @ resid).real

        if delay_mode == DELAY_SIGNED:
            t_new = t + beta * np.sign(grad)
        else:
            t_new = t + beta * grad
        np.clip(t_new, clamp_lo, clamp_hi, out=t_new)
        for i in range(m - 1):
            for j in range(i + 1, m):
                if abs(t_new[i] - t_new[j]) < collide_tol:
                    t_new[i] = t_new[j] - collide_sep
        np.clip(t_new, clamp_lo, clamp_hi, out=t_new)

        moved = np.max(np.abs(t_new - t)) if m else 0.0
        t = t_new
        done = it + 1
        if record:
            t_hist[it] = t
            c_hist[it] = c
        if stop_tol > 0.0:
            still = still + 1 if moved < stop_tol else 0
            if still >= stop_count:
                break

    if record:
        return c, t, done, ridge_iters, t_hist[:done], c_hist[:done]
    return c, t, done, ridge_iters, None, None


def _safe_alpha(gram):
    lam = _lambda_max(gram)
    return 0.5 / lam if lam > 0.0 else 0.0
