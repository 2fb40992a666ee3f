"""Iterative least-squares multipath estimator.

Alternates an exact (or gradient) least-squares solve for the complex
path coefficients with a gradient step on the path delays, on a
linearization of the correlator-output model around the current delay
iterate.  With the whitening weight G = C^(-1/2) the least-squares
weight is the maximum-likelihood criterion for the correlated correlator
noise.

Public operations work in SI units (seconds); the iteration itself runs
chip-normalized in a backend kernel (see ``lims._kernel_py``), compiled
when available.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernel
from ._kernel_py import solve_gram
from .observation import CorrelatorObservation, LagGrid, noise_covariance
from .signal_model import AcfModel, acf_derivative, acf_eval

WHITENER_EIG_FLOOR = 1e-10
COLLIDE_TOL_CHIPS = 1e-6
COLLIDE_SEP_CHIPS = 1e-3
EARLY_STOP_TOL_CHIPS = 1e-4
EARLY_STOP_RUN = 10


@dataclass(frozen=True)
class LimsConfig:
    """Estimator settings.

    M                    : assumed number of paths
    iterations           : fixed iteration budget (default 500)
    beta                 : delay step in seconds; None = grid spacing / 64
    alpha                : gradient coefficient step; None = 0.5/lambda_max
    coeff_update         : "exact-ls" | "gradient"
    delay_update         : "signed" | "plain"
    whitening            : apply G = C^(-1/2) (maximum likelihood)
    validation_threshold : per-path power fraction below which a path is
                           discarded from the first-arrival decision
    initial_delays       : explicit t0 in seconds; None = the stock grid
                           (endpoints +/-0.5Tc, interior evenly spaced;
                           the window center for M=1)
    early_stop           : optionally stop once delays are still for 10
                           consecutive iterations (within 1e-4 Tc)
    """

    M: int
    iterations: int = 500
    beta: float | None = None
    alpha: float | None = None
    coeff_update: str = "exact-ls"
    delay_update: str = "signed"
    whitening: bool = True
    validation_threshold: float = 0.01
    initial_delays: tuple | None = None
    early_stop: bool = False

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.beta is not None and self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.coeff_update not in ("exact-ls", "gradient"):
            raise ValueError(f"unknown coeff_update {self.coeff_update!r}")
        if self.delay_update not in ("plain", "signed"):
            raise ValueError(f"unknown delay_update {self.delay_update!r}")
        if not 0.0 <= self.validation_threshold < 1.0:
            raise ValueError("validation_threshold must be in [0, 1)")
        if self.initial_delays is not None:
            t0 = tuple(float(v) for v in np.atleast_1d(self.initial_delays))
            if len(t0) != self.M:
                raise ValueError("initial_delays must have length M")
            object.__setattr__(self, "initial_delays", t0)


@dataclass(frozen=True)
class LimsState:
    """Iteration state: coefficients, delays (seconds), iteration count."""

    c: np.ndarray
    t: np.ndarray
    iteration: int = 0


@dataclass(frozen=True)
class Estimate:
    """Validated estimator output.

    first_arrival is the smallest delay among paths whose estimated power
    exceeds the validation threshold, or None when no path qualifies.
    """

    coefficients: np.ndarray
    delays: np.ndarray
    first_arrival: float | None
    valid_mask: np.ndarray
    ridge_iterations: int = 0
    trajectory: tuple | None = field(default=None, repr=False, compare=False)


def build_A(t, grid: LagGrid, acf: AcfModel) -> np.ndarray:
    """Model matrix [A]_{n,m} = R(zeta_n - t_m)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    return np.asarray(acf_eval(acf, grid.lags[:, None] - t[None, :]))


def build_B(c, t, grid: LagGrid, acf: AcfModel) -> np.ndarray:
    """Linearization matrix [B]_{n,m} = c_m * dR(zeta_n - t_m)/dt_m."""
    c = np.atleast_1d(np.asarray(c, dtype=np.complex128))
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    d = np.asarray(acf_derivative(acf, grid.lags[:, None] - t[None, :]))
    return c[None, :] * d


def build_b(c, t, grid: LagGrid, acf: AcfModel) -> np.ndarray:
    """Linearization intercept b = A(t) c - B(c, t) t."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    return build_A(t, grid, acf) @ np.atleast_1d(c) - build_B(c, t, grid, acf) @ t


def whitener(cov: np.ndarray) -> np.ndarray:
    """Inverse square root of a symmetric PSD matrix.

    Eigenvalues below WHITENER_EIG_FLOOR times the largest are floored at
    that value, so G C G^T is the identity on the retained spectrum.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    lam, vec = np.linalg.eigh(cov)
    lam = np.maximum(lam, WHITENER_EIG_FLOOR * lam[-1])
    return (vec / np.sqrt(lam)) @ vec.T


_WHITENER_CACHE: dict = {}


def whitener_for(grid: LagGrid, acf: AcfModel) -> np.ndarray:
    """Cached G = C^(-1/2) for a lag grid and ACF model."""
    key = (grid.lags.tobytes(), acf.cache_key())
    hit = _WHITENER_CACHE.get(key)
    if hit is None:
        hit = whitener(noise_covariance(grid, acf))
        _WHITENER_CACHE[key] = hit
    return hit


def update_coefficients_ls(a_w: np.ndarray, y_w: np.ndarray):
    """Least-squares coefficients for fixed delays (Gram solve).

    Returns (c, degraded): ``degraded`` is True when the system was
    rank-deficient and a ridge was applied.
    """
    a_w = np.asarray(a_w)
    gram = a_w.conj().T @ a_w
    return solve_gram(gram, a_w.conj().T @ np.asarray(y_w))


def update_coefficients_gd(c_prev, a_w, y_w, alpha: float) -> np.ndarray:
    """One gradient refinement of the coefficients with step alpha."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    a_w = np.asarray(a_w)
    c_prev = np.atleast_1d(np.asarray(c_prev, dtype=np.complex128))
    return c_prev + alpha * (a_w.conj().T @ (np.asarray(y_w) - a_w @ c_prev))


def delay_gradient(c, y_w, a_w, b_w) -> np.ndarray:
    """Re{B^H (y - A c)}: the delay-update direction."""
    resid = np.asarray(y_w) - np.asarray(a_w) @ np.atleast_1d(c)
    return (np.asarray(b_w).conj().T @ resid).real


def update_delays(t, c, y_w, a_w, b_w, beta: float, window=None) -> np.ndarray:
    """Plain gradient delay step, clamped to the observation window."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    t_new = np.atleast_1d(np.asarray(t, dtype=np.float64)) \
        + beta * delay_gradient(c, y_w, a_w, b_w)
    if window is not None:
        t_new = np.clip(t_new, window[0], window[1])
    return t_new


def update_delays_signed(t, c, y_w, a_w, b_w, beta: float, window=None) -> np.ndarray:
    """Signed gradient delay step: each delay moves by 0 or +/-beta."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    t_new = np.atleast_1d(np.asarray(t, dtype=np.float64)) \
        + beta * np.sign(delay_gradient(c, y_w, a_w, b_w))
    if window is not None:
        t_new = np.clip(t_new, window[0], window[1])
    return t_new


def initial_delay_grid(m: int, tc: float) -> np.ndarray:
    """Stock t0: endpoints +/-0.5Tc with interior points evenly spaced.

    For a single path the window center is used (the endpoint rule is
    ill-defined for M=1, and 0 keeps every admissible offset reachable).
    """
    if m == 1:
        return np.zeros(1)
    return np.linspace(-0.5 * tc, 0.5 * tc, m)


def _resolve(config: LimsConfig, y: CorrelatorObservation):
    grid, acf = y.grid, y.acf
    if 2 * config.M > grid.n:
        raise ValueError(f"need N >= 2M lags (N={grid.n}, M={config.M})")
    tc = acf.Tc
    beta = config.beta if config.beta is not None else grid.median_spacing() / 64.0
    if config.initial_delays is not None:
        t0 = np.asarray(config.initial_delays, dtype=np.float64)
    else:
        t0 = initial_delay_grid(config.M, tc)
    weight = whitener_for(grid, acf) if config.whitening else None
    y_w = weight @ y.y if weight is not None else y.y
    return tc, beta, t0, weight, y_w


def _kernel_acf_args(acf: AcfModel):
    """Chip-normalized ACF description for the kernels."""
    empty = np.zeros(0)
    if acf.kind == "ideal":
        return 0, empty, empty, 0.0, 1.0
    tc = acf.Tc
    return 1, acf.table, acf.dtable * tc, acf.z0 / tc, acf.dz / tc


def _run_kernel(y_w, weight, t0_chips, c0, config: LimsConfig, tc, beta,
                grid: LagGrid, acf: AcfModel, iterations, record):
    kind, table, dtable, z0, dz = _kernel_acf_args(acf)
    alpha = config.alpha if config.alpha is not None else -1.0
    return kernel.iterate(
        y_w, grid.lags / tc, weight, t0_chips, c0,
        int(iterations), beta / tc,
        0 if config.coeff_update == "exact-ls" else 1, float(alpha),
        0 if config.delay_update == "plain" else 1,
        kind, table, dtable, z0, dz,
        grid.lags[0] / tc, grid.lags[-1] / tc,
        COLLIDE_TOL_CHIPS, COLLIDE_SEP_CHIPS,
        EARLY_STOP_TOL_CHIPS if config.early_stop else 0.0, EARLY_STOP_RUN,
        bool(record),
    )


def validate_paths(c: np.ndarray, t: np.ndarray, threshold: float):
    """Power-threshold path validation and first-arrival selection."""
    power = np.abs(np.atleast_1d(c)) ** 2
    total = power.sum()
    valid = power > threshold * total
    first = float(np.min(np.atleast_1d(t)[valid])) if np.any(valid) else None
    return valid, first


def run(y: CorrelatorObservation, config: LimsConfig,
        record_trajectory: bool = False) -> Estimate:
    """Estimate a multipath channel from one correlator observation.

    Initializes the delay vector (stock grid or explicit), runs the
    configured number of alternating coefficient/delay iterations, and
    applies power validation; first_arrival is the smallest delay among
    valid paths.  With ``record_trajectory`` the per-iteration (delays,
    coefficients) histories are attached to the returned Estimate.
    """
    tc, beta, t0, weight, y_w = _resolve(config, y)
    c0 = np.zeros(config.M, dtype=np.complex128)
    c, t_chips, _, ridge, t_hist, c_hist = _run_kernel(
        y_w, weight, t0 / tc, c0, config, tc, beta, y.grid, y.acf,
        config.iterations, record_trajectory)
    valid, first = validate_paths(c, t_chips * tc, config.validation_threshold)
    traj = (t_hist * tc, c_hist) if record_trajectory else None
    return Estimate(coefficients=c, delays=t_chips * tc, first_arrival=first,
                    valid_mask=valid, ridge_iterations=int(ridge),
                    trajectory=traj)


def track(observations, config: LimsConfig, iterations_per_epoch: int):
    """Recursive tracking over an observation sequence.

    Epoch nu+1 warm-starts from epoch nu's final state with the given
    per-epoch iteration budget.  Returns one Estimate per observation.
    """
    if iterations_per_epoch < 0:
        raise ValueError("iterations_per_epoch must be non-negative")
    estimates = []
    state_c = None
    state_t = None
    ref_lags = None
    for obs in observations:
        if ref_lags is None:
            ref_lags = obs.grid.lags
        elif not np.array_equal(obs.grid.lags, ref_lags):
            raise ValueError("tracking requires a consistent lag grid")
        tc, beta, t0, weight, y_w = _resolve(config, obs)
        if state_c is None:
            state_c = np.zeros(config.M, dtype=np.complex128)
            state_t = t0 / tc
        state_c, state_t, _, ridge, _, _ = _run_kernel(
            y_w, weight, state_t, state_c, config, tc, beta, obs.grid,
            obs.acf, iterations_per_epoch, False)
        valid, first = validate_paths(state_c, state_t * tc,
                                      config.validation_threshold)
        estimates.append(Estimate(coefficients=state_c.copy(),
                                  delays=state_t * tc,
                                  first_arrival=first, valid_mask=valid,
                                  ridge_iterations=int(ridge)))
    return estimates
