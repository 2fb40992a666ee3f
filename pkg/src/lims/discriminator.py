"""Early-late and generalized code-phase discriminators, plus a DLL.

The classic early-late (EL) discriminator D = |yE|^2 - |yL|^2 is the
two-sample, single-path special case of the iterative LS estimator: one
exact coefficient solve followed by one delay gradient step from t0 = 0
produces t1 = -beta * D.  The generalized discriminator extends this to
2P whitened samples; its response steepens as the sample spacing
shrinks.  Gradients here are taken with respect to the delay measured in
chips, which is the normalization under which the two-sample case
reduces exactly to the power difference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .observation import LagGrid, noise_covariance
from .signal_model import AcfModel, acf_derivative, acf_eval

EL_WIDE_CHIPS = 1.0
EL_NARROW_CHIPS = 0.2


def el_discriminator(y_early: complex, y_late: complex) -> float:
    """Early-late power difference D = |yE|^2 - |yL|^2."""
    return float(abs(y_early) ** 2 - abs(y_late) ** 2)


def el_coefficient(y_early: complex, y_late: complex) -> complex:
    """The one-iteration LS coefficient of the two-sample model."""
    return y_early + y_late


@dataclass(frozen=True)
class ElConfig:
    """Early-late sampling and loop settings.

    spacing is the early-to-late distance in seconds; "wide" is one chip,
    "narrow" 0.2 chips.  loop_gain scales the discriminator into a delay
    correction (seconds per unit D).
    """

    spacing: float
    loop_gain: float
    mode: str = "custom"

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")

    @classmethod
    def wide(cls, tc: float, loop_gain: float | None = None) -> "ElConfig":
        return cls(spacing=EL_WIDE_CHIPS * tc,
                   loop_gain=0.1 * tc if loop_gain is None else loop_gain,
                   mode="wide")

    @classmethod
    def narrow(cls, tc: float, loop_gain: float | None = None) -> "ElConfig":
        return cls(spacing=EL_NARROW_CHIPS * tc,
                   loop_gain=0.1 * tc if loop_gain is None else loop_gain,
                   mode="narrow")


@dataclass(frozen=True)
class GeneralizedDiscConfig:
    """2P-point discriminator settings.

    P is tied to the sample spacing by P = floor(Tc/Ts + 1/2); the 2P
    sampling lags are (2p+1) Ts/2 for p = -P..P-1.
    """

    Ts: float
    acf: AcfModel
    whitening: bool = True

    @property
    def P(self) -> int:
        return int(np.floor(self.acf.Tc / self.Ts + 0.5))

    @property
    def lags(self) -> np.ndarray:
        p = np.arange(-self.P, self.P)
        return (2 * p + 1) * self.Ts / 2.0


def generalized_discriminator(y, config: GeneralizedDiscConfig) -> float:
    """Whitened 2P-point discriminator around zero code phase.

    Computes the single-path LS coefficient c at delay 0 from the 2P
    samples (inverse-covariance weighted when whitening is on), then
    D = -Re{B^H(c, 0) C^el(y - c A(0))} with the delay derivative taken
    per chip.  For P = 1, Ts = Tc this is exactly |yE|^2 - |yL|^2.
    """
    y = np.asarray(y, dtype=np.complex128)
    lags = config.lags
    if y.shape != lags.shape:
        raise ValueError(f"expected {2 * config.P} samples, got {y.size}")
    grid = LagGrid(lags)
    a = np.asarray(acf_eval(config.acf, lags))
    # dR/dt in chips at t = 0
    b = config.acf.Tc * np.asarray(acf_derivative(config.acf, lags))
    if config.whitening:
        cov = noise_covariance(grid, config.acf)
        ci_y = np.linalg.solve(cov, y)
        ci_a = np.linalg.solve(cov, a)
        coeff = (a @ ci_y) / (a @ ci_a)
        resid = ci_y - coeff * ci_a
    else:
        coeff = (a @ y) / (a @ a)
        resid = y - coeff * a
    return float(-np.real((coeff * b).conj() @ resid))


def discriminator_response(disc, offsets, acf: AcfModel) -> np.ndarray:
    """Evaluate a discriminator on noiseless single-path samples.

    ``disc`` must expose ``lags`` (the sampling lags it consumes) and
    ``compute(y) -> float``.  For each code-phase offset the correlator
    samples y = R(lag - offset) are fed through the discriminator.
    """
    offsets = np.atleast_1d(np.asarray(offsets, dtype=np.float64))
    lags = np.asarray(disc.lags)
    out = np.empty(offsets.size)
    for i, eps in enumerate(offsets):
        y = np.asarray(acf_eval(acf, lags - eps)).astype(np.complex128)
        out[i] = disc.compute(y)
    return out


class ElPair:
    """Adapter exposing lags/compute for the plain EL discriminator."""

    def __init__(self, config: ElConfig):
        self.config = config
        self.lags = np.array([-config.spacing / 2.0, config.spacing / 2.0])

    def compute(self, y) -> float:
        return el_discriminator(y[0], y[1])


class GeneralizedDisc:
    """Adapter exposing lags/compute for the 2P-point discriminator."""

    def __init__(self, config: GeneralizedDiscConfig):
        self.config = config
        self.lags = config.lags

    def compute(self, y) -> float:
        return generalized_discriminator(y, self.config)


def sample_correlator(obs_y: np.ndarray, grid: LagGrid, lag: float):
    """Linear interpolation of a correlator output between grid lags."""
    lags = grid.lags
    lag = float(np.clip(lag, lags[0], lags[-1]))
    re = np.interp(lag, lags, obs_y.real)
    im = np.interp(lag, lags, obs_y.imag)
    return re + 1j * im


def dll_track(observations, config: ElConfig, iterations: int = 1,
              tau0: float = 0.0):
    """First-order EL delay-locked loop over an observation sequence.

    Per observation the loop runs ``iterations`` updates of
    tau <- tau - loop_gain * D, sampling early/late at tau -/+ spacing/2
    by linear interpolation on the lag grid.  Estimates leaving the
    window are clamped (and flagged in the returned mask).  Returns
    (estimates, clamped) arrays with one entry per observation.
    """
    tau = float(tau0)
    estimates = np.empty(len(observations))
    clamped = np.zeros(len(observations), dtype=bool)
    half = config.spacing / 2.0
    for i, obs in enumerate(observations):
        lags = obs.grid.lags
        lo, hi = lags[0], lags[-1]
        hit = False
        for _ in range(iterations):
            y_e = sample_correlator(obs.y, obs.grid, tau - half)
            y_l = sample_correlator(obs.y, obs.grid, tau + half)
            tau = tau - config.loop_gain * el_discriminator(y_e, y_l)
            if tau < lo or tau > hi:
                tau = min(max(tau, lo), hi)
                hit = True
        estimates[i] = tau
        clamped[i] = hit
    return estimates, clamped
