"""Correlator-output observations with correctly correlated noise.

The estimator's observation is the correlator output sampled on a lag
grid: y_n = sum_k gamma_k R(zeta_n - tau_k) + w_n, where the noise w is
circularly symmetric complex Gaussian with covariance (N0/Ti) * C and
[C]_{p,q} = R(zeta_p - zeta_q).  ``synthesize`` draws observations
directly in the correlation domain; ``waveform_oracle`` builds them the
long way from chip waveforms and is used to validate the fast path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularCovarianceError
from .signal_model import AcfModel, acf_eval, gen_ca_code, code_autocorrelation

EIG_FLOOR_REL = 1e-10


@dataclass(frozen=True)
class LagGrid:
    """Strictly increasing correlator sampling lags in seconds."""

    lags: np.ndarray

    def __post_init__(self):
        lags = np.atleast_1d(np.asarray(self.lags, dtype=np.float64))
        if lags.size < 1 or np.any(np.diff(lags) <= 0):
            raise ValueError("lags must be non-empty and strictly increasing")
        object.__setattr__(self, "lags", lags)

    @property
    def n(self) -> int:
        return self.lags.size

    @property
    def span(self) -> tuple[float, float]:
        return float(self.lags[0]), float(self.lags[-1])

    def median_spacing(self) -> float:
        return float(np.median(np.diff(self.lags)))


def default_grid(tc: float, spacing_chips: float = 0.1,
                 half_width_chips: float = 1.5) -> LagGrid:
    """Symmetric uniform grid, e.g. 31 lags on [-1.5Tc, 1.5Tc] at 0.1Tc."""
    n_half = int(round(half_width_chips / spacing_chips))
    return LagGrid((np.arange(-n_half, n_half + 1)) * spacing_chips * tc)


@dataclass(frozen=True)
class CorrelatorObservation:
    """Complex correlator samples on a lag grid.

    noise_scale is N0/Ti (the whitened-domain noise variance); acf is the
    ACF model the noise covariance and the estimator operate under.
    """

    y: np.ndarray
    grid: LagGrid
    noise_scale: float
    acf: AcfModel

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=np.complex128))
        if y.shape != self.grid.lags.shape:
            raise ValueError("y and grid must have equal length")
        object.__setattr__(self, "y", y)


def n0_from_cn0(cn0_dbhz: float) -> float:
    """Noise density for unit carrier power; +inf C/N0 means noiseless."""
    if math.isinf(cn0_dbhz) and cn0_dbhz > 0:
        return 0.0
    return 10.0 ** (-cn0_dbhz / 10.0)


def noise_covariance(grid: LagGrid, acf: AcfModel) -> np.ndarray:
    """Lag-domain noise covariance shape: [C]_{p,q} = R(zeta_p - zeta_q)."""
    z = grid.lags
    return np.asarray(acf_eval(acf, z[:, None] - z[None, :]))


_FACTOR_CACHE: dict = {}


def covariance_factor(grid: LagGrid, acf: AcfModel) -> np.ndarray:
    """A factor L with L L^T ~= C, via eigendecomposition.

    Eigenvalues below EIG_FLOOR_REL times the largest are floored at that
    value before the square root (fine grids make C numerically
    singular); clearly negative eigenvalues raise SingularCovarianceError.
    Factors are cached per (grid, acf) content.
    """
    key = (grid.lags.tobytes(), acf.cache_key())
    hit = _FACTOR_CACHE.get(key)
    if hit is not None:
        return hit
    c = noise_covariance(grid, acf)
    lam, vec = np.linalg.eigh(c)
    lmax = lam[-1]
    if lmax <= 0 or lam[0] < -1e-8 * lmax:
        raise SingularCovarianceError("covariance is not positive semidefinite")
    lam = np.maximum(lam, EIG_FLOOR_REL * lmax)
    fac = vec * np.sqrt(lam)
    _FACTOR_CACHE[key] = fac
    return fac


def _standard_complex_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)


def synthesize(channel, grid: LagGrid, acf: AcfModel, cn0_dbhz: float,
               Ti: float, rng: np.random.Generator | None = None,
               signal_acf: AcfModel | None = None) -> CorrelatorObservation:
    """Draw a correlator-domain observation of a channel realization.

    The signal component is sum_k gamma_k R(zeta_n - tau_k); the noise is
    L z scaled by sqrt(N0/Ti) with L a factor of the lag covariance.
    ``signal_acf`` optionally evaluates the signal under a different ACF
    than the one the noise covariance (and the estimator) uses, which is
    how band-limited data with a clean replica is modeled.
    """
    if Ti <= 0:
        raise ValueError("Ti must be positive")
    sig_model = acf if signal_acf is None else signal_acf
    z = grid.lags
    if channel.n_paths:
        a = np.asarray(acf_eval(sig_model, z[:, None] - channel.delays[None, :]))
        y = a @ channel.coefficients
    else:
        y = np.zeros(grid.n, dtype=np.complex128)
    noise_scale = n0_from_cn0(cn0_dbhz) / Ti
    if noise_scale > 0.0:
        if rng is None:
            raise ValueError("rng required for noisy synthesis")
        fac = covariance_factor(grid, acf)
        y = y + np.sqrt(noise_scale) * (fac @ _standard_complex_normal(rng, grid.n))
    return CorrelatorObservation(y=y, grid=grid, noise_scale=noise_scale, acf=acf)


class _CodeWaveform:
    """Exact integrals of a periodic rectangular-chip waveform."""

    def __init__(self, code):
        self.chips = code.chips.astype(np.float64)
        self.tc = code.chip_duration
        self.period = code.period
        self.csum = np.concatenate([[0.0], np.cumsum(self.chips)])
        self.period_sum = self.csum[-1]
        self.rho = code_autocorrelation(code)

    def integral(self, t):
        """S(t) = int_0^t s(u) du for any real t (periodic extension)."""
        pos = np.asarray(t, dtype=np.float64) / self.tc
        per, rem = np.divmod(pos, self.period)
        j = np.minimum(rem.astype(np.int64), self.period - 1)
        frac = rem - j
        return self.tc * (per * self.period_sum + self.csum[j]
                          + frac * self.chips[j])

    def acf_exact(self, delta):
        """Continuous circular autocorrelation at arbitrary offsets."""
        pos = np.mod(np.asarray(delta, dtype=np.float64) / self.tc, self.period)
        q = np.minimum(pos.astype(np.int64), self.period - 1)
        r = pos - q
        return (1.0 - r) * self.rho[q] + r * self.rho[(q + 1) % self.period]


_REP_CACHE: dict = {}


def _replica_matrix(wave: _CodeWaveform, prn: int, grid: LagGrid,
                    dt: float, n_samp: int) -> np.ndarray:
    """Per-sample integrals of the clean replica at each lag (exact for
    the rectangular-chip waveform); cached since it is channel-free."""
    key = (grid.lags.tobytes(), prn, dt, n_samp)
    hit = _REP_CACHE.get(key)
    if hit is not None:
        return hit
    edges = np.arange(n_samp + 1) * dt
    rep = np.empty((grid.n, n_samp))
    for i, zeta in enumerate(grid.lags):
        s_edges = wave.integral(edges - zeta)
        rep[i] = np.diff(s_edges) / dt
    _REP_CACHE.clear()  # keep at most one (they are large)
    _REP_CACHE[key] = rep
    return rep


def waveform_oracle(channel, prn: int, Ts_wave: float | None,
                    cn0_dbhz: float, Ti: float, grid: LagGrid,
                    bandwidth: float | None,
                    rng: np.random.Generator | None = None,
                    acf: AcfModel | None = None) -> CorrelatorObservation:
    """Observation built from chip waveforms instead of the ACF shortcut.

    Delayed, scaled replicas of the C/A code are superimposed (optionally
    brick-wall band-limited), white Gaussian noise of density N0 is
    added, and the result is cross-correlated against the clean replica
    over Ti and sampled at the grid lags.  The unfiltered signal part is
    correlated in closed form (the waveforms are piecewise constant), so
    its only deviation from ``synthesize`` is the real code ACF with its
    +/-1/1023-level sidelobes; the noise is simulated per waveform sample
    and correlated against the per-sample integral of the replica.

    ``acf`` sets the model attached to the returned observation (default
    ideal triangle with the code's chip duration).
    """
    from .signal_model import ideal_acf

    code = gen_ca_code(prn)
    tc = code.chip_duration
    wave = _CodeWaveform(code)

    periods = Ti / (code.period * tc)
    if abs(periods - round(periods)) > 1e-9 or round(periods) < 1:
        raise ValueError("Ti must be a whole number of code periods")
    periods = int(round(periods))

    if Ts_wave is None:
        Ts_wave = tc / 64.0 if bandwidth else tc / 16.0
    ratio = tc / Ts_wave
    if Ts_wave > tc / 8.0 or abs(ratio - round(ratio)) > 1e-9:
        raise ValueError("Ts_wave must divide the chip into at least 8 samples")

    dt = tc / round(ratio)
    n_samp = int(round(periods * code.period * round(ratio)))
    edges = np.arange(n_samp + 1) * dt
    lags = grid.lags
    rep = _replica_matrix(wave, prn, grid, dt, n_samp)

    if channel.n_paths and bandwidth:
        # Sampled (cell-averaged) superposition, filtered exactly in the
        # frequency domain; the signal is periodic over Ti so circular
        # brick-wall filtering introduces no edge effects.
        x = np.zeros(n_samp, dtype=np.complex128)
        for gamma, tau in zip(channel.coefficients, channel.delays):
            s_edges = wave.integral(edges - tau)
            x += gamma * (np.diff(s_edges) / dt)
        freqs = np.fft.fftfreq(n_samp, d=dt)
        spec = np.fft.fft(x)
        spec[np.abs(freqs) > bandwidth / 2.0] = 0.0
        x = np.fft.ifft(spec)
        y_sig = (rep @ x) * (dt / Ti)
    elif channel.n_paths:
        offs = lags[:, None] - channel.delays[None, :]
        y_sig = wave.acf_exact(offs) @ channel.coefficients
    else:
        y_sig = np.zeros(grid.n, dtype=np.complex128)

    n0 = n0_from_cn0(cn0_dbhz)
    if n0 > 0.0:
        if rng is None:
            raise ValueError("rng required for noisy synthesis")
        v = (rng.standard_normal(n_samp) + 1j * rng.standard_normal(n_samp))
        v *= np.sqrt(n0 / (2.0 * dt))
        y_sig = y_sig + (rep @ v) * (dt / Ti)

    model = acf if acf is not None else ideal_acf(tc)
    return CorrelatorObservation(y=y_sig, grid=grid, noise_scale=n0 / Ti,
                                 acf=model)


def observation_to_csv(obs: CorrelatorObservation, path) -> None:
    """Write lag_seconds, re(y), im(y) rows; header records the metadata."""
    with open(path, "w") as fh:
        fh.write(f"# noise_scale={obs.noise_scale!r} acf_kind={obs.acf.kind} "
                 f"Tc={obs.acf.Tc!r}\n")
        fh.write("lag_seconds,re_y,im_y\n")
        for lag, val in zip(obs.grid.lags, obs.y):
            fh.write(f"{lag!r},{val.real!r},{val.imag!r}\n")


def observation_from_csv(path, acf: AcfModel | None = None) -> CorrelatorObservation:
    """Inverse of observation_to_csv.

    The header stores only the ACF kind, so a band-limited observation
    needs the matching model passed back in.
    """
    from .signal_model import ideal_acf

    with open(path) as fh:
        header = fh.readline().strip()
        fh.readline()  # column names
        rows = [line.strip().split(",") for line in fh if line.strip()]
    meta = dict(item.split("=") for item in header.lstrip("# ").split())
    noise_scale = float(meta["noise_scale"])
    kind = meta["acf_kind"]
    tc = float(meta["Tc"])
    if acf is None:
        if kind != "ideal":
            raise ValueError("pass the ACF model to load a non-ideal observation")
        acf = ideal_acf(tc)
    elif acf.kind != kind:
        raise ValueError(f"ACF kind mismatch: file has {kind}, got {acf.kind}")
    lags = np.array([float(r[0]) for r in rows])
    y = np.array([float(r[1]) + 1j * float(r[2]) for r in rows])
    return CorrelatorObservation(y=y, grid=LagGrid(lags),
                                 noise_scale=noise_scale, acf=acf)
