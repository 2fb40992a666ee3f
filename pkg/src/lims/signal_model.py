"""PN code generation and auto-correlation function (ACF) models.

The estimators in this package never touch raw waveforms: everything they
see is a correlator output, which for a BPSK PN ranging code is a sum of
shifted copies of the code ACF.  This module provides

* GPS C/A (Gold) code generation for PRN 1..32,
* the ideal triangular ACF of a rectangular-chip code,
* a band-limited ACF obtained by numerically convolving the triangle with
  the impulse response of an ideal (brick-wall) low-pass filter,

together with the ACF derivative with respect to a path delay, which is
what the delay-update linearization needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CA_CODE_LENGTH = 1023
CA_CHIP_RATE_HZ = 1.023e6
#: GPS C/A chip duration in seconds.
CA_CHIP_S = 1.0 / CA_CHIP_RATE_HZ

# G2 phase-selector taps per PRN (1-indexed register stages).
_G2_TAPS = {
    1: (2, 6), 2: (3, 7), 3: (4, 8), 4: (5, 9), 5: (1, 9), 6: (2, 10),
    7: (1, 8), 8: (2, 9), 9: (3, 10), 10: (2, 3), 11: (3, 4), 12: (5, 6),
    13: (6, 7), 14: (7, 8), 15: (8, 9), 16: (9, 10), 17: (1, 4), 18: (2, 5),
    19: (3, 6), 20: (4, 7), 21: (5, 8), 22: (6, 9), 23: (1, 3), 24: (4, 6),
    25: (5, 7), 26: (6, 8), 27: (7, 9), 28: (8, 10), 29: (1, 6), 30: (2, 7),
    31: (3, 8), 32: (4, 9),
}


@dataclass(frozen=True)
class ChipSequence:
    """One period of a +/-1 chip sequence.

    chips     : int8 array of +1/-1 values, one per chip
    chip_rate : chips per second
    period    : number of chips per code period
    """

    chips: np.ndarray
    chip_rate: float = CA_CHIP_RATE_HZ
    period: int = CA_CODE_LENGTH

    def __post_init__(self):
        chips = np.asarray(self.chips, dtype=np.int8)
        if chips.shape != (self.period,):
            raise ValueError(f"expected {self.period} chips, got {chips.shape}")
        if not np.all(np.abs(chips) == 1):
            raise ValueError("chips must be +1 or -1")
        object.__setattr__(self, "chips", chips)

    @property
    def chip_duration(self) -> float:
        return 1.0 / self.chip_rate


def _lfsr(taps, n=CA_CODE_LENGTH, stages=10):
    """Run a 10-stage LFSR (all-ones seed), returning the stage history.

    Returns an (n, stages) 0/1 array; column j holds the output of stage
    j+1 at each step, so arbitrary phase-selector taps can be read off.
    """
    reg = np.ones(stages, dtype=np.int8)
    hist = np.empty((n, stages), dtype=np.int8)
    for i in range(n):
        hist[i] = reg
        fb = 0
        for t in taps:
            fb ^= reg[t - 1]
        reg[1:] = reg[:-1]
        reg[0] = fb
    return hist


def gen_ca_code(prn: int) -> ChipSequence:
    """Generate one period of the GPS C/A Gold code for ``prn`` in 1..32.

    G1 uses taps (3, 10), G2 uses taps (2, 3, 6, 8, 9, 10); the G2 output
    is the XOR of the two phase-selector stages assigned to the PRN.  Bit
    1 maps to chip +1.
    """
    if not isinstance(prn, (int, np.integer)) or not 1 <= int(prn) <= 32:
        raise ValueError(f"prn must be in 1..32, got {prn!r}")
    g1 = _lfsr((3, 10))[:, 9]
    g2_hist = _lfsr((2, 3, 6, 8, 9, 10))
    ta, tb = _G2_TAPS[int(prn)]
    g2 = g2_hist[:, ta - 1] ^ g2_hist[:, tb - 1]
    bits = g1 ^ g2
    return ChipSequence(chips=(2 * bits.astype(np.int8) - 1))


def code_autocorrelation(code: ChipSequence) -> np.ndarray:
    """Normalized circular autocorrelation rho(q) = (1/P) sum_j c[j] c[j-q]."""
    c = code.chips.astype(np.float64)
    spec = np.fft.rfft(c, code.period)
    rho = np.fft.irfft(spec * np.conj(spec), code.period) / code.period
    return rho


@dataclass(frozen=True)
class AcfModel:
    """Evaluatable code ACF, either the ideal triangle or a filtered table.

    kind      : "ideal" or "bandlimited"
    Tc        : chip duration in seconds
    bandwidth : two-sided filter bandwidth in Hz (bandlimited only)
    table     : sampled ACF values on the uniform grid z0 + k*dz (seconds)
    dtable    : sampled dR/dzeta on the same grid (central differences)
    """

    kind: str
    Tc: float
    bandwidth: float | None = None
    table: np.ndarray | None = field(default=None, repr=False)
    dtable: np.ndarray | None = field(default=None, repr=False)
    z0: float = 0.0
    dz: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ideal", "bandlimited"):
            raise ValueError(f"unknown ACF kind {self.kind!r}")
        if self.Tc <= 0:
            raise ValueError("Tc must be positive")
        if self.kind == "bandlimited" and self.table is None:
            raise ValueError("bandlimited ACF requires a table")

    def cache_key(self):
        if self.kind == "ideal":
            return ("ideal", self.Tc)
        return ("bandlimited", self.Tc, self.bandwidth, self.z0, self.dz,
                self.table.tobytes())


def ideal_acf(Tc: float = CA_CHIP_S) -> AcfModel:
    """Triangular ACF: 1 - |zeta|/Tc on (-Tc, Tc], zero elsewhere."""
    return AcfModel(kind="ideal", Tc=Tc)


def _cubic_interp(x, z0, dz, table):
    """Catmull-Rom interpolation on a uniform grid; zero outside the table."""
    x = np.asarray(x, dtype=np.float64)
    pos = (x - z0) / dz
    n = table.size
    i = np.floor(pos).astype(np.int64)
    inside = (pos >= 0.0) & (pos <= n - 1)
    i = np.clip(i, 1, n - 3)
    u = pos - i
    v0 = table[i - 1]
    v1 = table[i]
    v2 = table[i + 1]
    v3 = table[i + 2]
    out = 0.5 * (
        2.0 * v1
        + (v2 - v0) * u
        + (2.0 * v0 - 5.0 * v1 + 4.0 * v2 - v3) * u * u
        + (3.0 * (v1 - v2) + v3 - v0) * u * u * u
    )
    return np.where(inside, out, 0.0)


def acf_eval(model: AcfModel, zeta):
    """Evaluate R(zeta).  Accepts scalars or arrays; zero out of support."""
    z = np.asarray(zeta, dtype=np.float64)
    if model.kind == "ideal":
        out = np.where(np.abs(z) < model.Tc, 1.0 - np.abs(z) / model.Tc, 0.0)
    else:
        out = _cubic_interp(z, model.z0, model.dz, model.table)
    if np.isscalar(zeta):
        return float(out)
    return out


def acf_derivative(model: AcfModel, zeta):
    """Derivative of R(zeta_n - t) with respect to the delay t.

    The argument is the lag difference zeta = zeta_n - t.  For the ideal
    triangle this is -1/Tc on (-Tc, 0] and +1/Tc on (0, Tc] (half-open
    intervals, left-limit convention at the breakpoints); for a table ACF
    it is minus the central-difference slope of the table.
    """
    z = np.asarray(zeta, dtype=np.float64)
    if model.kind == "ideal":
        Tc = model.Tc
        out = np.where(
            (z > -Tc) & (z <= 0.0), -1.0 / Tc,
            np.where((z > 0.0) & (z <= Tc), 1.0 / Tc, 0.0),
        )
    else:
        out = -_cubic_interp(z, model.z0, model.dz, model.dtable)
    if np.isscalar(zeta):
        return float(out)
    return out


def make_bandlimited_acf(Tc: float, bandwidth: float,
                         grid_step: float | None = None,
                         span: float = 4.0) -> AcfModel:
    """Build a band-limited ACF table by filtering the ideal triangle.

    The triangle is convolved on a fine grid with the impulse response
    h(x) = B*sinc(B*x) of an ideal low-pass filter whose two-sided
    bandwidth is ``bandwidth`` (cutoff at +/- bandwidth/2).  The triangle
    is piecewise linear between grid nodes, so each cell's contribution
    has a closed form in the sine integral; the convolution is therefore
    evaluated without kernel truncation or aliasing, and the
    infinite-bandwidth limit reproduces the triangle exactly at the
    nodes.  The table spans [-span*Tc, span*Tc] at step ``grid_step``
    (default Tc/1000).

    Evaluation uses cubic interpolation; the derivative table is built by
    central differences.
    """
    from scipy.special import sici

    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if grid_step is None:
        grid_step = Tc / 1000.0
    if grid_step > Tc / 100.0:
        raise ValueError("grid_step must be at most Tc/100")

    d = float(grid_step)
    half = int(np.ceil(span * Tc / d))
    z = np.arange(-half, half + 1) * d

    # Triangle values and per-cell slopes on cells [u_c, u_c + d) covering
    # the support; cells fully outside contribute nothing.
    n_sup = int(np.ceil(Tc / d))
    u = np.arange(-n_sup, n_sup) * d
    v = np.where(np.abs(u) < Tc, 1.0 - np.abs(u) / Tc, 0.0)
    v_next = np.where(np.abs(u + d) < Tc, 1.0 - np.abs(u + d) / Tc, 0.0)
    s = (v_next - v) / d

    # Cell integrals against h: with F(x) = Si(pi*B*x)/pi (so F' = h up to
    # the constant part) and M(x) = -cos(pi*B*x)/(pi^2*B) (so M' = x*h),
    #   K1(x) = int_0^d h(x - w) dw        = F(x) - F(x - d)
    #   K2(x) = int_0^d w h(x - w) dw      = x*K1(x) - (M(x) - M(x - d))
    # and R_bl(zeta) = sum_c v_c*K1(zeta - u_c) + s_c*K2(zeta - u_c).
    nk_lo = -(n_sup - 1) - half
    nk_hi = half + n_sup
    xk = np.arange(nk_lo, nk_hi + 1) * d
    F = sici(np.pi * bandwidth * xk)[0] / np.pi
    Fm = sici(np.pi * bandwidth * (xk - d))[0] / np.pi
    M = -np.cos(np.pi * bandwidth * xk) / (np.pi**2 * bandwidth)
    Mm = -np.cos(np.pi * bandwidth * (xk - d)) / (np.pi**2 * bandwidth)
    K1 = F - Fm
    K2 = xk * K1 - (M - Mm)

    full = np.convolve(v, K1) + np.convolve(s, K2)
    # out[j] = sum_c a[c]*K[(j - half) - (c - n_sup)] = conv[j + ...] with
    # kernel index 0 at x = nk_lo*d.
    start = -half - (-n_sup) - nk_lo
    values = full[start:start + z.size]
    # Enforce the exact even symmetry of the underlying convolution.
    values = 0.5 * (values + values[::-1])

    dtable = np.gradient(values, d)

    return AcfModel(kind="bandlimited", Tc=Tc, bandwidth=float(bandwidth),
                    table=values, dtable=dtable, z0=float(z[0]), dz=d)


def acf_to_csv(model: AcfModel, path, zeta=None) -> None:
    """Write (zeta_seconds, value) rows for inspection or plotting."""
    if zeta is None:
        if model.kind == "bandlimited":
            zeta = model.z0 + model.dz * np.arange(model.table.size)
        else:
            zeta = np.linspace(-1.5 * model.Tc, 1.5 * model.Tc, 301)
    vals = acf_eval(model, zeta)
    with open(path, "w") as fh:
        fh.write("zeta_seconds,value\n")
        for zv, rv in zip(zeta, vals):
            fh.write(f"{zv!r},{rv!r}\n")
