"""Multipath channel model: power-delay profiles and realizations.

A channel is a set of (complex coefficient, delay) pairs.  Profiles carry
average per-path powers; realizations either fix the coefficients to the
normalized real amplitudes (non-fading) or draw them as independent
zero-mean circularly symmetric complex Gaussians (Rayleigh fading).
Profiles are normalized to unit total average power so that the carrier
power is 1 and the C/N0 setting maps directly onto the noise density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_model import CA_CHIP_S


@dataclass(frozen=True)
class PowerDelayProfile:
    """Per-path (relative power dB, delay seconds) plus a fading flag."""

    powers_db: np.ndarray
    delays: np.ndarray
    fading: str = "rayleigh"  # "rayleigh" | "none"

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.powers_db, dtype=np.float64))
        d = np.atleast_1d(np.asarray(self.delays, dtype=np.float64))
        if p.size == 0 or p.shape != d.shape:
            raise ValueError("profile needs matching, non-empty powers and delays")
        if np.any(np.diff(d) <= 0):
            raise ValueError("delays must be strictly increasing")
        if self.fading not in ("rayleigh", "none"):
            raise ValueError(f"unknown fading {self.fading!r}")
        object.__setattr__(self, "powers_db", p)
        object.__setattr__(self, "delays", d)

    @property
    def linear_powers(self) -> np.ndarray:
        """Per-path average powers normalized to unit total."""
        p = 10.0 ** (self.powers_db / 10.0)
        return p / p.sum()


@dataclass(frozen=True)
class ChannelRealization:
    """Complex path coefficients and strictly increasing delays (seconds)."""

    coefficients: np.ndarray
    delays: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coefficients, dtype=np.complex128))
        d = np.atleast_1d(np.asarray(self.delays, dtype=np.float64))
        if c.shape != d.shape:
            raise ValueError("coefficients and delays must have equal length")
        if np.any(np.diff(d) <= 0):
            raise ValueError("delays must be strictly increasing")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "delays", d)

    @property
    def n_paths(self) -> int:
        return self.delays.size

    def shifted(self, offset: float) -> "ChannelRealization":
        """Same channel with all delays moved by ``offset`` seconds."""
        return ChannelRealization(self.coefficients, self.delays + offset)


def realize(profile: PowerDelayProfile, rng: np.random.Generator) -> ChannelRealization:
    """Draw one channel realization from a power-delay profile.

    Rayleigh fading draws each coefficient independently as a zero-mean
    circularly symmetric complex Gaussian with variance equal to the
    normalized per-path power; non-fading uses the real square-root
    amplitudes with zero phase.  Delays are taken from the profile as-is.
    """
    var = profile.linear_powers
    if profile.fading == "rayleigh":
        k = var.size
        g = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        coeff = np.sqrt(var / 2.0) * g
    else:
        coeff = np.sqrt(var).astype(np.complex128)
    return ChannelRealization(coefficients=coeff, delays=profile.delays.copy())


def two_path_nonfading(tc: float = CA_CHIP_S) -> PowerDelayProfile:
    """Equal-power non-fading paths at delays 0 and Tc/2."""
    return PowerDelayProfile(powers_db=[0.0, 0.0], delays=[0.0, 0.5 * tc],
                             fading="none")


def single_path_fading() -> PowerDelayProfile:
    """One Rayleigh path with unit average power at delay 0."""
    return PowerDelayProfile(powers_db=[0.0], delays=[0.0], fading="rayleigh")


def channel_a(tc: float = CA_CHIP_S) -> PowerDelayProfile:
    """Three-path Rayleigh profile; first arrival 7 dB below the strongest."""
    return PowerDelayProfile(powers_db=[-7.0, 0.0, -2.2],
                             delays=[0.0, 0.3 * tc, 0.5 * tc],
                             fading="rayleigh")


def channel_b(tc: float = CA_CHIP_S) -> PowerDelayProfile:
    """Four-path Rayleigh profile; first arrival 7 dB below the strongest."""
    return PowerDelayProfile(powers_db=[-7.0, -7.0, 0.0, -2.2],
                             delays=[0.0, 0.2 * tc, 0.4 * tc, 0.6 * tc],
                             fading="rayleigh")


NAMED_PROFILES = {
    "two_path_nonfading": two_path_nonfading,
    "single_path_fading": lambda tc=CA_CHIP_S: single_path_fading(),
    "channel_a": channel_a,
    "channel_b": channel_b,
}


def profile_from_dict(spec: dict, tc: float = CA_CHIP_S) -> PowerDelayProfile:
    """Build a profile from a config table.

    Expects ``paths`` as a list of [power_db, delay_chips] pairs and an
    optional ``fading`` flag ("rayleigh" or "none").
    """
    paths = spec.get("paths")
    if not paths:
        raise ValueError("custom profile needs a non-empty 'paths' list")
    powers = [float(p[0]) for p in paths]
    delays = [float(p[1]) * tc for p in paths]
    return PowerDelayProfile(powers_db=powers, delays=delays,
                             fading=spec.get("fading", "rayleigh"))
