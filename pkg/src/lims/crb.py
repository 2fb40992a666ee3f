"""Cramer-Rao bound for the first-arrival delay estimate.

The bound comes from the inverse Fisher information of the correlator
observation model with noise covariance (N0/Ti) C:

    F^{-1} = (N0 / (2 Ti)) * (Re{D^H C^{-1} D})^{-1},
    D = [A(t_ch)  B(c_ch, t_ch)],

and the first-arrival delay variance is the (K+1)-th diagonal element
(the first of the delay block).  The bound scales linearly with N0 and
inversely with Ti, so it falls exactly one decade per 10 dB of C/N0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .channel import ChannelRealization
from .errors import SingularCovarianceError, SingularFisherError
from .estimator import build_A, build_B
from .observation import LagGrid, noise_covariance
from .signal_model import AcfModel

RANK_TOL = 1e-10


@dataclass(frozen=True)
class CrbInput:
    """Channel, sampling and noise description for the bound."""

    channel: ChannelRealization
    grid: LagGrid
    acf: AcfModel
    N0: float
    Ti: float

    def __post_init__(self):
        if self.N0 <= 0 or self.Ti <= 0:
            raise ValueError("N0 and Ti must be positive")
        lo, hi = self.grid.span
        d = self.channel.delays
        if d.size and (d[0] < lo or d[-1] > hi):
            raise ValueError("channel delays must lie inside the lag window")


def fisher_inverse(inp: CrbInput) -> np.ndarray:
    """Inverse Fisher information for (coefficients, delays), 2K x 2K.

    Raises SingularFisherError when D = [A B] is rank-deficient: the
    bound is then undefined and must not be silently regularized.
    """
    ch = inp.channel
    a = build_A(ch.delays, inp.grid, inp.acf)
    b = build_B(ch.coefficients, ch.delays, inp.grid, inp.acf)
    d = np.hstack([a, b])
    sv = np.linalg.svd(d, compute_uv=False)
    if sv[0] == 0 or sv[-1] < RANK_TOL * sv[0]:
        raise SingularFisherError("[A B] is rank-deficient for this channel")
    cov = noise_covariance(inp.grid, inp.acf)
    try:
        cf = cho_factor(cov)
    except LinAlgError as exc:
        raise SingularCovarianceError(str(exc)) from None
    j = np.real(d.conj().T @ cho_solve(cf, d))
    try:
        jf = cho_factor(j)
    except LinAlgError:
        raise SingularFisherError("Fisher information is not positive definite")
    return (inp.N0 / (2.0 * inp.Ti)) * cho_solve(jf, np.eye(2 * ch.n_paths))


def crb_first_path(inp: CrbInput) -> float:
    """Delay-variance bound (seconds^2) for the first arrival.

    The (K+1)-th diagonal element of the inverse Fisher matrix: the
    first entry of the delay block.
    """
    k = inp.channel.n_paths
    return float(fisher_inverse(inp)[k, k])


def crb_curve(channel: ChannelRealization, grid: LagGrid, acf: AcfModel,
              cn0_dbhz, Ti: float) -> np.ndarray:
    """First-arrival CRB across a C/N0 sweep (seconds^2 per point)."""
    from .observation import n0_from_cn0

    out = np.empty(len(cn0_dbhz))
    for i, cn0 in enumerate(cn0_dbhz):
        out[i] = crb_first_path(CrbInput(channel=channel, grid=grid, acf=acf,
                                         N0=n0_from_cn0(cn0), Ti=Ti))
    return out


def crb_to_csv(cn0_dbhz, crb_seconds2, path) -> None:
    """Write (cn0_dbhz, crb_seconds2) rows for overlaying on MSE plots."""
    with open(path, "w") as fh:
        fh.write("cn0_dbhz,crb_seconds2\n")
        for c, v in zip(cn0_dbhz, crb_seconds2):
            fh.write(f"{float(c)!r},{float(v)!r}\n")
