"""Monte-Carlo experiment driver: MSE of the first-arrival delay vs C/N0.

Each trial draws a channel realization and a common first-arrival offset
uniform over [-0.5Tc, 0.5Tc), synthesizes one correlator observation,
and hands the identical data to every configured algorithm.  Per-trial
random streams are split from the master seed by counter-based keys
(point index, trial index), so results are independent of execution
order and schedule.

Trials where an algorithm validates no first arrival are scored at the
worst in-window squared error and counted as failures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel as chan
from . import estimator
from .discriminator import EL_NARROW_CHIPS, EL_WIDE_CHIPS
from .observation import (CorrelatorObservation, default_grid, n0_from_cn0,
                          synthesize, waveform_oracle)
from .signal_model import CA_CHIP_S, ideal_acf, make_bandlimited_acf


@dataclass(frozen=True)
class AlgorithmSpec:
    """One estimator variant to run inside the sweep.

    kind "lims": M paths, whitening, update modes, iteration budget.
    kind "el":   early-late DLL with the given spacing ("wide", "narrow"
    or a chip count) iterated to steady state on each observation.
    """

    label: str
    kind: str = "lims"
    M: int = 2
    whitening: bool = True
    coeff_update: str = "exact-ls"
    delay_update: str = "signed"
    iterations: int = 500
    beta_chips: float | None = None
    spacing: object = "wide"
    loop_gain_chips: float = 0.1

    def lims_config(self, tc: float) -> estimator.LimsConfig:
        beta = None if self.beta_chips is None else self.beta_chips * tc
        return estimator.LimsConfig(
            M=self.M, iterations=self.iterations, beta=beta,
            coeff_update=self.coeff_update, delay_update=self.delay_update,
            whitening=self.whitening)

    def spacing_seconds(self, tc: float) -> float:
        if self.spacing == "wide":
            return EL_WIDE_CHIPS * tc
        if self.spacing == "narrow":
            return EL_NARROW_CHIPS * tc
        return float(self.spacing) * tc


def lims_spec(label: str, m: int, whitening: bool, **kw) -> AlgorithmSpec:
    return AlgorithmSpec(label=label, kind="lims", M=m, whitening=whitening, **kw)


def el_spec(label: str, spacing: object, **kw) -> AlgorithmSpec:
    return AlgorithmSpec(label=label, kind="el", spacing=spacing, **kw)


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep settings; defaults follow the desk-scale experiment setup."""

    channel_profile: object = "two_path_nonfading"
    cn0_sweep_dbhz: tuple = (30.0, 40.0, 50.0, 60.0)
    trials: int = 500
    algorithms: tuple = ()
    bandwidth_hz: float | None = None
    Ti: float = 0.01
    window_chips: float = 3.0
    ts_chips: float = 0.1
    seed: int = 0
    tc: float = CA_CHIP_S
    oracle: bool = False
    prn: int = 1
    custom_profile: dict | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.cn0_sweep_dbhz:
            raise ValueError("cn0 sweep must be non-empty")
        if not self.algorithms:
            raise ValueError("at least one algorithm is required")

    def profile(self) -> chan.PowerDelayProfile:
        p = self.channel_profile
        if isinstance(p, chan.PowerDelayProfile):
            return p
        if p == "custom":
            if not self.custom_profile:
                raise ValueError("channel 'custom' needs a profile table")
            return chan.profile_from_dict(self.custom_profile, self.tc)
        try:
            return chan.NAMED_PROFILES[p](self.tc)
        except KeyError:
            raise ValueError(f"unknown channel profile {p!r}") from None


@dataclass(frozen=True)
class ResultRow:
    algorithm: str
    cn0_dbhz: float
    mse_seconds2: float
    mse_chips2: float
    trial_count: int
    failure_count: int


def trial_rng(seed: int, point: int, trial: int) -> np.random.Generator:
    """Counter-keyed stream: independent of execution order and schedule."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(point, trial))))


def _generate_point(config: ExperimentConfig, profile, grid, acf, signal_acf,
                    point: int, cn0: float):
    n = grid.n
    ys = np.empty((config.trials, n), dtype=np.complex128)
    tau0 = np.empty(config.trials)
    for ti in range(config.trials):
        rng = trial_rng(config.seed, point, ti)
        real = chan.realize(profile, rng)
        offset = rng.uniform(-0.5 * config.tc, 0.5 * config.tc)
        shifted = real.shifted(offset)
        if config.oracle:
            obs = waveform_oracle(shifted, config.prn, None, cn0, config.Ti,
                                  grid, config.bandwidth_hz, rng, acf=acf)
        else:
            obs = synthesize(shifted, grid, acf, cn0, config.Ti, rng,
                             signal_acf=signal_acf)
        ys[ti] = obs.y
        tau0[ti] = shifted.delays[0]
    return ys, tau0


def _score_lims(spec: AlgorithmSpec, ys, tau0, grid, acf, noise_scale,
                worst_sq: float):
    cfg = spec.lims_config(acf.Tc)
    sq = np.empty(ys.shape[0])
    failures = 0
    for ti in range(ys.shape[0]):
        obs = CorrelatorObservation(y=ys[ti], grid=grid,
                                    noise_scale=noise_scale, acf=acf)
        est = estimator.run(obs, cfg)
        if est.first_arrival is None:
            failures += 1
            sq[ti] = worst_sq
        else:
            sq[ti] = (est.first_arrival - tau0[ti]) ** 2
    return sq, failures


def _score_el(spec: AlgorithmSpec, ys, tau0, grid, tc: float):
    """Steady state of the first-order DLL on each static observation,
    vectorized across trials (uniform lag grid)."""
    lags = grid.lags
    step = np.diff(lags)
    if not np.allclose(step, step[0]):
        raise ValueError("vectorized EL scoring needs a uniform grid")
    dlag = step[0]
    lo, hi = lags[0], lags[-1]
    half = spec.spacing_seconds(tc) / 2.0
    gain = spec.loop_gain_chips * tc
    n_tr = ys.shape[0]
    rows = np.arange(n_tr)
    tau = np.zeros(n_tr)

    def sample(x):
        x = np.clip(x, lo, hi)
        pos = (x - lo) / dlag
        i = np.minimum(pos.astype(np.int64), lags.size - 2)
        frac = pos - i
        return ys[rows, i] * (1.0 - frac) + ys[rows, i + 1] * frac

    for _ in range(spec.iterations):
        d = np.abs(sample(tau - half)) ** 2 - np.abs(sample(tau + half)) ** 2
        tau = np.clip(tau - gain * d, lo, hi)
    return (tau - tau0) ** 2, 0


def run_experiment(config: ExperimentConfig):
    """Run the sweep; returns one ResultRow per (algorithm, C/N0 point)."""
    profile = config.profile()
    grid = default_grid(config.tc, config.ts_chips, config.window_chips / 2.0)
    acf = ideal_acf(config.tc)
    signal_acf = (make_bandlimited_acf(config.tc, config.bandwidth_hz)
                  if config.bandwidth_hz else None)
    worst_sq = (config.window_chips / 2.0 * config.tc) ** 2
    rows = []
    for point, cn0 in enumerate(config.cn0_sweep_dbhz):
        ys, tau0 = _generate_point(config, profile, grid, acf, signal_acf,
                                   point, float(cn0))
        noise_scale = n0_from_cn0(float(cn0)) / config.Ti
        for spec in config.algorithms:
            if spec.kind == "lims":
                sq, failures = _score_lims(spec, ys, tau0, grid, acf,
                                           noise_scale, worst_sq)
            elif spec.kind == "el":
                sq, failures = _score_el(spec, ys, tau0, grid, config.tc)
            else:
                raise ValueError(f"unknown algorithm kind {spec.kind!r}")
            mse = float(np.mean(sq))
            rows.append(ResultRow(algorithm=spec.label, cn0_dbhz=float(cn0),
                                  mse_seconds2=mse,
                                  mse_chips2=mse / config.tc ** 2,
                                  trial_count=config.trials,
                                  failure_count=failures))
    return rows


RESULT_HEADER = "algorithm,cn0_dbhz,mse_seconds2,mse_chips2,trials,failures"


def emit_results(rows, path) -> None:
    """Write the per-(algorithm, point) MSE table as CSV."""
    if not rows:
        raise ValueError("no result rows to emit")
    with open(path, "w") as fh:
        fh.write(RESULT_HEADER + "\n")
        for r in rows:
            fh.write(f"{r.algorithm},{r.cn0_dbhz!r},{r.mse_seconds2!r},"
                     f"{r.mse_chips2!r},{r.trial_count},{r.failure_count}\n")


def parse_results(path):
    """Inverse of emit_results."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != RESULT_HEADER:
            raise ValueError(f"unexpected results header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            alg, cn0, mse_s, mse_c, tr, fl = line.strip().split(",")
            rows.append(ResultRow(algorithm=alg, cn0_dbhz=float(cn0),
                                  mse_seconds2=float(mse_s),
                                  mse_chips2=float(mse_c),
                                  trial_count=int(tr), failure_count=int(fl)))
    return rows


def emit_curves(rows, path) -> None:
    """Figure-style pivot: one C/N0 column plus one MSE(chips^2) column
    per algorithm, in first-seen order."""
    if not rows:
        raise ValueError("no result rows to emit")
    algs = list(dict.fromkeys(r.algorithm for r in rows))
    points = sorted({r.cn0_dbhz for r in rows})
    table = {(r.algorithm, r.cn0_dbhz): r.mse_chips2 for r in rows}
    with open(path, "w") as fh:
        fh.write("cn0_dbhz," + ",".join(algs) + "\n")
        for cn0 in points:
            vals = [repr(table[(a, cn0)]) if (a, cn0) in table else ""
                    for a in algs]
            fh.write(f"{cn0!r}," + ",".join(vals) + "\n")


def run_tracking(config: ExperimentConfig, epochs: int,
                 iterations_per_epoch: int, spec: AlgorithmSpec):
    """Epoch-recursive tracking on a static channel with fresh noise.

    Returns (true_first_arrival, per-epoch first-arrival estimates); the
    estimate is NaN for epochs where validation rejects every path.
    """
    profile = config.profile()
    grid = default_grid(config.tc, config.ts_chips, config.window_chips / 2.0)
    acf = ideal_acf(config.tc)
    cn0 = float(config.cn0_sweep_dbhz[0])
    rng = trial_rng(config.seed, 0, 0)
    real = chan.realize(profile, rng)
    offset = rng.uniform(-0.5 * config.tc, 0.5 * config.tc)
    shifted = real.shifted(offset)
    observations = [synthesize(shifted, grid, acf, cn0, config.Ti, rng)
                    for _ in range(epochs)]
    if spec.kind == "el":
        from .discriminator import ElConfig, dll_track
        el = ElConfig(spacing=spec.spacing_seconds(config.tc),
                      loop_gain=spec.loop_gain_chips * config.tc,
                      mode=str(spec.spacing))
        estimates, _ = dll_track(observations, el,
                                 iterations=iterations_per_epoch)
        return shifted.delays[0], estimates
    ests = estimator.track(observations, spec.lims_config(config.tc),
                           iterations_per_epoch)
    vals = np.array([np.nan if e.first_arrival is None else e.first_arrival
                     for e in ests])
    return shifted.delays[0], vals
