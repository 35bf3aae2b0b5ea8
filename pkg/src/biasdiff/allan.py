"""Allan-deviation analysis, noise parameter fitting, and the best-of-K
random-walk oracle baseline.

The overlapping Allan deviation is computed from the integrated signal;
for a white-noise density N it falls as N/sqrt(tau), for a rate random
walk K it rises as K*sqrt(tau/3).  Fitting runs a fixed-slope least
squares in log-log space inside configurable tau bands, with a
free-slope sanity check per band.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import quat_to_rot, rotation_angle
from .imu_model import BiasState, ImuIntrinsics, ImuSeries, NoiseParams, correct_arrays
from .strapdown import NavState, integrate_arrays

__all__ = [
    "AllanCurve",
    "CalibrationError",
    "FitConfig",
    "allan_deviation",
    "default_taus",
    "fit_noise_params",
    "initial_bias_estimate",
    "random_walk_oracle",
    "save_allan_csv",
]


class CalibrationError(Exception):
    """Static-data calibration could not identify the requested parameters."""


@dataclass
class AllanCurve:
    """taus (M,), adev (M,) or (M, k) for k parallel channels."""

    taus: np.ndarray
    adev: np.ndarray

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.adev = np.asarray(self.adev, dtype=float)
        if not np.all(np.diff(self.taus) > 0):
            raise ValueError("taus must be strictly increasing")
        if np.any(self.adev < 0):
            raise ValueError("Allan deviation cannot be negative")


def allan_deviation(signal, rate: float, taus) -> AllanCurve:
    """Overlapping Allan deviation of a uniformly sampled rate signal.

    signal: (N,) or (N, k).  Every requested tau must satisfy
    2*tau*rate < N.
    """
    y = np.asarray(signal, dtype=float)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    n = y.shape[0]
    taus = np.sort(np.asarray(taus, dtype=float))
    tau0 = 1.0 / rate
    theta = np.vstack([np.zeros((1, y.shape[1])), np.cumsum(y, axis=0) * tau0])
    out = np.empty((len(taus), y.shape[1]))
    for j, tau in enumerate(taus):
        m = int(round(tau * rate))
        if m < 1 or 2 * m >= n:
            raise ValueError(f"tau {tau}s too large for series of {n} samples at {rate} Hz")
        d = theta[2 * m:] - 2.0 * theta[m:n + 1 - m] + theta[:n + 1 - 2 * m]
        out[j] = np.sqrt(0.5 * np.mean(d * d, axis=0)) / (m * tau0)
    return AllanCurve(taus, out[:, 0] if squeeze else out)


def default_taus(rate: float, n_samples: int, points_per_decade: int = 8) -> np.ndarray:
    """Log-spaced taus covering what the series length allows."""
    lo = 1.0 / rate
    hi = (n_samples - 1) / (2.0 * rate)
    if hi <= lo:
        raise ValueError("series too short for Allan analysis")
    count = max(int(np.log10(hi / lo) * points_per_decade), 2)
    taus = np.geomspace(lo, hi * 0.999, count)
    # snap to integer multiples of the sample period, dedupe
    m = np.unique(np.maximum(np.round(taus * rate).astype(int), 1))
    return m[2 * m < n_samples] / rate


@dataclass
class FitConfig:
    """Slope-region bands and guards for fit_noise_params."""

    white_band: tuple = (0.01, 1.0)
    rw_band: tuple = (100.0, 1000.0)
    points_per_band: int = 12
    slope_tol: float = 0.25
    min_duration: float = 600.0
    gyro_motion_std: float = 0.2     # rad/s
    accel_motion_std: float = 0.5    # m/s^2


def _check_static(samples: ImuSeries, cfg: FitConfig):
    duration = samples.t[-1] - samples.t[0]
    if duration < cfg.min_duration:
        raise CalibrationError(
            f"need at least {cfg.min_duration:.0f}s of static data, got {duration:.0f}s")
    g_std = float(np.max(np.std(samples.omega_m, axis=0)))
    a_std = float(np.max(np.std(samples.accel_m, axis=0)))
    if g_std > cfg.gyro_motion_std or a_std > cfg.accel_motion_std:
        raise CalibrationError(
            f"sequence does not look stationary (gyro std {g_std:.3g} rad/s, "
            f"accel std {a_std:.3g} m/s^2)")


def _band_taus(band, rate, n, points):
    lo, hi = band
    hi = min(hi, (n - 1) / (2.0 * rate) * 0.999)
    lo = max(lo, 1.0 / rate)
    if hi <= lo:
        raise CalibrationError(f"band {band} not resolvable by series length")
    m = np.unique(np.maximum(np.round(np.geomspace(lo, hi, points) * rate).astype(int), 1))
    return m[2 * m < n] / rate


def _fit_band(signal, rate, band, points, slope, slope_tol, offset):
    """Fixed-slope log-log fit; returns per-axis coefficient estimates.

    slope=-0.5 with offset 1 fits sigma = N/sqrt(tau); slope=+0.5 with
    offset 3 fits sigma = K*sqrt(tau/3).
    """
    taus = _band_taus(band, rate, signal.shape[0], points)
    if len(taus) < 3:
        raise CalibrationError(f"band {band}: fewer than 3 usable taus")
    curve = allan_deviation(signal, rate, taus)
    log_tau = np.log(curve.taus)[:, None]
    log_dev = np.log(np.maximum(curve.adev, 1e-300))
    free_slope = np.polyfit(log_tau[:, 0], log_dev, 1)[0]
    bad = np.abs(free_slope - slope) > slope_tol
    if np.any(bad):
        raise CalibrationError(
            f"band {band}: log-log slope {np.round(free_slope, 3)} not within "
            f"{slope_tol} of {slope:+.1f}; no identifiable slope region")
    coef = np.exp(np.mean(log_dev - slope * (log_tau - np.log(offset)), axis=0))
    return coef


def fit_noise_params(imu_static: ImuSeries, cfg: FitConfig | None = None) -> NoiseParams:
    """Recover noise densities and random-walk rates from static data.

    Densities come from the -1/2-slope band, walk rates from the
    +1/2-slope band; each estimate is averaged across the three axes.
    """
    cfg = cfg or FitConfig()
    _check_static(imu_static, cfg)
    rate = (len(imu_static) - 1) / (imu_static.t[-1] - imu_static.t[0])
    pts = cfg.points_per_band
    sigma_g = _fit_band(imu_static.omega_m, rate, cfg.white_band, pts, -0.5, cfg.slope_tol, 1.0)
    sigma_a = _fit_band(imu_static.accel_m, rate, cfg.white_band, pts, -0.5, cfg.slope_tol, 1.0)
    eta_g = _fit_band(imu_static.omega_m, rate, cfg.rw_band, pts, +0.5, cfg.slope_tol, 3.0)
    eta_a = _fit_band(imu_static.accel_m, rate, cfg.rw_band, pts, +0.5, cfg.slope_tol, 3.0)
    return NoiseParams(sigma_g=float(np.mean(sigma_g)), sigma_a=float(np.mean(sigma_a)),
                       eta_g=float(np.mean(eta_g)), eta_a=float(np.mean(eta_a)))


def initial_bias_estimate(imu_static: ImuSeries, intr: ImuIntrinsics | None = None,
                          attitude=None, cfg: FitConfig | None = None) -> BiasState:
    """Average static readings and subtract the expected gravity reaction.

    If the attitude (G->I quaternion) is known it fixes the gravity
    direction; otherwise the direction is taken from the mean
    accelerometer reading.
    """
    intr = intr or ImuIntrinsics()
    cfg = cfg or FitConfig(min_duration=0.0)
    _check_static(imu_static, cfg)
    mean_w = np.mean(imu_static.omega_m, axis=0)
    mean_a = np.mean(imu_static.accel_m, axis=0)
    if attitude is not None:
        expected = quat_to_rot(attitude) @ (-intr.gravity)
    else:
        norm = np.linalg.norm(mean_a)
        if norm < 1e-9:
            raise CalibrationError("mean accelerometer reading is zero; cannot infer gravity")
        expected = mean_a / norm * np.linalg.norm(intr.gravity)
    return BiasState(b_g=mean_w, b_a=mean_a - expected)


def random_walk_oracle(window, noise: NoiseParams, K: int = 50, rng=None,
                       intr: ImuIntrinsics | None = None):
    """Best-of-K random-walk bias baseline (ground-truth-selected).

    Starting from the window's true initial bias, draws K random-walk
    continuations, integrates each corrected window, and returns the
    (BiasTrack, final NavState) of the candidate closest to the true
    final state: position error first, orientation error then candidate
    index as tiebreakers.  This is an upper bound, not an algorithm.
    """
    from .dataset import BiasTrack  # local import to avoid a cycle

    if K < 1:
        raise ValueError("K must be at least 1")
    rng = rng or np.random.default_rng(0)
    intr = intr or ImuIntrinsics()
    t = window.imu.t
    n = len(t)
    dt = np.diff(t)
    b0_g = window.gt_bias.b_g[0]
    b0_a = window.gt_bias.b_a[0]

    b_g = np.empty((K, n, 3))
    b_a = np.empty((K, n, 3))
    b_g[:, 0] = b0_g
    b_a[:, 0] = b0_a
    steps_g = rng.standard_normal((K, n - 1, 3)) * (noise.eta_g * np.sqrt(dt))[None, :, None]
    steps_a = rng.standard_normal((K, n - 1, 3)) * (noise.eta_a * np.sqrt(dt))[None, :, None]
    b_g[:, 1:] = b0_g + np.cumsum(steps_g, axis=1)
    b_a[:, 1:] = b0_a + np.cumsum(steps_a, axis=1)

    omega, accel = correct_arrays(window.imu.omega_m[None], window.imu.accel_m[None], b_g, b_a, intr)
    init = window.init_state
    q, p, v = integrate_arrays(np.tile(init.q, (K, 1)), np.tile(init.p, (K, 1)),
                               np.tile(init.v, (K, 1)), t, omega, accel, intr.gravity)

    target = window.final_state
    pos_err = np.linalg.norm(p[:, -1] - target.p, axis=1)
    R_gt = quat_to_rot(target.q)
    ang_err = np.array([rotation_angle(R_gt.T @ quat_to_rot(q[k, -1])) for k in range(K)])
    best = min(range(K), key=lambda k: (pos_err[k], ang_err[k], k))

    track = BiasTrack(t.copy(), b_g[best], b_a[best])
    final = NavState(q[best, -1], p[best, -1], v[best, -1], float(t[-1]))
    return track, final


def save_allan_csv(curve: AllanCurve, path, labels=None):
    """Export an Allan curve as CSV: tau, then one column per channel."""
    adev = curve.adev if curve.adev.ndim == 2 else curve.adev[:, None]
    labels = labels or [f"adev{k}" for k in range(adev.shape[1])]
    with open(path, "w") as fh:
        fh.write("tau," + ",".join(labels) + "\n")
        for i in range(len(curve.taus)):
            fh.write(",".join(repr(float(x)) for x in [curve.taus[i], *adev[i]]) + "\n")
