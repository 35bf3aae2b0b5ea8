"""Gyro/accelerometer measurement models: synthesis and bias correction.

Measurement model (body frame {I}, global frame {G}):

    f      = C(q) (a_G - g)                       specific force in {I}
    accel_m = f + b_a + n_a
    omega_m = T_g omega_I + T_s f + b_g + n_g

``T_g`` is the gyro shape matrix (misalignment + scale), ``T_s`` the
g-sensitivity coupling.  The ``T_s f`` term reads the g-sensitivity
input as the specific force in {I}, i.e. the noise- and bias-free part
of the accelerometer measurement; that interpretation is isolated here
and in ``correct``.

White noise is discretized as sigma / sqrt(dt) per sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import quat_to_rot

__all__ = [
    "ImuSample",
    "ImuSeries",
    "BiasState",
    "ImuIntrinsics",
    "NoiseParams",
    "specific_force",
    "synthesize_sample",
    "correct",
    "correct_arrays",
]

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass
class ImuSample:
    """One timestamped 6-axis reading: rad/s and m/s^2."""

    t: float
    omega_m: np.ndarray
    accel_m: np.ndarray


@dataclass
class ImuSeries:
    """Struct-of-arrays IMU sequence: t (N,), omega_m (N,3), accel_m (N,3)."""

    t: np.ndarray
    omega_m: np.ndarray
    accel_m: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.omega_m = np.asarray(self.omega_m, dtype=float)
        self.accel_m = np.asarray(self.accel_m, dtype=float)
        if not (len(self.t) == len(self.omega_m) == len(self.accel_m)):
            raise ValueError("misaligned IMU arrays")
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("IMU timestamps must be strictly increasing")

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i) -> "ImuSeries":
        return ImuSeries(self.t[i], self.omega_m[i], self.accel_m[i])

    def sample(self, i: int) -> ImuSample:
        return ImuSample(float(self.t[i]), self.omega_m[i].copy(), self.accel_m[i].copy())

    @staticmethod
    def from_samples(samples) -> "ImuSeries":
        return ImuSeries(
            np.array([s.t for s in samples]),
            np.stack([s.omega_m for s in samples]),
            np.stack([s.accel_m for s in samples]),
        )


@dataclass
class BiasState:
    """Constant bias pair: b_g rad/s, b_a m/s^2."""

    b_g: np.ndarray
    b_a: np.ndarray

    def __post_init__(self):
        self.b_g = np.asarray(self.b_g, dtype=float)
        self.b_a = np.asarray(self.b_a, dtype=float)

    @staticmethod
    def zero() -> "BiasState":
        return BiasState(np.zeros(3), np.zeros(3))


def _default_tg():
    return np.eye(3)


def _default_ts():
    return np.zeros((3, 3))


def _default_gravity():
    return GRAVITY.copy()


@dataclass
class ImuIntrinsics:
    """Sensor intrinsics: gyro shape matrix, g-sensitivity, gravity in {G}."""

    T_g: np.ndarray = field(default_factory=_default_tg)
    T_s: np.ndarray = field(default_factory=_default_ts)
    gravity: np.ndarray = field(default_factory=_default_gravity)

    def __post_init__(self):
        self.T_g = np.asarray(self.T_g, dtype=float)
        self.T_s = np.asarray(self.T_s, dtype=float)
        self.gravity = np.asarray(self.gravity, dtype=float)
        if abs(np.linalg.det(self.T_g)) < 1e-12:
            raise ValueError("gyro shape matrix T_g must be invertible")

    def T_g_inv(self) -> np.ndarray:
        return np.linalg.inv(self.T_g)


@dataclass
class NoiseParams:
    """Continuous-time noise densities (per sqrt(Hz)) and bias walk rates."""

    sigma_g: float = 0.0
    sigma_a: float = 0.0
    eta_g: float = 0.0
    eta_a: float = 0.0

    def __post_init__(self):
        if min(self.sigma_g, self.sigma_a, self.eta_g, self.eta_a) < 0:
            raise ValueError("noise parameters must be non-negative")


def specific_force(q, a_G, gravity) -> np.ndarray:
    """C(q) (a_G - g): what an ideal accelerometer senses."""
    return quat_to_rot(q) @ (np.asarray(a_G, dtype=float) - gravity)


def synthesize_sample(q, a_G, omega_I, bias: BiasState, intr: ImuIntrinsics,
                      noise: NoiseParams, dt: float, rng, t: float = 0.0) -> ImuSample:
    """Corrupt true motion (attitude q, global accel a_G, body rate omega_I)
    into one measured sample."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    f = specific_force(q, a_G, intr.gravity)
    n_g = rng.standard_normal(3) * (noise.sigma_g / np.sqrt(dt))
    n_a = rng.standard_normal(3) * (noise.sigma_a / np.sqrt(dt))
    omega_m = intr.T_g @ np.asarray(omega_I, dtype=float) + intr.T_s @ f + bias.b_g + n_g
    accel_m = f + bias.b_a + n_a
    return ImuSample(t, omega_m, accel_m)


def correct(sample: ImuSample, bias: BiasState, intr: ImuIntrinsics):
    """Invert the measurement model: returns (omega, accel) with the bias
    removed, accel being the estimated specific force."""
    accel = sample.accel_m - bias.b_a
    omega = intr.T_g_inv() @ (sample.omega_m - bias.b_g - intr.T_s @ accel)
    return omega, accel


def correct_arrays(omega_m, accel_m, b_g, b_a, intr: ImuIntrinsics):
    """Vectorized correct: all inputs (..., 3); returns (omega, accel)."""
    accel = accel_m - b_a
    omega = (omega_m - b_g - accel @ intr.T_s.T) @ intr.T_g_inv().T
    return omega, accel
