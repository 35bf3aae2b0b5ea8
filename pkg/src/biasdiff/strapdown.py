"""Strapdown integration of corrected IMU samples into a trajectory.

Scheme: closed-form quaternion step on the midpoint body rate, then
trapezoidal velocity/position updates:

    q_{k+1} = quat_step(q_k, (w_k + w_{k+1}) / 2, dt)
    a_k     = C(q_k)^T f_k + g          (f = corrected specific force)
    v_{k+1} = v_k + (a_k + a_{k+1}) dt / 2
    p_{k+1} = p_k + v_k dt + (a_k + a_{k+1}) dt^2 / 4

Second-order accurate in dt; exact for constant rates and constant
global acceleration.  The core loop is batched so many windows (or
bias candidates) integrate in lockstep.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .geometry import quat_step_batch, quat_to_rot, rotate_inv_batch
from .imu_model import BiasState, ImuIntrinsics, ImuSeries, correct_arrays

if TYPE_CHECKING:  # pragma: no cover
    from .dataset import BiasTrack, Window

__all__ = [
    "NavState",
    "Trajectory",
    "integrate",
    "integrate_window",
    "integrate_arrays",
    "save_trajectory_csv",
]


@dataclass
class NavState:
    """Orientation (scalar-last, G->I), global position and velocity."""

    q: np.ndarray
    p: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)


@dataclass
class Trajectory:
    """Time-ordered nav states, struct-of-arrays."""

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("trajectory timestamps must be strictly increasing")

    def __len__(self):
        return len(self.t)

    def state(self, i: int) -> NavState:
        return NavState(self.q[i].copy(), self.p[i].copy(), self.v[i].copy(), float(self.t[i]))

    @property
    def final(self) -> NavState:
        return self.state(len(self.t) - 1)


def integrate_arrays(q0, p0, v0, t, omega, accel, gravity):
    """Batched strapdown core.

    q0 (B,4), p0/v0 (B,3); omega/accel (B,N,3) already bias-corrected.
    t is (N,) shared timestamps or (B,N) per-row timestamps.  Returns
    (q (B,N,4), p (B,N,3), v (B,N,3)).
    """
    q0 = np.atleast_2d(np.asarray(q0, dtype=float))
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    t = np.asarray(t, dtype=float)
    b, n = omega.shape[0], omega.shape[1]
    dts = np.diff(np.broadcast_to(t, (b, n)) if t.ndim == 1 else t, axis=1)
    q = np.empty((b, n, 4))
    p = np.empty((b, n, 3))
    v = np.empty((b, n, 3))
    q[:, 0], p[:, 0], v[:, 0] = q0, p0, v0
    a_prev = rotate_inv_batch(q0, accel[:, 0]) + gravity
    for k in range(n - 1):
        dt = dts[:, k]
        qk = quat_step_batch(q[:, k], 0.5 * (omega[:, k] + omega[:, k + 1]), dt)
        a_next = rotate_inv_batch(qk, accel[:, k + 1]) + gravity
        a_mid = 0.5 * (a_prev + a_next)
        q[:, k + 1] = qk
        v[:, k + 1] = v[:, k] + a_mid * dt[:, None]
        p[:, k + 1] = p[:, k] + (v[:, k] + 0.5 * a_mid * dt[:, None]) * dt[:, None]
        a_prev = a_next
    return q, p, v


def _bias_at(bias, t):
    """Per-sample bias arrays (N,3),(N,3) via zero-order hold."""
    n = len(t)
    if isinstance(bias, BiasState):
        return np.tile(bias.b_g, (n, 1)), np.tile(bias.b_a, (n, 1))
    # BiasTrack-shaped: attributes t, b_g, b_a
    idx = np.clip(np.searchsorted(bias.t, t, side="right") - 1, 0, len(bias.t) - 1)
    return bias.b_g[idx], bias.b_a[idx]


def integrate(init: NavState, samples: ImuSeries, bias, intr: ImuIntrinsics | None = None) -> Trajectory:
    """Integrate a corrected IMU sequence from an initial nav state.

    ``bias`` is a constant BiasState or a BiasTrack defined over the
    sample timestamps (zero-order hold at sample times).
    """
    if intr is None:
        intr = ImuIntrinsics()
    if len(samples) == 0:
        raise ValueError("empty IMU sequence")
    b_g, b_a = _bias_at(bias, samples.t)
    omega, accel = correct_arrays(samples.omega_m, accel_m=samples.accel_m, b_g=b_g, b_a=b_a, intr=intr)
    q, p, v = integrate_arrays(
        init.q[None], init.p[None], init.v[None], samples.t, omega[None], accel[None], intr.gravity
    )
    return Trajectory(samples.t.copy(), q[0], p[0], v[0])


def integrate_window(window: "Window", predicted_bias, intr: ImuIntrinsics | None = None):
    """Integrate one window from its ground-truth initial state.

    Returns (Trajectory, final NavState).  The bias track must cover
    the window's time span (within one sample period).
    """
    t = window.imu.t
    dt = (t[-1] - t[0]) / max(len(t) - 1, 1)
    if not isinstance(predicted_bias, BiasState):
        if predicted_bias.t[0] > t[0] + dt or predicted_bias.t[-1] < t[-1] - dt:
            raise ValueError(
                f"bias track [{predicted_bias.t[0]:.6f}, {predicted_bias.t[-1]:.6f}] "
                f"does not cover window [{t[0]:.6f}, {t[-1]:.6f}]"
            )
    traj = integrate(window.init_state, window.imu, predicted_bias, intr)
    return traj, traj.final


def save_trajectory_csv(traj: Trajectory, path):
    """Dump as CSV: t, px, py, pz, qx, qy, qz, qw, vx, vy, vz."""
    with open(path, "w") as fh:
        fh.write("t,px,py,pz,qx,qy,qz,qw,vx,vy,vz\n")
        for i in range(len(traj)):
            row = [traj.t[i], *traj.p[i], *traj.q[i], *traj.v[i]]
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def gravity_aligned_accel(traj: Trajectory, samples: ImuSeries, bias, intr: ImuIntrinsics):
    """Global-frame acceleration along a trajectory (debug/demo helper)."""
    b_g, b_a = _bias_at(bias, samples.t)
    _, accel = correct_arrays(samples.omega_m, samples.accel_m, b_g, b_a, intr)
    out = np.empty_like(accel)
    for i in range(len(samples)):
        out[i] = quat_to_rot(traj.q[i]).T @ accel[i] + intr.gravity
    return out
