"""Quaternion and rotation algebra for the strapdown kinematics.

Conventions (fixed once, used everywhere):

* Quaternions are numpy arrays of shape ``(4,)`` stored scalar-LAST,
  ``q = [x, y, z, w]``.
* ``q`` represents the rotation from the global frame {G} into the IMU
  frame {I}; ``quat_to_rot(q)`` returns the matrix ``C`` with
  ``v_I = C @ v_G``.
* The kinematics are ``q_dot = 0.5 * omega_matrix(omega) @ q`` with
  ``omega`` the body angular rate in {I}.  Under this convention
  ``C(t+dt) = expm(-skew(omega)*dt) @ C(t)`` for constant rate.
* ``q`` and ``-q`` encode the same rotation (double cover).

At file boundaries (e.g. ASL ground-truth CSVs, which store a
scalar-first body-to-world quaternion) the component order is converted
once; see ``dataset`` for the conversion.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "skew",
    "omega_matrix",
    "quat_identity",
    "quat_normalize",
    "quat_to_rot",
    "rot_to_quat",
    "quat_step",
    "quat_step_batch",
    "rotate_batch",
    "rotate_inv_batch",
    "rotation_angle",
]


def skew(omega) -> np.ndarray:
    """Cross-product matrix: skew(a) @ b == cross(a, b)."""
    x, y, z = np.asarray(omega, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def omega_matrix(omega) -> np.ndarray:
    """4x4 rate matrix of the quaternion kinematics.

    Upper-left block is -skew(omega), upper-right column omega,
    bottom row (-omega^T, 0).
    """
    omega = np.asarray(omega, dtype=float)
    out = np.zeros((4, 4))
    out[:3, :3] = -skew(omega)
    out[:3, 3] = omega
    out[3, :3] = -omega
    return out


def quat_identity() -> np.ndarray:
    return np.array([0.0, 0.0, 0.0, 1.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize zero or non-finite quaternion")
    return q / n


def quat_to_rot(q) -> np.ndarray:
    """Rotation matrix C(q) with v_I = C @ v_G.

    Raises ValueError if the input deviates from unit norm by more
    than 1e-6.
    """
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"quaternion norm {n} deviates from 1 beyond 1e-6")
    v, w = q[:3] / n, q[3] / n
    return (2.0 * w * w - 1.0) * np.eye(3) - 2.0 * w * skew(v) + 2.0 * np.outer(v, v)


def rot_to_quat(C) -> np.ndarray:
    """Inverse of quat_to_rot (up to sign); returns the q with w >= 0."""
    C = np.asarray(C, dtype=float)
    tr = np.trace(C)
    # Shepperd-style branch on the largest of (w^2, x^2, y^2, z^2).
    cand = np.array([2 * C[0, 0] + 1 - tr, 2 * C[1, 1] + 1 - tr, 2 * C[2, 2] + 1 - tr, 1 + tr])
    k = int(np.argmax(cand))
    if k == 3:
        w = 0.5 * np.sqrt(1.0 + tr)
        s = 0.25 / w
        q = np.array(
            [s * (C[1, 2] - C[2, 1]), s * (C[2, 0] - C[0, 2]), s * (C[0, 1] - C[1, 0]), w]
        )
    else:
        i, j, l = k, (k + 1) % 3, (k + 2) % 3
        vi = 0.5 * np.sqrt(max(cand[k], 0.0))
        s = 0.25 / vi
        q = np.zeros(4)
        q[i] = vi
        q[j] = s * (C[i, j] + C[j, i])
        q[l] = s * (C[i, l] + C[l, i])
        q[3] = s * (C[j, l] - C[l, j])
    q = quat_normalize(q)
    return q if q[3] >= 0 else -q


def _omega_apply(q, omega):
    """omega_matrix(omega) @ q without building the 4x4."""
    v, w = q[..., :3], q[..., 3:4]
    top = -np.cross(omega, v) + w * omega
    bot = -np.sum(omega * v, axis=-1, keepdims=True)
    return np.concatenate([top, bot], axis=-1)


def quat_step(q, omega, dt: float) -> np.ndarray:
    """Propagate q over dt under constant body rate omega.

    Closed-form exponential exp(0.5*Omega(omega)*dt) applied to q,
    exact for piecewise-constant rate; renormalized.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    return quat_step_batch(np.asarray(q, dtype=float), np.asarray(omega, dtype=float), dt)


def quat_step_batch(q, omega, dt) -> np.ndarray:
    """Vectorized quat_step: q (..., 4), omega (..., 3), dt scalar or (...)."""
    q = np.asarray(q, dtype=float)
    omega = np.asarray(omega, dtype=float)
    dt = np.asarray(dt, dtype=float)
    rate = np.linalg.norm(omega, axis=-1)
    half = 0.5 * rate * dt
    # sin(half)/rate -> dt/2 as rate -> 0; series keeps it smooth.
    small = rate * dt < 1e-8
    with np.errstate(invalid="ignore", divide="ignore"):
        coef = np.where(small, 0.5 * dt, np.sin(half) / np.where(rate == 0, 1.0, rate))
    out = np.cos(half)[..., None] * q + coef[..., None] * _omega_apply(q, omega)
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def rotate_batch(q, x) -> np.ndarray:
    """C(q) x for batched q (..., 4), x (..., 3): global -> body."""
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    v, w = q[..., :3], q[..., 3:4]
    return ((2.0 * w * w - 1.0) * x - 2.0 * w * np.cross(v, x)
            + 2.0 * v * np.sum(v * x, axis=-1, keepdims=True))


def rotate_inv_batch(q, x) -> np.ndarray:
    """C(q)^T x for batched q (..., 4), x (..., 3): body -> global."""
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    v, w = q[..., :3], q[..., 3:4]
    return ((2.0 * w * w - 1.0) * x + 2.0 * w * np.cross(v, x)
            + 2.0 * v * np.sum(v * x, axis=-1, keepdims=True))


def rotation_angle(C) -> float:
    """Geodesic angle (radians) of a rotation matrix."""
    c = (np.trace(np.asarray(C)) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))
