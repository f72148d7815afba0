"""Quaternion and frame-rotation utilities.

Conventions: scalar-first unit quaternions [w, x, y, z] encode the body to
NED (north-east-down) rotation. All functions broadcast over leading batch
dimensions, with quaternions in (..., 4) arrays and vectors in (..., 3).
Component formulas are written out explicitly so that batched and unbatched
evaluation follow the identical floating-point path.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidStateError

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Rescale to unit norm."""
    n = np.sqrt(np.sum(q * q, axis=-1, keepdims=True))
    return q / n


def quat_norm_error(q: np.ndarray) -> np.ndarray:
    """Absolute deviation of the quaternion norm from 1."""
    return np.abs(np.sqrt(np.sum(q * q, axis=-1)) - 1.0)


def quat_derivative(q: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Quaternion kinematics: rate of change of q under body rates omega.

    Implements q_dot = 0.5 * Omega(omega) * q for [w, x, y, z] quaternions
    and body rates [p, q, r] in rad/s. The result is orthogonal to q, so the
    quaternion norm is preserved to integration accuracy.
    """
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(omega))):
        raise InvalidStateError("non-finite quaternion or angular rate")
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    p, r_q, r = omega[..., 0], omega[..., 1], omega[..., 2]
    dw = 0.5 * (-p * qx - r_q * qy - r * qz)
    dx = 0.5 * (p * qw + r * qy - r_q * qz)
    dy = 0.5 * (r_q * qw - r * qx + p * qz)
    dz = 0.5 * (r * qw + r_q * qx - p * qy)
    return np.stack([dw, dx, dy, dz], axis=-1)


def rotate_body_to_ned(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate a body-frame vector into the NED frame."""
    return _rotate(q[..., 0], q[..., 1], q[..., 2], q[..., 3], v)


def rotate_ned_to_body(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate an NED-frame vector into the body frame (conjugate rotation)."""
    return _rotate(q[..., 0], -q[..., 1], -q[..., 2], -q[..., 3], v)


def _rotate(w, x, y, z, v):
    # v' = v + 2*w*(u x v) + 2*u x (u x v) with u = [x, y, z]
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    cx = y * vz - z * vy
    cy = z * vx - x * vz
    cz = x * vy - y * vx
    dx = y * cz - z * cy
    dy = z * cx - x * cz
    dz = x * cy - y * cx
    return np.stack(
        [vx + 2.0 * (w * cx + dx), vy + 2.0 * (w * cy + dy), vz + 2.0 * (w * cz + dz)],
        axis=-1,
    )


def quat_to_rotation_matrix(q: np.ndarray) -> np.ndarray:
    """Body-to-NED rotation matrix (..., 3, 3) for test oracles."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def quat_to_euler(q: np.ndarray):
    """Roll, pitch, yaw (ZYX convention) from a body-to-NED quaternion."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    phi = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    theta = np.arcsin(np.clip(2.0 * (w * y - x * z), -1.0, 1.0))
    psi = np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return phi, theta, psi


def euler_to_quat(phi: float, theta: float, psi: float) -> np.ndarray:
    """Quaternion from roll, pitch, yaw (ZYX convention)."""
    cr, sr = np.cos(phi / 2.0), np.sin(phi / 2.0)
    cp, sp = np.cos(theta / 2.0), np.sin(theta / 2.0)
    cy, sy = np.cos(psi / 2.0), np.sin(psi / 2.0)
    return np.stack(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ],
        axis=-1,
    )


def wind_to_body(alpha: np.ndarray, beta: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate a wind-frame vector (x along relative wind) into the body frame."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    fx, fy, fz = v[..., 0], v[..., 1], v[..., 2]
    bx = ca * cb * fx - ca * sb * fy - sa * fz
    by = sb * fx + cb * fy
    bz = sa * cb * fx - sa * sb * fy + ca * fz
    return np.stack([bx, by, bz], axis=-1)
