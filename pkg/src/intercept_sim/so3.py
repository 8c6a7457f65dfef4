"""Rotation-group and small vector utilities shared by every other module.

Conventions, fixed for the whole library:

- Vectors are ``numpy`` float arrays of shape (3,).
- Rotation matrices are body-to-earth (``R @ v_body -> v_earth``), shape (3, 3).
- Quaternions are scalar-first ``[w, x, y, z]``, Hamilton product, representing
  the same body-to-earth rotation (so ``qdot = 0.5 * q (x) [0, omega_body]``).

Tolerance constants used by validation helpers and tests live here so every
module agrees on them.
"""

from __future__ import annotations

import numpy as np

# Orthonormality / unit-norm tolerance for SO(3) and quaternion inputs.
ROT_TOL = 1e-9
# Frobenius drift allowed on rotations produced by library operations.
ROT_DRIFT_TOL = 1e-8
# Skew-symmetry tolerance accepted by vex().
SKEW_TOL = 1e-9
# exp/log round-trip tolerance.
LOG_ROUNDTRIP_TOL = 1e-7

EX = np.array([1.0, 0.0, 0.0])
EY = np.array([0.0, 1.0, 0.0])
EZ = np.array([0.0, 0.0, 1.0])


def hat(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: hat(v) @ y == cross(v, y)."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def vex(m: np.ndarray) -> np.ndarray:
    """Inverse of hat(). Symmetrizes first; rejects clearly non-skew input."""
    sym = 0.5 * (m + m.T)
    if np.max(np.abs(sym)) > SKEW_TOL:
        raise ValueError(f"vex: matrix is not skew-symmetric (sym part {np.max(np.abs(sym)):.3e})")
    skew = 0.5 * (m - m.T)
    return np.array([skew[2, 1], skew[0, 2], skew[1, 0]])


def vex_unchecked(m: np.ndarray) -> np.ndarray:
    """vex of the skew part of m, no tolerance check (hot-path form)."""
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def exp_so3(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues formula: rotation of `angle` rad about the unit `axis`."""
    if angle == 0.0:
        return np.eye(3)
    k = hat(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def exp_so3_vec(w: np.ndarray) -> np.ndarray:
    """exp of a rotation vector (angle * axis); series form for tiny angles."""
    angle = float(np.linalg.norm(w))
    if angle < 1e-12:
        k = hat(w)
        return np.eye(3) + k + 0.5 * (k @ k)
    return exp_so3(w / angle, angle)


def log_so3(rot: np.ndarray) -> tuple[float, np.ndarray]:
    """Angle/axis of a rotation matrix, angle in [0, pi].

    Near pi the axis comes from the largest diagonal element of (R + I)/2,
    which avoids dividing by sin(angle) ~ 0. At angle ~ 0 the axis is the
    conventional [1, 0, 0].
    """
    trace = float(np.trace(rot))
    cos_angle = min(1.0, max(-1.0, 0.5 * (trace - 1.0)))
    angle = float(np.arccos(cos_angle))
    if angle < 1e-9:
        return 0.0, EX.copy()
    if np.pi - angle < 1e-6:
        # (R + I)/2 = a a^T + cos-ish terms; largest diagonal picks the stable axis.
        b = 0.5 * (rot + np.eye(3))
        i = int(np.argmax(np.diag(b)))
        axis = b[:, i] / np.sqrt(b[i, i])
        axis = axis / np.linalg.norm(axis)
        # Fix the sign so exp reproduces R for angle < pi.
        off = np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]])
        if np.dot(off, axis) < 0.0:
            axis = -axis
        return angle, axis
    axis = vex_unchecked(rot) / np.sin(angle)
    return angle, axis / np.linalg.norm(axis)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a (x) b, scalar-first."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Body-to-earth rotation matrix of a quaternion.

    Uses the homogeneous quadratic form (rows like q0^2 + q1^2 - q2^2 - q3^2),
    which coincides with the normalized form for unit input and is the form
    the observer Jacobians differentiate.
    """
    q0, q1, q2, q3 = q
    return np.array([
        [q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3, 2.0 * (q1 * q2 - q0 * q3), 2.0 * (q1 * q3 + q0 * q2)],
        [2.0 * (q1 * q2 + q0 * q3), q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3, 2.0 * (q2 * q3 - q0 * q1)],
        [2.0 * (q1 * q3 - q0 * q2), 2.0 * (q2 * q3 + q0 * q1), q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3],
    ])


def rotmat_to_quat(rot: np.ndarray) -> np.ndarray:
    """Quaternion of a rotation matrix (scalar-first, w >= 0)."""
    angle, axis = log_so3(rot)
    half = 0.5 * angle
    q = np.concatenate(([np.cos(half)], np.sin(half) * axis))
    return q / np.linalg.norm(q)


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * np.asarray(axis, dtype=float)))


def saturate(a: np.ndarray, a_m: float) -> np.ndarray:
    """Norm saturation: returns a scaled to norm <= a_m, direction unchanged."""
    if a_m <= 0.0:
        raise ValueError("saturate: a_m must be positive")
    n = float(np.linalg.norm(a))
    if n <= a_m:
        return np.asarray(a, dtype=float).copy()
    return np.asarray(a, dtype=float) * (a_m / n)


def unit(v: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n < eps:
        raise ValueError("unit: vector norm is numerically zero")
    return v / n


def orthonormalize(rot: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix via polar decomposition (SVD)."""
    u, _, vt = np.linalg.svd(rot)
    r = u @ vt
    if np.linalg.det(r) < 0.0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def is_rotation(rot: np.ndarray, tol: float = ROT_TOL) -> bool:
    return (
        rot.shape == (3, 3)
        and np.allclose(rot.T @ rot, np.eye(3), atol=tol)
        and abs(np.linalg.det(rot) - 1.0) < tol
    )
