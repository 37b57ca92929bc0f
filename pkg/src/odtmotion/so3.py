"""Rotation-group geometry: Euler angles, quaternions, angular velocities,
polar projection, and trajectory integration/smoothing on SO(3).

Rotations are plain 3x3 ``numpy`` arrays acting on column vectors.  The
Euler factorization used throughout is z-y-z:

    Q = Qz(phi) @ Qy(theta) @ Qz(psi),   phi, psi in [0, 2pi), theta in [0, pi],

with ``Qy``/``Qz`` the standard rotations around the y and z axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

__all__ = [
    "EulerAngles",
    "RotationTrajectory",
    "rot_y",
    "rot_z",
    "is_rotation",
    "check_rotation",
    "angle_of",
    "distance",
    "euler_to_rotation",
    "rotation_to_euler",
    "skew",
    "polar_project",
    "rotation_log",
    "rotation_exp",
    "slerp",
    "integrate_trajectory",
    "mean_filter",
    "to_quaternion",
    "from_quaternion",
    "random_rotation",
]

_ORTHO_TOL = 1e-12


class EulerAngles(NamedTuple):
    """z-y-z Euler angles (radians)."""

    phi: float
    theta: float
    psi: float


@dataclass
class RotationTrajectory:
    """Per-frame rotations, optionally with per-frame translations.

    ``rotations`` has shape (T, 3, 3); ``translations`` (T, 3) or None.
    Instances are treated as immutable snapshots.
    """

    rotations: np.ndarray
    translations: Optional[np.ndarray] = None

    def __post_init__(self):
        self.rotations = np.asarray(self.rotations, dtype=float)
        if self.rotations.ndim != 3 or self.rotations.shape[1:] != (3, 3):
            raise ValueError("rotations must have shape (T, 3, 3)")
        if self.translations is not None:
            self.translations = np.asarray(self.translations, dtype=float)
            if self.translations.shape != (len(self), 3):
                raise ValueError("translations must have shape (T, 3)")

    def __len__(self):
        return self.rotations.shape[0]

    def translation(self, t: int) -> np.ndarray:
        if self.translations is None:
            return np.zeros(3)
        return self.translations[t]


def rot_y(alpha: float) -> np.ndarray:
    """Rotation by ``alpha`` around the y axis."""
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(alpha: float) -> np.ndarray:
    """Rotation by ``alpha`` around the z axis."""
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return (
        np.linalg.norm(R.T @ R - np.eye(3)) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def check_rotation(R: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol):
        raise ValueError("matrix is not a rotation (orthogonality/determinant)")
    return R


def angle_of(Q: np.ndarray) -> float:
    """Rotation angle arccos((trace(Q) - 1)/2) in [0, pi].

    The argument of arccos is clamped so round-off near the endpoints
    cannot produce NaN.
    """
    c = (np.trace(Q) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def distance(R: np.ndarray, Q: np.ndarray) -> float:
    """Bi-invariant distance on SO(3): the angle of R^T Q."""
    return angle_of(np.asarray(R).T @ np.asarray(Q))


def euler_to_rotation(e) -> np.ndarray:
    """Compose Qz(phi) @ Qy(theta) @ Qz(psi).

    Accepts an :class:`EulerAngles` or any length-3 sequence.  Angles
    outside the canonical ranges are fine; the matrix is periodic.
    """
    phi, theta, psi = e
    return rot_z(phi) @ rot_y(theta) @ rot_z(psi)


def rotation_to_euler(R: np.ndarray, gimbal_tol: float = 1e-8) -> EulerAngles:
    """Invert :func:`euler_to_rotation`.

    At gimbal lock (theta near 0 or pi) the z-rotations merge; the whole
    z-rotation is folded into phi and psi is set to 0.
    """
    R = np.asarray(R, dtype=float)
    ct = np.clip(R[2, 2], -1.0, 1.0)
    theta = float(np.arccos(ct))
    if theta < gimbal_tol:
        # R = Qz(phi + psi)
        phi = float(np.arctan2(R[1, 0], R[0, 0]))
        psi = 0.0
    elif np.pi - theta < gimbal_tol:
        # R = Qz(phi - psi) @ Qy(pi); fold into phi
        phi = float(np.arctan2(-R[0, 1], R[1, 1]))
        psi = 0.0
        theta = np.pi
    else:
        phi = float(np.arctan2(R[1, 2], R[0, 2]))
        psi = float(np.arctan2(R[2, 1], -R[2, 0]))
    return EulerAngles(phi % (2.0 * np.pi), theta, psi % (2.0 * np.pi))


def skew(omega) -> np.ndarray:
    """Skew-symmetric matrix W with W @ y = omega x y."""
    w1, w2, w3 = np.asarray(omega, dtype=float)
    return np.array([[0.0, -w3, w2], [w3, 0.0, -w1], [-w2, w1, 0.0]])


def polar_project(A: np.ndarray) -> np.ndarray:
    """Nearest rotation U @ V^T from the SVD A = U S V^T.

    Raises for singular or orientation-reversing input; the use sites
    only feed small perturbations of rotations.
    """
    A = np.asarray(A, dtype=float)
    U, s, Vt = np.linalg.svd(A)
    if s[-1] <= 1e-12 * s[0] or np.linalg.det(A) <= 0.0:
        raise ValueError("degenerate polar projection")
    return U @ Vt


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) with |angle| < pi.

    Raises for half-turn rotations where the axis sign is ambiguous.
    """
    theta = angle_of(R)
    if np.pi - theta < 1e-9:
        raise ValueError("antipodal interpolation")
    if theta < 1e-12:
        return np.zeros(3)
    S = (R - R.T) * (theta / (2.0 * np.sin(theta)))
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def rotation_exp(w) -> np.ndarray:
    """Rodrigues formula: matrix exponential of skew(w)."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    W = skew(w)
    if theta < 1e-12:
        return np.eye(3) + W
    return (
        np.eye(3)
        + (np.sin(theta) / theta) * W
        + ((1.0 - np.cos(theta)) / theta**2) * (W @ W)
    )


def slerp(Ra: np.ndarray, Rb: np.ndarray, tau: float) -> np.ndarray:
    """Geodesic interpolation Ra * exp(tau * log(Ra^T Rb))."""
    return np.asarray(Ra) @ rotation_exp(tau * rotation_log(np.asarray(Ra).T @ Rb))


def integrate_trajectory(omegas: np.ndarray, R0: Optional[np.ndarray] = None) -> RotationTrajectory:
    """Forward-Euler integration of R' = R W(omega_t), reprojected to SO(3).

    ``omegas`` is (T, 3) in radians per frame (unit time step).  The output
    has T frames: frame 0 equals ``R0`` and frame t+1 is
    ``polar_project(R_t + R_t W_t)``; the last angular velocity is unused.
    """
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    T = omegas.shape[0]
    if T < 1:
        raise ValueError("need at least one angular velocity")
    R = np.eye(3) if R0 is None else check_rotation(R0)
    frames = np.empty((T, 3, 3))
    frames[0] = R
    for t in range(T - 1):
        R = polar_project(R + R @ skew(omegas[t]))
        frames[t + 1] = R
    return RotationTrajectory(frames)


def mean_filter(traj: RotationTrajectory, window: int = 5) -> RotationTrajectory:
    """Entrywise moving average of the rotation matrices over a centered
    window (shrunk at the ends), reprojected to SO(3) per frame.

    Translations, if present, are averaged with the same window.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    T = len(traj)
    half = window // 2
    out = np.empty_like(traj.rotations)
    trans = None if traj.translations is None else np.empty_like(traj.translations)
    for t in range(T):
        lo, hi = max(0, t - half), min(T, t + half + 1)
        mean = traj.rotations[lo:hi].mean(axis=0)
        try:
            out[t] = polar_project(mean)
        except ValueError:
            # frames scattered ~180 deg apart have a degenerate mean;
            # keep the unfiltered frame rather than failing
            out[t] = traj.rotations[t]
        if trans is not None:
            trans[t] = traj.translations[lo:hi].mean(axis=0)
    return RotationTrajectory(out, trans)


def to_quaternion(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (q0, q1, q2, q3), scalar part first.

    The sign is fixed so the first nonzero component is positive
    (q0 >= 0, ties broken by q1, then q2, then q3).
    """
    R = np.asarray(R, dtype=float)
    # Shepperd's method: pick the largest of the four squared components.
    tr = np.trace(R)
    choices = np.array([tr, R[0, 0], R[1, 1], R[2, 2]])
    i = int(np.argmax(choices))
    if i == 0:
        s = np.sqrt(max(tr + 1.0, 0.0)) * 2.0
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif i == 1:
        s = np.sqrt(max(1.0 + R[0, 0] - R[1, 1] - R[2, 2], 0.0)) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                      (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif i == 2:
        s = np.sqrt(max(1.0 + R[1, 1] - R[0, 0] - R[2, 2], 0.0)) * 2.0
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                      0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = np.sqrt(max(1.0 + R[2, 2] - R[0, 0] - R[1, 1], 0.0)) * 2.0
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    q = q / np.linalg.norm(q)
    for c in q:
        if c > 0.0:
            break
        if c < 0.0:
            q = -q
            break
    return q


def from_quaternion(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion (scalar part first)."""
    q0, q1, q2, q3 = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (q2 * q2 + q3 * q3), 2 * (q1 * q2 - q0 * q3), 2 * (q1 * q3 + q0 * q2)],
        [2 * (q1 * q2 + q0 * q3), 1 - 2 * (q1 * q1 + q3 * q3), 2 * (q2 * q3 - q0 * q1)],
        [2 * (q1 * q3 - q0 * q2), 2 * (q2 * q3 + q0 * q1), 1 - 2 * (q1 * q1 + q2 * q2)],
    ])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random rotation from a normalized Gaussian quaternion."""
    q = rng.normal(size=4)
    return from_quaternion(q / np.linalg.norm(q))
