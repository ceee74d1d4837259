"""Attitude representations, frame transforms, and body-to-NED kinematics.

Conventions used throughout the package:

  - World frame is NED (north-east-down), z positive downward.
  - Attitude is stored as a unit quaternion q = [w, x, y, z] rotating
    body-frame vectors into the NED frame: v_ned = R(q) v_body.
  - Euler angles are a derived view in ZYX (yaw-pitch-roll) order, the
    marine-craft standard: R = Rz(psi) Ry(theta) Rx(phi).
  - Body velocity is nu = [u, v, w, p, q, r] (linear m/s, angular rad/s).

Every function broadcasts over arbitrary leading batch dimensions, so the
same code path serves a single vehicle (shape (3,)/(4,) inputs) and a
structure-of-arrays batch (shape (N, 3)/(N, 4)).  Reductions are confined
to fixed-length trailing axes, which keeps per-row results independent of
the batch shape (relied on by the batched-vs-serial equivalence tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Pitch magnitude beyond which the Euler view is considered gimbal-degenerate.
GIMBAL_PITCH_LIMIT = math.radians(89.9)

QUAT_NORM_TOL = 1e-6


def skew(a: np.ndarray) -> np.ndarray:
    """Cross-product matrix S(a) with S(a) b = a x b, shape (..., 3, 3)."""
    a = np.asarray(a, dtype=float)
    z = np.zeros_like(a[..., 0])
    return np.stack(
        [
            np.stack([z, -a[..., 2], a[..., 1]], axis=-1),
            np.stack([a[..., 2], z, -a[..., 0]], axis=-1),
            np.stack([-a[..., 1], a[..., 0], z], axis=-1),
        ],
        axis=-2,
    )


def matvec(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product over the trailing axes, batch-shape stable.

    Implemented as an elementwise product followed by a fixed-length sum so
    that each row's floating-point result is identical whether it is computed
    alone or inside a larger batch.
    """
    return (M * v[..., None, :]).sum(axis=-1)


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.sqrt((q * q).sum(axis=-1))[..., None]


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 (x) q2, both [w, x, y, z]."""
    w1, x1, y1, z1 = (q1[..., i] for i in range(4))
    w2, x2, y2, z2 = (q2[..., i] for i in range(4))
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.concatenate([q[..., :1], -q[..., 1:]], axis=-1)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate body-frame vectors into NED: v_ned = R(q) v_body."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w = q[..., 0:1]
    u = q[..., 1:4]
    uv = np.cross(u, v)
    uuv = np.cross(u, uv)
    return v + 2.0 * (w * uv + uuv)


def quat_rotate_inverse(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate NED-frame vectors into the body frame: v_body = R(q)^T v_ned."""
    return quat_rotate(quat_conjugate(q), v)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix R(q) mapping body to NED, shape (..., 3, 3)."""
    w, x, y, z = (q[..., i] for i in range(4))
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def euler_to_quat(phi, theta, psi) -> np.ndarray:
    """Quaternion from ZYX Euler angles (roll phi, pitch theta, yaw psi)."""
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    psi = np.asarray(psi, dtype=float)
    cr, sr = np.cos(phi / 2), np.sin(phi / 2)
    cp, sp = np.cos(theta / 2), np.sin(theta / 2)
    cy, sy = np.cos(psi / 2), np.sin(psi / 2)
    q = np.stack(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ],
        axis=-1,
    )
    return quat_normalize(q)


def quat_to_euler(q: np.ndarray) -> np.ndarray:
    """ZYX Euler angles [phi, theta, psi] from a unit quaternion.

    theta is clamped to [-pi/2, pi/2]; phi and psi lie in (-pi, pi].
    Near theta = +-90 deg the decomposition degenerates; callers that care
    should check gimbal_proximity().
    """
    w, x, y, z = (q[..., i] for i in range(4))
    phi = np.arctan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    s = np.clip(2 * (w * y - z * x), -1.0, 1.0)
    theta = np.arcsin(s)
    psi = np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return np.stack([phi, theta, psi], axis=-1)


def gimbal_proximity(q: np.ndarray) -> np.ndarray:
    """True where the pitch magnitude exceeds GIMBAL_PITCH_LIMIT."""
    s = np.clip(2 * (q[..., 0] * q[..., 2] - q[..., 3] * q[..., 1]), -1.0, 1.0)
    return np.abs(np.arcsin(s)) > GIMBAL_PITCH_LIMIT


def quat_from_axis_angle(axis: np.ndarray, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    angle = np.asarray(angle, dtype=float)
    half = angle / 2.0
    return np.concatenate(
        [np.cos(half)[..., None], axis * np.sin(half)[..., None]], axis=-1
    )


def rotation_vector(q: np.ndarray) -> np.ndarray:
    """Log map of a unit quaternion: axis * angle, shortest arc, shape (..., 3).

    Returns the zero vector at the identity.  The sign of q is normalized so
    the rotation angle lies in [0, pi].
    """
    q = np.asarray(q, dtype=float)
    sign = np.where(q[..., 0:1] < 0.0, -1.0, 1.0)
    q = q * sign
    w = np.clip(q[..., 0], -1.0, 1.0)
    vnorm = np.sqrt((q[..., 1:] * q[..., 1:]).sum(axis=-1))
    angle = 2.0 * np.arctan2(vnorm, w)
    # Guard the 0/0 at identity; the factor tends to 2 as vnorm -> 0.
    safe = np.where(vnorm > 1e-12, vnorm, 1.0)
    factor = np.where(vnorm > 1e-12, angle / safe, 2.0)
    return q[..., 1:] * factor[..., None]


@dataclass
class Pose:
    """Position (m, NED) plus body-to-NED unit quaternion."""

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.q = np.asarray(self.q, dtype=float)

    @classmethod
    def from_euler(cls, p, phi=0.0, theta=0.0, psi=0.0) -> "Pose":
        return cls(p=np.asarray(p, dtype=float), q=euler_to_quat(phi, theta, psi))

    def euler(self) -> np.ndarray:
        return quat_to_euler(self.q)


@dataclass
class BodyVelocity:
    """Body-frame linear (m/s) and angular (rad/s) velocity."""

    lin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ang: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.lin = np.asarray(self.lin, dtype=float)
        self.ang = np.asarray(self.ang, dtype=float)

    @classmethod
    def from_vector(cls, nu: np.ndarray) -> "BodyVelocity":
        nu = np.asarray(nu, dtype=float)
        return cls(lin=nu[..., :3], ang=nu[..., 3:])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.lin, self.ang], axis=-1)


@dataclass
class Wrench:
    """Force (N) / torque (N*m) pair with its application point (body frame, m)."""

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))
    frame: str = "body"
    point: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float)
        self.torque = np.asarray(self.torque, dtype=float)
        self.point = np.asarray(self.point, dtype=float)


def pose_rate(pose: Pose, nu: BodyVelocity) -> tuple[np.ndarray, np.ndarray]:
    """NED position rate and quaternion rate for a given body velocity.

    pdot = R(q) nu.lin,  qdot = 1/2 q (x) (0, nu.ang).
    """
    pdot = quat_rotate(pose.q, nu.lin)
    omega_quat = np.concatenate(
        [np.zeros_like(nu.ang[..., :1]), nu.ang], axis=-1
    )
    qdot = 0.5 * quat_multiply(pose.q, omega_quat)
    return pdot, qdot


def integrate_quat(q: np.ndarray, omega_body: np.ndarray, dt: float) -> np.ndarray:
    """Advance attitude by the exponential map of omega*dt, then renormalize.

    The axis-angle increment keeps the quaternion on the unit sphere even at
    large dt, unlike first-order qdot addition.
    """
    omega_body = np.asarray(omega_body, dtype=float)
    angle = np.sqrt((omega_body * omega_body).sum(axis=-1)) * dt
    safe = np.where(angle > 0.0, angle, 1.0)
    axis = omega_body * dt / safe[..., None]
    dq = quat_from_axis_angle(axis, angle)
    dq = np.where((angle > 0.0)[..., None], dq, np.array([1.0, 0.0, 0.0, 0.0]))
    return quat_normalize(quat_multiply(q, dq))


def integrate_pose(pose: Pose, nu: BodyVelocity, dt: float) -> Pose:
    """One explicit step of the pose kinematics at the given body velocity."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    p_new = pose.p + quat_rotate(pose.q, nu.lin) * dt
    q_new = integrate_quat(pose.q, nu.ang, dt)
    return Pose(p=p_new, q=q_new)
