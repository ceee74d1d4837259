"""Time-parameterized reference trajectories with analytic velocities.

A reference is a smooth map t -> (p_ref, v_ref) in the world frame, with
v_ref the exact derivative of p_ref, so tracking rewards and feedforward
terms never rely on finite differencing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HELIX = "helix"
LISSAJOUS = "lissajous"


class TrajectoryError(ValueError):
    pass


@dataclass
class TrajectorySpec:
    """Reference curve parameters.

    helix:      p(t) = (R cos(w t), R sin(w t), z0 + c t)
    lissajous:  p(t) = (A sin(a t), B sin(b t + delta), z0 + C sin(c t))
    """

    kind: str = HELIX
    duration: float = 60.0  # s
    # helix
    radius: float = 2.0  # R, m
    angular_rate: float = 0.25  # w, rad/s
    climb_rate: float = 0.05  # c, m/s
    # lissajous
    amplitude: tuple = (2.0, 2.0, 0.5)  # A, B, C, m
    rates: tuple = (0.2, 0.3, 0.1)  # a, b, c, rad/s
    phase: float = 0.0  # delta, rad
    # shared
    z0: float = 1.0  # m, depth offset

    def __post_init__(self):
        if self.kind not in (HELIX, LISSAJOUS):
            raise TrajectoryError(f"unknown trajectory kind '{self.kind}'")
        if not self.duration > 0:
            raise TrajectoryError(f"duration must be > 0, got {self.duration}")
        fields = [self.duration, self.radius, self.angular_rate, self.climb_rate,
                  *self.amplitude, *self.rates, self.phase, self.z0]
        if not np.isfinite(fields).all():
            raise TrajectoryError("trajectory parameters must be finite")
        if len(self.amplitude) != 3 or len(self.rates) != 3:
            raise TrajectoryError("amplitude and rates must have 3 entries")


def reference_point(spec: TrajectorySpec, t) -> tuple[np.ndarray, np.ndarray]:
    """Reference position and its analytic velocity at time t (broadcasts).

    Raises if any t lies outside [0, duration].
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > spec.duration):
        raise TrajectoryError(
            f"t outside [0, {spec.duration}]: {float(np.min(t))}..{float(np.max(t))}")
    if spec.kind == HELIX:
        w, r, c = spec.angular_rate, spec.radius, spec.climb_rate
        p = np.stack([r * np.cos(w * t), r * np.sin(w * t), spec.z0 + c * t], axis=-1)
        v = np.stack([-r * w * np.sin(w * t), r * w * np.cos(w * t),
                      np.broadcast_to(np.asarray(c, dtype=float), t.shape)], axis=-1)
        return p, v
    a_x, a_y, a_z = spec.amplitude
    r_x, r_y, r_z = spec.rates
    p = np.stack([
        a_x * np.sin(r_x * t),
        a_y * np.sin(r_y * t + spec.phase),
        spec.z0 + a_z * np.sin(r_z * t),
    ], axis=-1)
    v = np.stack([
        a_x * r_x * np.cos(r_x * t),
        a_y * r_y * np.cos(r_y * t + spec.phase),
        a_z * r_z * np.cos(r_z * t),
    ], axis=-1)
    return p, v
