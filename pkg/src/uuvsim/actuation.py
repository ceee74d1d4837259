"""Actuator models: rotor dynamics, thrust and rudder forces, wrench aggregation.

Three rotor-response families share one interface (zero-order static map,
first-order lag, data-driven MLP); thrust generation is a quadratic map
with a dead zone; rudders use a flat-plate lift/drag model with stall
clamping.  Every actuator consumes one normalized command in [-1, 1]
(rudders map it onto their angle limit).

The functions here run on scalars or on arbitrary leading batch dims; the
engine calls them with (N, A)-shaped state arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import Wrench

PROPELLER = "propeller"
RUDDER = "rudder"
TILTROTOR = "tiltrotor"

ZERO_ORDER = "zero_order"
FIRST_ORDER = "first_order"
DATA_DRIVEN = "data_driven"


class ActuatorError(ValueError):
    pass


@dataclass
class MLPWeights:
    """Small dense network mapping (command, speed fraction) -> d(speed fraction)/dt."""

    layer_sizes: list[int]
    weights: list[np.ndarray]  # row-major, shape (out, in)
    biases: list[np.ndarray]
    activation: str = "tanh"

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        sizes = self.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ActuatorError("weights/biases count must match layer_sizes")
        if sizes[0] != 2 or sizes[-1] != 1:
            raise ActuatorError("rotor MLP must map 2 inputs -> 1 output")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[k + 1], sizes[k]):
                raise ActuatorError(
                    f"weights[{k}]: expected shape {(sizes[k + 1], sizes[k])}, got {w.shape}"
                )
            if b.shape != (sizes[k + 1],):
                raise ActuatorError(f"biases[{k}]: expected shape {(sizes[k + 1],)}")
        if self.activation not in ("tanh", "relu"):
            raise ActuatorError(f"unknown activation '{self.activation}'")

    def forward(self, command: np.ndarray, speed_frac: np.ndarray) -> np.ndarray:
        act = np.tanh if self.activation == "tanh" else lambda x: np.maximum(x, 0.0)
        x = np.stack([np.asarray(command, dtype=float),
                      np.asarray(speed_frac, dtype=float)], axis=-1)
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = (x[..., None, :] * w).sum(axis=-1) + b
            if k < len(self.weights) - 1:
                x = act(x)
        return x[..., 0]


@dataclass
class RudderGeometry:
    area: float  # m^2
    c_l_alpha: float  # lift slope, 1/rad
    c_d0: float = 0.02
    k_d: float = 1.0  # induced-drag factor, drag = c_d0 + k_d alpha^2
    stall_angle: float = 0.52  # rad; alpha is clamped here
    max_angle: float = 0.35  # rad; command 1.0 deflects to this angle
    fluid_density: float = 1000.0  # kg/m^3


@dataclass
class ActuatorSpec:
    """Static description of one actuator slot on a vehicle."""

    index: int
    kind: str = PROPELLER
    mount_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mount_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    rotor_model: str = FIRST_ORDER
    time_constant: float = 0.15  # s, first-order lag
    mlp: MLPWeights | None = None
    weights_ref: str | None = None  # document path the MLP was loaded from
    thrust_coeff: float = 1e-4  # N s^2 / rad^2
    deadzone: float = 0.0  # rad/s
    max_speed: float = 400.0  # rad/s
    reaction_coeff: float = 0.0  # N m s^2 / rad^2, about the thrust axis
    rudder: RudderGeometry | None = None
    tilt_range: float = 0.0  # rad, tiltrotor only
    tilt_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.0, 0.0]))
    tilt_angle_default: float = 0.0  # rad, initial tilt at reset

    def __post_init__(self):
        self.mount_position = np.asarray(self.mount_position, dtype=float)
        self.mount_axis = np.asarray(self.mount_axis, dtype=float)
        self.tilt_axis = np.asarray(self.tilt_axis, dtype=float)
        n = np.linalg.norm(self.mount_axis)
        if n < 1e-9:
            raise ActuatorError(f"actuator {self.index}: mount_axis must be nonzero")
        self.mount_axis = self.mount_axis / n
        tn = np.linalg.norm(self.tilt_axis)
        if tn > 1e-9:
            self.tilt_axis = self.tilt_axis / tn
        if self.kind not in (PROPELLER, RUDDER, TILTROTOR):
            raise ActuatorError(f"actuator {self.index}: unknown kind '{self.kind}'")
        if self.rotor_model not in (ZERO_ORDER, FIRST_ORDER, DATA_DRIVEN):
            raise ActuatorError(f"actuator {self.index}: unknown rotor model '{self.rotor_model}'")
        if self.deadzone < 0:
            raise ActuatorError(f"actuator {self.index}: deadzone must be >= 0")
        if self.time_constant <= 0:
            raise ActuatorError(f"actuator {self.index}: time_constant must be > 0")
        if self.kind == RUDDER and self.rudder is None:
            raise ActuatorError(f"actuator {self.index}: rudder geometry missing")

    @property
    def state_limit(self) -> float:
        """Magnitude limit of the primary state: rotor speed, or rudder angle."""
        if self.kind == RUDDER:
            return self.rudder.max_angle
        return self.max_speed


@dataclass
class ActuatorState:
    """Dynamic state of one actuator."""

    rotor_speed: float = 0.0  # rad/s
    tilt_angle: float = 0.0  # rad, tiltrotor only
    rudder_angle: float = 0.0  # rad, rudder only

    def primary(self, spec: ActuatorSpec) -> float:
        """The state advanced by rotor_step: deflection for rudders, speed otherwise."""
        return self.rudder_angle if spec.kind == RUDDER else self.rotor_speed


def rotor_step(spec: ActuatorSpec, state: ActuatorState, command: float, dt: float) -> float:
    """Advance the primary actuator state one step for a command in [-1, 1].

    Rudders reuse the same response families with the command mapped onto
    the deflection limit instead of the speed limit.
    """
    if dt <= 0:
        raise ActuatorError("dt must be > 0")
    if spec.rotor_model == DATA_DRIVEN and spec.mlp is None:
        raise ActuatorError(f"actuator {spec.index}: data_driven model has no weights")
    n = np.asarray(state.primary(spec), dtype=float)
    u = np.clip(np.asarray(command, dtype=float), -1.0, 1.0)
    limit = spec.state_limit
    if spec.rotor_model == ZERO_ORDER:
        new = u * limit
    elif spec.rotor_model == FIRST_ORDER:
        new = n + (dt / spec.time_constant) * (u * limit - n)
    else:
        new = n + dt * spec.mlp.forward(u, n / limit) * limit
    return np.clip(new, -limit, limit)


def propeller_thrust(spec: ActuatorSpec, n) -> np.ndarray:
    """Dead-zone quadratic thrust: T = c_t * ndz * |ndz|, ndz past the dead band."""
    n = np.asarray(n, dtype=float)
    ndz = np.sign(n) * np.maximum(np.abs(n) - spec.deadzone, 0.0)
    return spec.thrust_coeff * ndz * np.abs(ndz)


def tilt_rotation(axis: np.ndarray, tilt_axis: np.ndarray, angle) -> np.ndarray:
    """Rodrigues rotation of the thrust axis about the tilt axis."""
    angle = np.asarray(angle, dtype=float)[..., None]
    k = tilt_axis
    c = np.cos(angle)
    s = np.sin(angle)
    kxv = np.cross(np.broadcast_to(k, np.broadcast_shapes(k.shape, axis.shape)), axis)
    kdv = (k * axis).sum(axis=-1)[..., None]
    return axis * c + kxv * s + k * kdv * (1.0 - c)


def _rudder_frame(spec: ActuatorSpec) -> tuple[np.ndarray, np.ndarray]:
    """In-plane basis of the fin: chord-forward direction and its normal."""
    h = spec.mount_axis  # hinge axis
    fwd = np.array([1.0, 0.0, 0.0])
    x_f = fwd - (fwd @ h) * h
    n = np.linalg.norm(x_f)
    if n < 1e-9:
        # hinge along body x; fall back to body z as the chord reference
        x_f = np.array([0.0, 0.0, 1.0]) - (np.array([0.0, 0.0, 1.0]) @ h) * h
        n = np.linalg.norm(x_f)
    x_f = x_f / n
    y_f = np.cross(h, x_f)
    return x_f, y_f


def rudder_wrench(spec: ActuatorSpec, rudder_angle, local_flow: np.ndarray) -> Wrench:
    """Lift/drag wrench of a control fin in the given local flow.

    local_flow is the water velocity relative to the fin, body frame
    (i.e. -(nu_r.lin + nu_r.ang x r) for a fin at r).  The effective angle
    of attack is the deflection plus the flow incidence in the plane normal
    to the hinge, clamped at the stall angle.  Lift is perpendicular to the
    flow in that plane, drag points downstream.
    """
    geom = spec.rudder
    flow = np.asarray(local_flow, dtype=float)
    rudder_angle = np.asarray(rudder_angle, dtype=float)
    h = spec.mount_axis
    x_f, y_f = _rudder_frame(spec)

    v_plane = flow - (flow * h).sum(axis=-1)[..., None] * h
    V = np.sqrt((flow * flow).sum(axis=-1))
    Vp = np.sqrt((v_plane * v_plane).sum(axis=-1))
    a = (v_plane * x_f).sum(axis=-1)
    b = (v_plane * y_f).sum(axis=-1)
    # incidence of the oncoming stream; zero for pure forward motion
    beta = np.arctan2(b, -a)
    alpha = np.clip(rudder_angle + beta, -geom.stall_angle, geom.stall_angle)

    q_dyn = 0.5 * geom.fluid_density * V * V * geom.area
    lift = q_dyn * geom.c_l_alpha * alpha
    drag = q_dyn * (geom.c_d0 + geom.k_d * alpha * alpha)

    safe = np.where(Vp > 1e-9, Vp, 1.0)
    v_hat = v_plane / safe[..., None]
    lift_dir = np.cross(v_hat, np.broadcast_to(h, v_hat.shape))
    active = (Vp > 1e-9)[..., None]
    force = np.where(active, lift[..., None] * lift_dir + drag[..., None] * v_hat, 0.0)
    torque = np.cross(spec.mount_position, force)
    return Wrench(force=force, torque=torque)


def actuator_wrench(spec: ActuatorSpec, state: ActuatorState,
                    nu: np.ndarray, nu_c: np.ndarray | None = None) -> Wrench:
    """Body wrench (about the body origin) produced by one actuator."""
    nu = np.asarray(nu, dtype=float)
    nu_r = nu if nu_c is None else nu - np.asarray(nu_c, dtype=float)
    if spec.kind == RUDDER:
        flow = -(nu_r[..., :3] + np.cross(nu_r[..., 3:], spec.mount_position))
        return rudder_wrench(spec, state.rudder_angle, flow)
    thrust = propeller_thrust(spec, state.rotor_speed)
    axis = spec.mount_axis
    if spec.kind == TILTROTOR:
        axis = tilt_rotation(axis, spec.tilt_axis, state.tilt_angle)
    force = np.asarray(thrust, dtype=float)[..., None] * axis
    torque = np.cross(spec.mount_position, force)
    if spec.reaction_coeff != 0.0:
        n = np.asarray(state.rotor_speed, dtype=float)
        ndz = np.sign(n) * np.maximum(np.abs(n) - spec.deadzone, 0.0)
        torque = torque + (spec.reaction_coeff * ndz * np.abs(ndz))[..., None] * axis
    return Wrench(force=force, torque=torque)


def aggregate_wrenches(wrenches: list[Wrench]) -> np.ndarray:
    """Sum body-frame wrenches into one 6-vector about the body origin.

    A torque referred to a nonzero application point is transported to the
    origin with its cross term; origin-referred torques pass through
    untouched so their bit patterns are preserved.  The sum runs over a
    stacked array so the reduction order matches the batched engine path
    exactly.
    """
    if not wrenches:
        return np.zeros(6)
    for w in wrenches:
        if w.frame != "body":
            raise ActuatorError("aggregate_wrenches expects body-frame wrenches")
    forces = np.stack([w.force for w in wrenches], axis=-2)
    torques = np.stack(
        [w.torque if not np.any(w.point) else w.torque + np.cross(w.point, w.force)
         for w in wrenches],
        axis=-2,
    )
    return np.concatenate([forces.sum(axis=-2), torques.sum(axis=-2)], axis=-1)
