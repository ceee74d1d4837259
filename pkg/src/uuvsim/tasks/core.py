"""Vectorized control tasks: station keeping, trajectory tracking, docking.

Every task exposes the same contract:

    reset(mask) -> observations
    step(commands) -> (observations, rewards, terminated, truncated, info)

with batched float64 arrays throughout.  Rows that finish (terminated or
truncated) are reset automatically inside ``step`` with fresh episode
draws; the returned observation for a finished row is the first
observation of its next episode, and the final observation of the episode
that just ended is available as ``info["terminal_observation"]``.

Observation layout (flat, per row):

    [0:3]    position error, body frame (target/reference minus vehicle)
    [3:6]    attitude error as a rotation vector (log map, current to target)
    [6:12]   body velocity nu
    [12:12+A] previous commands
    [12+A:]  task extras (tracking: body-frame reference velocity (3);
             docking: height above the dock plane (1))

Episodes end exactly one of two ways: `terminated` (task-defined: dock
contact, leaving the workspace, exceeding the speed limit, or numerical
divergence) or `truncated` (the episode-length timeout).

Disturbance levels: `standard` draws zero current and zero payload;
`disturbed` draws a fixed-magnitude current with a random heading plus a
fixed body payload; `disturbed_dr` additionally randomizes the vehicle
parameters (default: the `train` preset ranges).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..engine import BatchState, EnvInit, SimConfig, make_batch, reset_envs, step_batch
from ..kinematics import (
    Pose,
    euler_to_quat,
    quat_conjugate,
    quat_multiply,
    quat_rotate,
    quat_rotate_inverse,
    rotation_vector,
)
from ..randomization import (
    CURRENT_KEYS,
    DRParameter,
    Uniform,
    make_spec,
    preset,
    sample_current,
    sample_overlay,
)
from ..vehicles import load_vehicle
from .trajectories import TrajectorySpec, reference_point

STATION_KEEPING = "station_keeping"
TRACKING = "tracking"
DOCKING = "docking"
TASK_KINDS = (STATION_KEEPING, TRACKING, DOCKING)

LEVEL_STANDARD = "standard"
LEVEL_DISTURBED = "disturbed"
LEVEL_DISTURBED_DR = "disturbed_dr"
LEVELS = (LEVEL_STANDARD, LEVEL_DISTURBED, LEVEL_DISTURBED_DR)

# the `disturbed` level's fixed-point disturbances
DISTURBED_CURRENT_SPEED = 0.25  # m/s, heading still drawn per episode
DISTURBED_PAYLOAD_RATIO = 0.1  # of vehicle mass, attached at the body origin

# per-task score reported in info["metric"] (all metres)
METRIC_DEFINITIONS = {
    "distance_to_target_m":
        "Euclidean distance from the vehicle position to the target "
        "position at the current step.",
    "mean_deviation_m":
        "Mean Euclidean deviation from the reference trajectory over the "
        "steps elapsed this episode.",
    "contact_distance_m":
        "Planar (horizontal) Euclidean distance from the dock centre at "
        "the contact step; undefined before contact.",
}


class TaskError(ValueError):
    pass


def _norm(x: np.ndarray) -> np.ndarray:
    return np.sqrt((x * x).sum(axis=-1))


@dataclass
class RewardWeights:
    """Per-step reward shaping; all terms are artifact defaults, not pinned.

    Velocity norms saturate at ``speed_cap`` inside reward terms so every
    per-step reward is bounded on a bounded workspace.
    """

    # Shaping scale note: approaching the target at speed v changes the
    # position term by w_p*v*dt per step, so the velocity/command penalties
    # must stay well below that for purposeful motion to pay off.
    w_p: float = 1.0  # position error, 1/m
    w_a: float = 0.2  # attitude error, 1/rad
    w_v: float = 0.02  # velocity magnitude
    w_u: float = 0.02  # command change
    w_b: float = 10.0  # in-tolerance bonus per step (station keeping)
    r_tol: float = 0.15  # m, bonus radius / success tolerance
    speed_cap: float = 10.0
    # docking terminal terms
    dock_bonus: float = 100.0
    w_dock_dist: float = 100.0  # per metre of planar contact offset
    w_impact: float = 20.0  # per m/s of impact speed
    w_level: float = 20.0  # per rad of attitude error at contact


@dataclass
class DockSpec:
    centre: tuple = (0.0, 0.0, 3.0)  # NED, m (z positive down)
    radius: float = 0.5  # capture radius, m

    def __post_init__(self):
        if len(self.centre) != 3:
            raise TaskError("dock centre must have 3 entries")
        if not self.radius > 0:
            raise TaskError(f"dock radius must be > 0, got {self.radius}")


@dataclass
class TaskConfig:
    task: str = STATION_KEEPING
    vehicle: str = "bluerov"  # builtin name or config path
    level: str = LEVEL_STANDARD
    episode_length: int = 500  # steps
    bounds: float = 10.0  # workspace half-extent, m
    nu_max: float = 5.0  # episode fails beyond this ||nu||
    # One-time reward at a failure step (bounds/speed/divergence).  Sized to
    # exceed any honest episode's accumulated cost so that forcing an early
    # termination is never the return-maximizing move.
    fail_penalty: float = 2000.0
    weights: RewardWeights = field(default_factory=RewardWeights)
    # station keeping
    target_position: tuple = (0.0, 0.0, 1.0)
    target_yaw: float = 0.0
    start_radius: float = 2.5  # m, initial offset cube half-extent
    # tracking
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    success_tol: float = 0.3  # m, mean-deviation success bound
    # docking
    dock: DockSpec = field(default_factory=DockSpec)

    def __post_init__(self):
        if self.task not in TASK_KINDS:
            raise TaskError(f"unknown task '{self.task}', expected one of {TASK_KINDS}")
        if self.level not in LEVELS:
            raise TaskError(f"unknown level '{self.level}', expected one of {LEVELS}")
        if self.episode_length < 1:
            raise TaskError(f"episode_length must be >= 1, got {self.episode_length}")
        if not self.bounds > 0:
            raise TaskError(f"bounds must be > 0, got {self.bounds}")
        if not (self.nu_max > 0 and self.start_radius > 0):
            raise TaskError("nu_max and start_radius must be > 0")


def reward_station_keeping(pos_error, att_error, velocity, command_delta,
                           weights: RewardWeights):
    """Shaped station-keeping reward; maximal (= w_b) at rest on target."""
    e_p = _norm(np.asarray(pos_error, dtype=float))
    e_a = _norm(np.asarray(att_error, dtype=float))
    e_v = np.minimum(_norm(np.asarray(velocity, dtype=float)), weights.speed_cap)
    e_u = _norm(np.asarray(command_delta, dtype=float))
    return (-weights.w_p * e_p - weights.w_a * e_a - weights.w_v * e_v
            - weights.w_u * e_u + weights.w_b * (e_p < weights.r_tol))


def reward_tracking(p, v, p_ref, v_ref, command_delta, weights: RewardWeights):
    """Shaped tracking reward on world-frame position/velocity deviations."""
    e_p = _norm(np.asarray(p, dtype=float) - np.asarray(p_ref, dtype=float))
    e_v = np.minimum(_norm(np.asarray(v, dtype=float) - np.asarray(v_ref, dtype=float)),
                     weights.speed_cap)
    e_u = _norm(np.asarray(command_delta, dtype=float))
    return -weights.w_p * e_p - weights.w_v * e_v - weights.w_u * e_u


def step_docking(p, q, v_lin, dock: DockSpec, weights: RewardWeights):
    """Docking reward and contact data for one post-step state.

    Contact fires when the vehicle reference point is at or below the dock
    plane (z >= dock z; NED z points down) within the capture radius.  The
    terminal reward is maximal for a centred, slow, level contact and
    strictly decreases in planar offset, impact speed, and attitude error.
    Each step also carries the shaping term -w_p * ||p - centre||.
    """
    p = np.asarray(p, dtype=float)
    centre = np.asarray(dock.centre, dtype=float)
    delta = p - centre
    planar = _norm(delta[..., :2])
    contact = (p[..., 2] >= centre[2]) & (planar <= dock.radius)
    speed = np.minimum(_norm(np.asarray(v_lin, dtype=float)), weights.speed_cap)
    attitude = _norm(rotation_vector(q))
    terminal = (weights.dock_bonus - weights.w_dock_dist * planar
                - weights.w_impact * speed - weights.w_level * attitude)
    reward = -weights.w_p * _norm(delta) + np.where(contact, terminal, 0.0)
    return reward, {
        "contact": contact,
        "contact_distance": planar,
        "contact_speed": speed,
        "contact_attitude": attitude,
    }


class VecTaskEnv:
    """Batched task environment over one engine batch (exclusively owned)."""

    metric_name = ""
    extra_dim = 0

    def __init__(self, task: TaskConfig, sim: SimConfig, dr=None, seed: int = 0):
        self.task = task
        self.sim = sim
        self.vehicle = load_vehicle(task.vehicle)
        self.seed = int(seed)
        if task.level == LEVEL_STANDARD:
            if dr is not None:
                raise TaskError("a DR spec requires level 'disturbed_dr'")
            self._dr = None
        elif task.level == LEVEL_DISTURBED:
            if dr is not None:
                raise TaskError("a DR spec requires level 'disturbed_dr'")
            self._dr = make_spec([
                DRParameter("payload_mass*", Uniform(DISTURBED_PAYLOAD_RATIO,
                                                     DISTURBED_PAYLOAD_RATIO)),
                DRParameter("payload_position", Uniform(0.0, 0.0)),
                DRParameter("current_velocity", Uniform(DISTURBED_CURRENT_SPEED,
                                                        DISTURBED_CURRENT_SPEED)),
            ])
        else:
            self._dr = dict(dr) if dr is not None else preset("train")
        self._dyn_spec = (
            {k: p for k, p in self._dr.items() if k not in CURRENT_KEYS}
            if self._dr is not None else None)
        self.state: BatchState = make_batch(self.vehicle, sim, master_seed=self.seed)
        self.n_envs = sim.batch_size
        self.action_dim = self.vehicle.action_dim
        self.prev_u = np.zeros((self.n_envs, self.action_dim))

    # -- layout ----------------------------------------------------------
    @property
    def obs_dim(self) -> int:
        return 12 + self.action_dim + self.extra_dim

    def obs_layout(self) -> list:
        a = self.action_dim
        layout = [("position_error_body", 0, 3), ("attitude_error", 3, 6),
                  ("velocity", 6, 12), ("prev_command", 12, 12 + a)]
        layout += self._extra_layout(12 + a)
        return layout

    def _extra_layout(self, start: int) -> list:
        return []

    def spaces(self) -> dict:
        return {
            "task": self.task.task,
            "vehicle": self.vehicle.name,
            "level": self.task.level,
            "n_envs": self.n_envs,
            "obs_dim": self.obs_dim,
            "action_dim": self.action_dim,
            "dt": self.sim.dt,
            "episode_length": self.task.episode_length,
            "metric": self.metric_name,
            "obs_layout": [list(seg) for seg in self.obs_layout()],
        }

    # -- episode start ---------------------------------------------------
    def _sampler(self, i: int, episode: int, rng: np.random.Generator) -> EnvInit:
        overlay: dict = {}
        current = np.zeros(3)
        if self._dr is not None:
            overlay = sample_overlay(self._dyn_spec, rng)
            current = sample_current(self._dr, rng)
        pose, nu = self._sample_start(rng)
        return EnvInit(pose=pose, nu=nu, overlay=overlay, current_ned=current)

    def _sample_start(self, rng: np.random.Generator) -> tuple[Pose, np.ndarray]:
        raise NotImplementedError

    def reset(self, mask=None) -> np.ndarray:
        if mask is None:
            mask = np.ones(self.n_envs, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        reset_envs(self.state, mask, self._sampler)
        self.prev_u[mask] = 0.0
        self._on_reset_rows(mask)
        return self.observe()

    def _on_reset_rows(self, mask: np.ndarray):
        pass

    # -- observation -----------------------------------------------------
    def _target_pos(self) -> np.ndarray:
        raise NotImplementedError

    def _target_quat(self) -> np.ndarray:
        raise NotImplementedError

    def _extras(self) -> list:
        return []

    def observe(self) -> np.ndarray:
        st = self.state
        e_p = quat_rotate_inverse(st.q, self._target_pos() - st.p)
        e_att = rotation_vector(quat_multiply(quat_conjugate(st.q), self._target_quat()))
        parts = [e_p, e_att, st.nu, self.prev_u] + self._extras()
        return np.concatenate(parts, axis=-1)

    # -- stepping --------------------------------------------------------
    def _task_step(self, du: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
        """Post-physics shaped reward, task termination, and task info."""
        raise NotImplementedError

    def step(self, commands) -> tuple:
        u = np.asarray(commands, dtype=float)
        if u.shape != (self.n_envs, self.action_dim):
            raise TaskError(
                f"commands: expected shape {(self.n_envs, self.action_dim)}, got {u.shape}")
        u = np.clip(u, -1.0, 1.0)
        du = u - self.prev_u
        self.prev_u = u.copy()
        step_batch(self.state, u)
        st = self.state

        reward, task_done, info = self._task_step(du)
        fail = ((np.abs(st.p) > self.task.bounds).any(axis=-1)
                | (_norm(st.nu) > self.task.nu_max)
                | st.diverged)
        reward = np.where(fail, -self.task.fail_penalty, reward)
        terminated = task_done | fail
        truncated = (st.steps >= self.task.episode_length) & ~terminated
        finished = terminated | truncated

        e_p_world = self._target_pos() - st.p
        att_err = _norm(rotation_vector(
            quat_multiply(quat_conjugate(st.q), self._target_quat())))
        info.update({
            "position_error": _norm(e_p_world),
            "attitude_error": att_err,
            "finished": finished,
            "failure": fail,
            "diverged": st.diverged.copy(),
            "time": st.steps * self.sim.dt,
            "terminal_observation": self.observe(),
        })
        info["success"] = self._success(info, terminated, truncated)
        info.setdefault("metric", info["position_error"])

        if finished.any():
            reset_envs(st, finished, self._sampler)
            self.prev_u[finished] = 0.0
            self._on_reset_rows(finished)
            obs = self.observe()
        else:
            obs = info["terminal_observation"]
        return obs, reward, terminated, truncated, info

    def _success(self, info: dict, terminated, truncated) -> np.ndarray:
        raise NotImplementedError

    def reward_bound(self) -> float:
        """Upper bound on |reward| per step, from weights and workspace."""
        w = self.task.weights
        d = 2.0 * np.sqrt(3.0) * self.task.bounds
        shaped = (w.w_p * d + w.w_a * np.pi + w.w_v * w.speed_cap
                  + w.w_u * 2.0 * np.sqrt(self.action_dim) + w.w_b)
        terminal = abs(w.dock_bonus) + w.w_dock_dist * self.task.dock.radius \
            + w.w_impact * w.speed_cap + w.w_level * np.pi
        return max(shaped + terminal, self.task.fail_penalty)


class StationKeepingEnv(VecTaskEnv):
    """Reach and hold a fixed pose."""

    metric_name = "distance_to_target_m"

    def __init__(self, task, sim, dr=None, seed=0):
        super().__init__(task, sim, dr, seed)
        self._target_p = np.asarray(task.target_position, dtype=float)
        self._target_q = euler_to_quat(0.0, 0.0, task.target_yaw)

    def _target_pos(self):
        return self._target_p

    def _target_quat(self):
        return self._target_q

    def _sample_start(self, rng):
        p = self._target_p + rng.uniform(-self.task.start_radius,
                                         self.task.start_radius, 3)
        eul = rng.uniform([-0.15, -0.15, -np.pi], [0.15, 0.15, np.pi])
        nu = rng.uniform(-0.1, 0.1, 6)
        return Pose(p=p, q=euler_to_quat(*eul)), nu

    def _task_step(self, du):
        st = self.state
        e_p = quat_rotate_inverse(st.q, self._target_p - st.p)
        e_att = rotation_vector(quat_multiply(quat_conjugate(st.q), self._target_q))
        reward = reward_station_keeping(e_p, e_att, st.nu, du, self.task.weights)
        return reward, np.zeros(self.n_envs, dtype=bool), {}

    def _success(self, info, terminated, truncated):
        return (terminated | truncated) & ~info["failure"] & (
            info["position_error"] < self.task.weights.r_tol)


class TrackingEnv(VecTaskEnv):
    """Follow a time-parameterized reference curve."""

    metric_name = "mean_deviation_m"
    extra_dim = 3

    def __init__(self, task, sim, dr=None, seed=0):
        super().__init__(task, sim, dr, seed)
        horizon = task.episode_length * sim.dt
        if task.trajectory.duration < horizon:
            raise TaskError(
                f"trajectory duration {task.trajectory.duration} s is shorter than "
                f"the episode horizon {horizon} s")
        self._dev_sum = np.zeros(sim.batch_size)
        self._q_ref = np.array([1.0, 0.0, 0.0, 0.0])

    def _ref(self) -> tuple[np.ndarray, np.ndarray]:
        t = self.state.steps * self.sim.dt
        return reference_point(self.task.trajectory, t)

    def _target_pos(self):
        return self._ref()[0]

    def _target_quat(self):
        return self._q_ref

    def _extras(self):
        _, v_ref = self._ref()
        return [quat_rotate_inverse(self.state.q, v_ref)]

    def _extra_layout(self, start):
        return [("reference_velocity_body", start, start + 3)]

    def _sample_start(self, rng):
        p0, v0 = reference_point(self.task.trajectory, 0.0)
        p = p0 + rng.uniform(-0.5, 0.5, 3)
        yaw0 = float(np.arctan2(v0[1], v0[0]))
        eul = rng.uniform([-0.1, -0.1, yaw0 - 0.3], [0.1, 0.1, yaw0 + 0.3])
        nu = rng.uniform(-0.05, 0.05, 6)
        return Pose(p=p, q=euler_to_quat(*eul)), nu

    def _on_reset_rows(self, mask):
        self._dev_sum[mask] = 0.0

    def _task_step(self, du):
        st = self.state
        p_ref, v_ref = self._ref()
        v_world = quat_rotate(st.q, st.nu[:, :3])
        reward = reward_tracking(st.p, v_world, p_ref, v_ref, du, self.task.weights)
        dev = _norm(st.p - p_ref)
        self._dev_sum += dev
        metric = self._dev_sum / np.maximum(st.steps, 1)
        return reward, np.zeros(self.n_envs, dtype=bool), {"metric": metric}

    def _success(self, info, terminated, truncated):
        return truncated & (info["metric"] < self.task.success_tol)


class DockingEnv(VecTaskEnv):
    """Descend onto a platform; the episode ends at first contact."""

    metric_name = "contact_distance_m"
    extra_dim = 1

    def __init__(self, task, sim, dr=None, seed=0):
        super().__init__(task, sim, dr, seed)
        self._centre = np.asarray(task.dock.centre, dtype=float)
        self._q_ref = np.array([1.0, 0.0, 0.0, 0.0])

    def _target_pos(self):
        return self._centre

    def _target_quat(self):
        return self._q_ref

    def _extras(self):
        height = self._centre[2] - self.state.p[:, 2]
        return [height[:, None]]

    def _extra_layout(self, start):
        return [("height_above_dock", start, start + 1)]

    def _sample_start(self, rng):
        offset = rng.uniform([-1.5, -1.5, -2.5], [1.5, 1.5, -1.5])
        eul = rng.uniform([-0.1, -0.1, -np.pi], [0.1, 0.1, np.pi])
        nu = rng.uniform(-0.05, 0.05, 6)
        return Pose(p=self._centre + offset, q=euler_to_quat(*eul)), nu

    def _task_step(self, du):
        st = self.state
        v_world = quat_rotate(st.q, st.nu[:, :3])
        reward, contact_info = step_docking(st.p, st.q, v_world, self.task.dock,
                                            self.task.weights)
        reward = reward - self.task.weights.w_u * _norm(du)
        contact = contact_info["contact"]
        info = dict(contact_info)
        info["metric"] = contact_info["contact_distance"]
        for key in ("contact_distance", "contact_speed", "contact_attitude"):
            info[key] = np.where(contact, info[key], np.nan)
        return reward, contact, info

    def _success(self, info, terminated, truncated):
        return info["contact"]


_TASK_CLASSES = {
    STATION_KEEPING: StationKeepingEnv,
    TRACKING: TrackingEnv,
    DOCKING: DockingEnv,
}


def make_env(task: TaskConfig, sim: SimConfig, dr=None, seed: int = 0) -> VecTaskEnv:
    """Build the vectorized environment for a task/vehicle/level triple."""
    cls = _TASK_CLASSES.get(task.task)
    if cls is None:
        raise TaskError(f"unknown task '{task.task}', expected one of {TASK_KINDS}")
    return cls(task, sim, dr=dr, seed=seed)
