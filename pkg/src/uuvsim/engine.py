"""Batched lockstep stepping core: N environments as structure-of-arrays.

Step contract, per substep of length dt = sim.dt / sim.substeps, with
commands clamped to [-1, 1] and held across substeps:

1. rotor/fin states advance toward the commands (per response family);
2. actuator wrenches are computed from the new states and aggregated
   about the body origin;
3. the hydrodynamic wrench is evaluated with current-relative velocity;
4. ``nudot = M^-1 (tau_act + w_hydro - C_RB(nu) nu)``;
5. semi-implicit update: ``nu <- nu + dt * nudot``, then the pose
   integrates with the *new* velocity.

Every kernel either calls the single-body operations directly with batched
arrays or mirrors their arithmetic expression for expression, and all
reductions run over fixed trailing axes whose length is independent of the
batch shape.  Stepping one environment through the public single-body ops
therefore reproduces its batched row bit for bit, for any batch size and
any worker count.

Randomness is counter-based: the substream for environment ``i`` at episode
``k`` is seeded by ``SeedSequence(master_seed, spawn_key=(i, k))``, so
resampling depends only on (seed, env, episode) — never on scheduling,
reset order, or the states of other environments.

Non-finite rows are frozen at their last finite state and flagged in
``BatchState.diverged`` rather than propagating NaNs through the batch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .actuation import (
    DATA_DRIVEN,
    FIRST_ORDER,
    PROPELLER,
    RUDDER,
    TILTROTOR,
    ZERO_ORDER,
    tilt_rotation,
)
from .hydrodynamics import MassMatrix, hydro_wrench, coriolis_force, rb_mass_matrix
from .kinematics import (
    BodyVelocity,
    Pose,
    integrate_pose,
    matvec,
    quat_rotate_inverse,
)
from .vehicles import VehicleConfig, apply_overlay


class EngineError(ValueError):
    pass


@dataclass
class SimConfig:
    dt: float = 0.02  # s, control step
    substeps: int = 1  # physics substeps per control step
    batch_size: int = 1
    workers: int = 1  # env range is split into this many contiguous slices

    def __post_init__(self):
        if self.dt <= 0:
            raise EngineError(f"dt must be > 0, got {self.dt}")
        if self.substeps < 1:
            raise EngineError(f"substeps must be >= 1, got {self.substeps}")
        if self.batch_size < 1:
            raise EngineError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.workers < 1:
            raise EngineError(f"workers must be >= 1, got {self.workers}")


_KIND_CODE = {PROPELLER: 0, RUDDER: 1, TILTROTOR: 2}
_MODEL_CODE = {ZERO_ORDER: 0, FIRST_ORDER: 1, DATA_DRIVEN: 2}


@dataclass
class VehicleLayout:
    """Static actuator structure shared by every environment in a batch.

    Domain randomization perturbs numeric parameters only; the actuator
    count, kinds, response families, axes, and fin geometry are fixed per
    vehicle type, so they compile once.
    """

    action_dim: int
    kinds: np.ndarray  # (A,) int8
    models: np.ndarray  # (A,) int8
    limit: np.ndarray  # (A,) state limit: max rotor speed / max fin angle
    deadzone: np.ndarray  # (A,)
    reaction: np.ndarray  # (A,)
    axes_eff: np.ndarray  # (A,3) thrust axis after the default tilt
    tilt_default: np.ndarray  # (A,)
    thrust_cols: np.ndarray  # columns with propeller/tiltrotor kinds
    rudder_cols: np.ndarray
    groups: list  # (model_code, columns, mlp-or-None)
    fluid_density: float
    gravity: float
    # fin geometry aligned with rudder_cols
    fin_area: np.ndarray
    fin_cla: np.ndarray
    fin_cd0: np.ndarray
    fin_kd: np.ndarray
    fin_stall: np.ndarray
    fin_rho: np.ndarray
    fin_hinge: np.ndarray  # (C,3)
    fin_xf: np.ndarray  # (C,3) chord-forward basis
    fin_yf: np.ndarray  # (C,3)


def _fin_basis(hinge: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    fwd = np.array([1.0, 0.0, 0.0])
    x_f = fwd - (fwd @ hinge) * hinge
    n = np.linalg.norm(x_f)
    if n < 1e-9:
        x_f = np.array([0.0, 0.0, 1.0]) - (np.array([0.0, 0.0, 1.0]) @ hinge) * hinge
        n = np.linalg.norm(x_f)
    x_f = x_f / n
    return x_f, np.cross(hinge, x_f)


def compile_layout(vehicle: VehicleConfig) -> VehicleLayout:
    acts = vehicle.actuators
    A = len(acts)
    kinds = np.array([_KIND_CODE[a.kind] for a in acts], dtype=np.int8)
    models = np.array([_MODEL_CODE[a.rotor_model] for a in acts], dtype=np.int8)
    limit = np.array([a.state_limit for a in acts])
    deadzone = np.array([a.deadzone for a in acts])
    reaction = np.array([a.reaction_coeff for a in acts])
    tilt_default = np.array([a.tilt_angle_default for a in acts])
    axes_eff = np.empty((A, 3))
    for j, a in enumerate(acts):
        if a.kind == TILTROTOR:
            axes_eff[j] = tilt_rotation(a.mount_axis, a.tilt_axis, a.tilt_angle_default)
        else:
            axes_eff[j] = a.mount_axis
    thrust_cols = np.nonzero(kinds != _KIND_CODE[RUDDER])[0]
    rudder_cols = np.nonzero(kinds == _KIND_CODE[RUDDER])[0]

    groups = []
    for code in (0, 1):
        cols = np.nonzero(models == code)[0]
        if cols.size:
            groups.append((code, cols, None))
    dd_cols = np.nonzero(models == 2)[0]
    if dd_cols.size:
        by_mlp: dict[int, list[int]] = {}
        for j in dd_cols:
            by_mlp.setdefault(id(acts[j].mlp), []).append(int(j))
        for cols in by_mlp.values():
            groups.append((2, np.array(cols), acts[cols[0]].mlp))

    fins = [acts[j] for j in rudder_cols]
    hinge = np.array([a.mount_axis for a in fins]).reshape(-1, 3)
    xf = np.empty_like(hinge)
    yf = np.empty_like(hinge)
    for c, a in enumerate(fins):
        xf[c], yf[c] = _fin_basis(hinge[c])
    return VehicleLayout(
        action_dim=A,
        kinds=kinds,
        models=models,
        limit=limit,
        deadzone=deadzone,
        reaction=reaction,
        axes_eff=axes_eff,
        tilt_default=tilt_default,
        thrust_cols=thrust_cols,
        rudder_cols=rudder_cols,
        groups=groups,
        fluid_density=vehicle.coeffs.fluid_density,
        gravity=vehicle.coeffs.gravity,
        fin_area=np.array([a.rudder.area for a in fins]),
        fin_cla=np.array([a.rudder.c_l_alpha for a in fins]),
        fin_cd0=np.array([a.rudder.c_d0 for a in fins]),
        fin_kd=np.array([a.rudder.k_d for a in fins]),
        fin_stall=np.array([a.rudder.stall_angle for a in fins]),
        fin_rho=np.array([a.rudder.fluid_density for a in fins]),
        fin_hinge=hinge,
        fin_xf=xf,
        fin_yf=yf,
    )


@dataclass
class BatchParams:
    """Per-environment physical parameters (mutated on reset only)."""

    mass: np.ndarray  # (N,)
    volume: np.ndarray  # (N,)
    r_g: np.ndarray  # (N,3)
    r_b: np.ndarray  # (N,3)
    M_RB: np.ndarray  # (N,6,6)
    M_A: np.ndarray  # (N,6,6)
    M_inv: np.ndarray  # (N,6,6)
    D_lin: np.ndarray  # (N,6,6)
    D_quad: np.ndarray  # (N,6,6)
    thrust_coeff: np.ndarray  # (N,A)
    time_constant: np.ndarray  # (N,A)
    mounts: np.ndarray  # (N,A,3)

    @classmethod
    def empty(cls, n: int, a: int) -> "BatchParams":
        return cls(
            mass=np.zeros(n), volume=np.zeros(n),
            r_g=np.zeros((n, 3)), r_b=np.zeros((n, 3)),
            M_RB=np.zeros((n, 6, 6)), M_A=np.zeros((n, 6, 6)), M_inv=np.zeros((n, 6, 6)),
            D_lin=np.zeros((n, 6, 6)), D_quad=np.zeros((n, 6, 6)),
            thrust_coeff=np.zeros((n, a)), time_constant=np.ones((n, a)),
            mounts=np.zeros((n, a, 3)),
        )

    def write_row(self, i, cfg: VehicleConfig):
        rb = cfg.rb
        self.mass[i] = rb.mass
        self.volume[i] = rb.displaced_volume
        self.r_g[i] = rb.r_g
        self.r_b[i] = rb.r_b
        self.M_RB[i] = rb_mass_matrix(rb)
        self.M_A[i] = cfg.coeffs.M_A
        self.M_inv[i] = MassMatrix.from_params(rb, cfg.coeffs).M_inv
        self.D_lin[i] = cfg.coeffs.D_lin
        self.D_quad[i] = cfg.coeffs.D_quad
        for j, a in enumerate(cfg.actuators):
            self.thrust_coeff[i, j] = a.thrust_coeff
            self.time_constant[i, j] = a.time_constant
            self.mounts[i, j] = a.mount_position


class _ParamsView:
    """Attribute view exposing one slice of BatchParams as rb/coeff namespaces."""

    def __init__(self, params: BatchParams, layout: VehicleLayout, sl):
        self.mass = params.mass[sl]
        self.displaced_volume = params.volume[sl]
        self.r_g = params.r_g[sl]
        self.r_b = params.r_b[sl]
        self.M_A = params.M_A[sl]
        self.D_lin = params.D_lin[sl]
        self.D_quad = params.D_quad[sl]
        self.fluid_density = layout.fluid_density
        self.gravity = layout.gravity


@dataclass
class EnvInit:
    """Everything an environment needs at episode start."""

    pose: Pose
    nu: np.ndarray = field(default_factory=lambda: np.zeros(6))
    overlay: dict = field(default_factory=dict)
    current_ned: np.ndarray = field(default_factory=lambda: np.zeros(3))


InitSampler = Callable[[int, int, np.random.Generator], EnvInit]


def default_sampler(env_index: int, episode: int, rng: np.random.Generator) -> EnvInit:
    return EnvInit(pose=Pose())


@dataclass
class BatchState:
    sim: SimConfig
    vehicle: VehicleConfig
    layout: VehicleLayout
    master_seed: int
    params: BatchParams
    p: np.ndarray  # (N,3) NED
    q: np.ndarray  # (N,4) body->NED
    nu: np.ndarray  # (N,6)
    act: np.ndarray  # (N,A) rotor speeds / fin angles
    tilt: np.ndarray  # (N,A)
    current_ned: np.ndarray  # (N,3)
    steps: np.ndarray  # (N,) int64, steps in current episode
    episodes: np.ndarray  # (N,) int64, -1 before first reset
    diverged: np.ndarray  # (N,) bool
    overlays: list  # per-env overlay dict applied at the last reset

    @property
    def n_envs(self) -> int:
        return self.sim.batch_size

    def env_rng(self, i: int) -> np.random.Generator:
        """The counter-based substream for env i's current episode."""
        key = (int(i), int(self.episodes[i]))
        return np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(self.master_seed, spawn_key=key)))


def make_batch(vehicle: VehicleConfig, sim: SimConfig, master_seed: int = 0) -> BatchState:
    """Allocate a batch primed with the base vehicle; call reset_envs to start."""
    n, a = sim.batch_size, vehicle.action_dim
    layout = compile_layout(vehicle)
    params = BatchParams.empty(n, a)
    base = params.__class__.empty(1, a)
    base.write_row(0, vehicle)
    _copy_rows(params, base, np.arange(n))
    q = np.zeros((n, 4))
    q[:, 0] = 1.0
    state = BatchState(
        sim=sim, vehicle=vehicle, layout=layout, master_seed=master_seed,
        params=params,
        p=np.zeros((n, 3)), q=q, nu=np.zeros((n, 6)),
        act=np.zeros((n, a)), tilt=np.tile(layout.tilt_default, (n, 1)),
        current_ned=np.zeros((n, 3)),
        steps=np.zeros(n, dtype=np.int64),
        episodes=np.full(n, -1, dtype=np.int64),
        diverged=np.zeros(n, dtype=bool),
        overlays=[{} for _ in range(n)],
    )
    state._base_row = base  # pristine template for overlay-free resets
    return state


def _copy_rows(dst: BatchParams, src: BatchParams, rows):
    for name in ("mass", "volume", "r_g", "r_b", "M_RB", "M_A", "M_inv",
                 "D_lin", "D_quad", "thrust_coeff", "time_constant", "mounts"):
        getattr(dst, name)[rows] = getattr(src, name)[0]


def current_in_body(pose: Pose, current_ned: np.ndarray) -> np.ndarray:
    """Irrotational current as a body-frame 6-vector (angular part zero)."""
    lin = quat_rotate_inverse(pose.q, np.asarray(current_ned, dtype=float))
    return np.concatenate([lin, np.zeros_like(lin)], axis=-1)


def _advance_rotors(state: BatchState, sl, u: np.ndarray, dt: float) -> np.ndarray:
    layout = state.layout
    act = state.act[sl]
    new = np.empty_like(act)
    tc_all = state.params.time_constant[sl]
    for code, cols, mlp in layout.groups:
        n = act[:, cols]
        uu = u[:, cols]
        limit = layout.limit[cols]
        if code == 0:
            stepped = uu * limit
        elif code == 1:
            tc = tc_all[:, cols]
            stepped = n + (dt / tc) * (uu * limit - n)
        else:
            stepped = n + dt * mlp.forward(uu, n / limit) * limit
        new[:, cols] = np.clip(stepped, -limit, limit)
    return new


def _actuator_wrench_batch(state: BatchState, sl, act_new: np.ndarray,
                           nu_r: np.ndarray) -> np.ndarray:
    """Aggregate actuator wrench; mirrors the single-actuator formulas."""
    layout = state.layout
    n_rows = act_new.shape[0]
    A = layout.action_dim
    mounts = state.params.mounts[sl]
    forces = np.zeros((n_rows, A, 3))
    torques = np.zeros((n_rows, A, 3))

    tc = layout.thrust_cols
    if tc.size:
        n = act_new[:, tc]
        ndz = np.sign(n) * np.maximum(np.abs(n) - layout.deadzone[tc], 0.0)
        thrust = state.params.thrust_coeff[sl][:, tc] * ndz * np.abs(ndz)
        f = thrust[..., None] * layout.axes_eff[tc]
        forces[:, tc] = f
        torques[:, tc] = np.cross(mounts[:, tc], f)
        for j in tc[layout.reaction[tc] != 0.0]:
            nj = act_new[:, j]
            ndz_j = np.sign(nj) * np.maximum(np.abs(nj) - layout.deadzone[j], 0.0)
            torques[:, j] = torques[:, j] + (
                layout.reaction[j] * ndz_j * np.abs(ndz_j))[..., None] * layout.axes_eff[j]

    rc = layout.rudder_cols
    if rc.size:
        rm = mounts[:, rc]
        flow = -(nu_r[:, None, :3] + np.cross(nu_r[:, None, 3:], rm))
        h = layout.fin_hinge
        v_plane = flow - (flow * h).sum(axis=-1)[..., None] * h
        V = np.sqrt((flow * flow).sum(axis=-1))
        Vp = np.sqrt((v_plane * v_plane).sum(axis=-1))
        a = (v_plane * layout.fin_xf).sum(axis=-1)
        b = (v_plane * layout.fin_yf).sum(axis=-1)
        beta = np.arctan2(b, -a)
        alpha = np.clip(act_new[:, rc] + beta, -layout.fin_stall, layout.fin_stall)
        q_dyn = 0.5 * layout.fin_rho * V * V * layout.fin_area
        lift = q_dyn * layout.fin_cla * alpha
        drag = q_dyn * (layout.fin_cd0 + layout.fin_kd * alpha * alpha)
        safe = np.where(Vp > 1e-9, Vp, 1.0)
        v_hat = v_plane / safe[..., None]
        lift_dir = np.cross(v_hat, np.broadcast_to(h, v_hat.shape))
        active = (Vp > 1e-9)[..., None]
        f = np.where(active, lift[..., None] * lift_dir + drag[..., None] * v_hat, 0.0)
        forces[:, rc] = f
        torques[:, rc] = np.cross(rm, f)

    return np.concatenate([forces.sum(axis=-2), torques.sum(axis=-2)], axis=-1)


def _step_slice(state: BatchState, sl, commands: np.ndarray):
    layout = state.layout
    dt = state.sim.dt / state.sim.substeps
    rb_view = _ParamsView(state.params, layout, sl)
    m_inv = state.params.M_inv[sl]
    m_rb = state.params.M_RB[sl]
    ok_rows = ~state.diverged[sl]
    u = np.clip(commands[sl], -1.0, 1.0)

    # Overflow/NaN in a row is an expected, handled condition: the row is
    # frozen and flagged below instead of raising or warning.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        _substeps(state, sl, u, ok_rows, dt, rb_view, m_inv, m_rb)
    state.steps[sl] += 1


def _substeps(state: BatchState, sl, u, ok_rows, dt, rb_view, m_inv, m_rb):
    for _ in range(state.sim.substeps):
        p, q, nu = state.p[sl], state.q[sl], state.nu[sl]
        pose = Pose(p=p, q=q)
        act_new = _advance_rotors(state, sl, u, dt)
        nu_c = current_in_body(pose, state.current_ned[sl])
        nu_r = nu - nu_c
        tau = _actuator_wrench_batch(state, sl, act_new, nu_r)
        rhs = tau + hydro_wrench(pose, nu, nu_c, rb_view, rb_view)
        rhs = rhs - coriolis_force(m_rb, nu)
        acc = matvec(m_inv, rhs)
        nu_new = nu + dt * acc
        pose_new = integrate_pose(pose, BodyVelocity.from_vector(nu_new), dt)

        finite = (
            np.isfinite(pose_new.p).all(axis=-1)
            & np.isfinite(pose_new.q).all(axis=-1)
            & np.isfinite(nu_new).all(axis=-1)
            & np.isfinite(act_new).all(axis=-1)
        )
        write = ok_rows & finite
        ok_rows = write
        w3 = write[:, None]
        state.p[sl] = np.where(w3, pose_new.p, p)
        state.q[sl] = np.where(write[:, None], pose_new.q, q)
        state.nu[sl] = np.where(w3, nu_new, nu)
        state.act[sl] = np.where(write[:, None], act_new, state.act[sl])

    state.diverged[sl] = ~ok_rows


_EXECUTORS: dict[int, "object"] = {}


def _executor(workers: int):
    import concurrent.futures

    ex = _EXECUTORS.get(workers)
    if ex is None:
        ex = concurrent.futures.ThreadPoolExecutor(max_workers=workers)
        _EXECUTORS[workers] = ex
    return ex


def step_batch(state: BatchState, commands: np.ndarray) -> BatchState:
    """Advance every environment one control step."""
    commands = np.asarray(commands, dtype=float)
    n, a = state.sim.batch_size, state.layout.action_dim
    if commands.shape != (n, a):
        raise EngineError(f"commands: expected shape {(n, a)}, got {commands.shape}")
    w = min(state.sim.workers, n)
    if w == 1:
        _step_slice(state, slice(0, n), commands)
        return state
    bounds = np.linspace(0, n, w + 1, dtype=int)
    ex = _executor(w)
    futures = [
        ex.submit(_step_slice, state, slice(int(lo), int(hi)), commands)
        for lo, hi in zip(bounds[:-1], bounds[1:])
        if hi > lo
    ]
    for f in futures:
        f.result()
    return state


def reset_envs(state: BatchState, mask: np.ndarray,
               sampler: InitSampler = default_sampler) -> BatchState:
    """Re-initialize the masked environments from their episode substreams."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (state.sim.batch_size,):
        raise EngineError(f"mask: expected shape {(state.sim.batch_size,)}, got {mask.shape}")
    for i in np.nonzero(mask)[0]:
        state.episodes[i] += 1
        rng = state.env_rng(i)
        init = sampler(int(i), int(state.episodes[i]), rng)
        overlay = dict(init.overlay)
        if overlay:
            cfg = apply_overlay(state.vehicle, overlay)
            state.params.write_row(i, cfg)
        else:
            _copy_rows(state.params, state._base_row, np.array([i]))
        state.p[i] = init.pose.p
        state.q[i] = init.pose.q
        state.nu[i] = np.asarray(init.nu, dtype=float)
        state.act[i] = 0.0
        state.tilt[i] = state.layout.tilt_default
        state.current_ned[i] = np.asarray(init.current_ned, dtype=float)
        state.steps[i] = 0
        state.diverged[i] = False
        state.overlays[i] = overlay
    return state


def env_snapshot(state: BatchState, i: int) -> dict:
    """One environment's full state and reset context (for logging/tests)."""
    return {
        "p": state.p[i].copy(),
        "q": state.q[i].copy(),
        "nu": state.nu[i].copy(),
        "act": state.act[i].copy(),
        "current_ned": state.current_ned[i].copy(),
        "steps": int(state.steps[i]),
        "episode": int(state.episodes[i]),
        "diverged": bool(state.diverged[i]),
        "overlay": dict(state.overlays[i]),
    }


@dataclass
class ThroughputReport:
    batch_size: int
    workers: int
    n_steps: int
    elapsed_s: float
    aggregate_steps_per_s: float
    per_env_steps_per_s: float
    diverged_envs: int = 0


def throughput_probe(sim: SimConfig, vehicle: VehicleConfig, duration: float = 2.0,
                     warmup_steps: int = 20, seed: int = 0) -> ThroughputReport:
    """Wall-clock stepping rate with active rotors; warmup excluded."""
    state = make_batch(vehicle, sim, master_seed=seed)
    reset_envs(state, np.ones(sim.batch_size, dtype=bool))
    rng = np.random.default_rng(seed)
    commands = rng.uniform(-1.0, 1.0, size=(sim.batch_size, vehicle.action_dim))
    for _ in range(warmup_steps):
        step_batch(state, commands)
    n_steps = 0
    start = time.perf_counter()
    while True:
        step_batch(state, commands)
        n_steps += 1
        elapsed = time.perf_counter() - start
        if elapsed >= duration:
            break
    agg = sim.batch_size * n_steps / elapsed
    return ThroughputReport(
        batch_size=sim.batch_size, workers=sim.workers, n_steps=n_steps,
        elapsed_s=elapsed, aggregate_steps_per_s=agg,
        per_env_steps_per_s=n_steps / elapsed,
        diverged_envs=int(state.diverged.sum()),
    )
