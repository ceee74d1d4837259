"""Acceptance suite: every core guarantee of the library at its stated
tolerance, one test per guarantee.  Cheap structural checks run first; the
full training/ablation runs sit at the end (several minutes together).
"""

import json
import os
import time

import numpy as np
import pytest
from conftest import bitwise, serial_rollout

from uuvsim.actuation import FIRST_ORDER, PROPELLER, ActuatorSpec, ActuatorState, \
    propeller_thrust, rotor_step
from uuvsim.baseline import cem_train, dr_ablation, evaluate
from uuvsim.cli import main as cli_main
from uuvsim.engine import (
    EnvInit,
    SimConfig,
    current_in_body,
    env_snapshot,
    make_batch,
    reset_envs,
    step_batch,
)
from uuvsim.hydrodynamics import HydroCoeffs, RigidBodyParams, coriolis
from uuvsim.kinematics import Pose, quat_from_axis_angle
from uuvsim.randomization import preset
from uuvsim.tasks import TaskConfig, make_env
from uuvsim.tasks.trajectories import TrajectorySpec, reference_point
from uuvsim.vehicles import VehicleConfig, apply_overlay, load_vehicle


# -- structural dynamics guarantees -----------------------------------------


def test_coriolis_never_does_work():
    """nu^T C(nu) nu = 0 within 1e-10 for 10^4 random mass matrices."""
    rng = np.random.default_rng(0)
    M = rng.uniform(-10.0, 10.0, size=(10_000, 6, 6))
    nu = rng.uniform(-2.0, 2.0, size=(10_000, 6))
    start = time.perf_counter()
    C = coriolis(M, nu)
    power = np.einsum("ni,nij,nj->n", nu, C, nu)
    elapsed = time.perf_counter() - start
    assert np.abs(power).max() < 1e-10
    assert elapsed < 1.0


def neutral_random_vehicle(rng, actuators):
    """A randomized vehicle with exactly cancelled weight/buoyancy and no
    CoG/CoB offsets, so the only forces in free drift are dissipative."""
    volume = rng.uniform(0.008, 0.02)
    mass = 1000.0 * volume
    inertia = np.diag(rng.uniform(0.05, 0.5, 3))
    ma_t = rng.uniform(0.2, 1.5, 3) * mass
    ma_r = rng.uniform(0.2, 1.5, 3) * np.diag(inertia)
    m_diag = np.concatenate([mass + ma_t, np.diag(inertia) + ma_r])
    d_lin = rng.uniform(0.5, 4.0, 6) * m_diag
    d_quad = rng.uniform(0.0, 3.0, 6) * m_diag
    rb = RigidBodyParams(mass=mass, inertia=inertia, r_g=np.zeros(3),
                         r_b=np.zeros(3), displaced_volume=volume)
    coeffs = HydroCoeffs(M_A=np.diag(np.concatenate([ma_t, ma_r])),
                         D_lin=np.diag(d_lin), D_quad=np.diag(d_quad))
    return VehicleConfig(name="drift", rb=rb, coeffs=coeffs,
                         actuators=actuators, bounding_radius=1.0)


def test_free_drift_only_dissipates_energy():
    """100 random vehicles, no thrust/current/restoring: kinetic energy is
    non-increasing at every one of 5000 steps (tolerance 1e-9)."""
    n = 100
    base = load_vehicle("bluerov")
    state = make_batch(base, SimConfig(batch_size=n), master_seed=0)

    def drift_start(i, ep, rng):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        pose = Pose(q=quat_from_axis_angle(axis, rng.uniform(-np.pi, np.pi)))
        return EnvInit(pose=pose, nu=rng.uniform(-0.5, 0.5, 6))

    reset_envs(state, np.ones(n, bool), drift_start)
    rng = np.random.default_rng(42)
    for i in range(n):  # row params replace the base vehicle after the reset
        state.params.write_row(i, neutral_random_vehicle(rng, base.actuators))

    def kinetic_energy():
        M = state.params.M_RB + state.params.M_A
        return 0.5 * np.einsum("ni,nij,nj->n", state.nu, M, state.nu)

    zero_u = np.zeros((n, base.action_dim))
    ke = kinetic_energy()
    for _ in range(5000):
        step_batch(state, zero_u)
        ke_next = kinetic_energy()
        assert np.all(ke_next <= ke + 1e-9)
        ke = ke_next
    assert not state.diverged.any()
    assert ke.max() < 1e-6  # everything ground to a halt


def test_drift_converges_to_the_current():
    """An unthrusted vehicle in a uniform 0.3 m/s current ends up moving
    with it: body velocity within 1% of the projected current."""
    veh = load_vehicle("bluerov")
    state = make_batch(veh, SimConfig(batch_size=1), master_seed=3)

    def in_current(i, ep, rng):
        return EnvInit(pose=Pose(), current_ned=np.array([0.3, 0.0, 0.0]))

    reset_envs(state, np.ones(1, bool), in_current)
    start = time.perf_counter()
    zero_u = np.zeros((1, veh.action_dim))
    for _ in range(3000):  # 60 s simulated
        step_batch(state, zero_u)
    elapsed = time.perf_counter() - start
    pose = Pose(p=state.p[0], q=state.q[0])
    nu_c = current_in_body(pose, state.current_ned[0])
    assert np.linalg.norm(state.nu[0] - nu_c) < 0.01 * 0.3
    assert elapsed < 5.0


# -- bitwise reproducibility -------------------------------------------------


def wide_sampler(i, ep, rng):
    overlay = {}
    if i >= 128:
        overlay = {"mass*": float(rng.uniform(0.9, 1.1)),
                   "damping*": float(rng.uniform(0.9, 1.1)),
                   "cobm": float(rng.uniform(0.8, 2.0)),
                   "thrust_coeff*": float(rng.uniform(0.9, 1.1))}
    cur = rng.uniform(-0.2, 0.2, 3) if i % 2 else np.zeros(3)
    pose = Pose(p=rng.uniform(-1, 1, 3),
                q=quat_from_axis_angle(np.array([0.0, 0.0, 1.0]),
                                       float(rng.uniform(-0.3, 0.3))))
    return EnvInit(pose=pose, nu=rng.uniform(-0.1, 0.1, 6),
                   overlay=overlay, current_ned=cur)


def test_batched_rollout_equals_serial_reference_bitwise():
    """1000 batched steps at N=256 equal the single-env reference loop
    bitwise: all 256 envs over the first 10 steps, and six representative
    envs over the full 1000 steps (runtime budget 10 s)."""
    veh = load_vehicle("bluerov")
    n_envs, n_steps = 256, 1000
    start = time.perf_counter()
    state = make_batch(veh, SimConfig(batch_size=n_envs), master_seed=42)
    reset_envs(state, np.ones(n_envs, bool), wide_sampler)
    snaps = [env_snapshot(state, i) for i in range(n_envs)]
    commands = np.random.default_rng(7).uniform(
        -1, 1, size=(n_steps, n_envs, veh.action_dim))
    batch = []
    for t in range(n_steps):
        step_batch(state, commands[t])
        batch.append((state.p.copy(), state.q.copy(), state.nu.copy(),
                      state.act.copy()))
    assert not state.diverged.any()

    def check_env(i, depth):
        cfg = apply_overlay(veh, snaps[i]["overlay"]) if snaps[i]["overlay"] else veh
        serial = serial_rollout(cfg, snaps[i], commands[:depth, i], 0.02, 1)
        for t in range(depth):
            for k, label in enumerate(("p", "q", "nu", "act")):
                assert bitwise(serial[t][k], batch[t][k][i]), (i, t, label)

    for i in range(n_envs):  # full width, shallow
        check_env(i, 10)
    for i in (0, 1, 127, 128, 200, 255):  # full depth, representative rows
        check_env(i, n_steps)
    assert time.perf_counter() - start < 10.0


def test_worker_count_is_bitwise_invariant():
    """Identical (seed, commands) across 1 and max workers."""
    veh = load_vehicle("bluerov_heavy")
    results = []
    for workers in (1, max(4, os.cpu_count() or 1)):
        state = make_batch(veh, SimConfig(batch_size=64, workers=workers),
                           master_seed=13)
        reset_envs(state, np.ones(64, bool), wide_sampler)
        rng = np.random.default_rng(17)
        for _ in range(200):
            step_batch(state, rng.uniform(-1, 1, (64, veh.action_dim)))
        results.append((state.p.copy(), state.q.copy(), state.nu.copy(),
                        state.act.copy()))
    assert all(bitwise(a, b) for a, b in zip(*results))


# -- performance ---------------------------------------------------------------


def test_throughput_meets_the_floor(capsys):
    """Aggregate stepping rate at N=2048 stays above 1e5 steps/s (with the
    documented 20% run-to-run tolerance), measured by the bench command."""
    code = cli_main(["bench", "--envs", "2048", "--duration", "2.0",
                     "--format", "records"])
    out = capsys.readouterr().out
    assert code == 0
    row = json.loads(out.strip().splitlines()[1])
    assert row["batch_size"] == 2048 and row["diverged_envs"] == 0
    assert row["aggregate_steps_per_s"] >= 0.8e5


# -- randomization fidelity ------------------------------------------------


EXPECTED_PRESETS = {
    "train": {
        "mass*": (0.8, 1.2), "volume*": (0.8, 1.2), "cobm": (0.5, 3.0),
        "inertia*": (0.8, 1.2), "added_mass*": (0.8, 1.2),
        "damping*": (0.8, 1.2), "current_velocity": (0.0, 0.5),
        "payload_mass*": (0.0, 0.3),
    },
    "test_env1": {
        "mass*": (1.1, 1.1), "volume*": (1.1, 1.1), "cobm": (2.0, 2.0),
        "inertia*": (1.1, 1.1), "added_mass*": (1.1, 1.1),
        "damping*": (1.1, 1.1), "current_velocity": (0.2, 0.2),
        "payload_mass*": (0.2, 0.2),
    },
    "test_env2": {
        "mass*": (1.4, 1.4), "volume*": (1.4, 1.4), "cobm": (4.0, 4.0),
        "inertia*": (1.4, 1.4), "added_mass*": (1.4, 1.4),
        "damping*": (1.4, 1.4), "current_velocity": (0.8, 0.8),
        "payload_mass*": (0.4, 0.4),
    },
}


def test_randomization_presets_match_published_ranges(capsys):
    """Preset bounds are exactly the published values; 1e5 fresh draws stay
    inside the support with uniform means within 0.5% of the midpoint."""
    for name, rows in EXPECTED_PRESETS.items():
        spec = preset(name)
        assert set(spec) == set(rows)
        for key, (lo, hi) in rows.items():
            assert spec[key].distribution.support() == (lo, hi), (name, key)

    code = cli_main(["dr-check", "--preset", "train", "--samples", "100000",
                     "--format", "records"])
    out = capsys.readouterr().out
    assert code == 0
    rows = [json.loads(l) for l in out.strip().splitlines()[1:]]
    assert {r["key"] for r in rows} == set(EXPECTED_PRESETS["train"])
    for r in rows:
        assert r["ok"], r["key"]
        lo, hi = EXPECTED_PRESETS["train"][r["key"]]
        assert lo <= r["min"] and r["max"] <= hi
        assert abs(r["mean"] - 0.5 * (lo + hi)) <= 0.005 * (hi - lo)


# -- actuator conformance ------------------------------------------------------


def test_actuator_response_examples_hold_exactly():
    spec = ActuatorSpec(index=0, kind=PROPELLER,
                        mount_position=np.zeros(3),
                        mount_axis=np.array([1.0, 0.0, 0.0]),
                        rotor_model=FIRST_ORDER, thrust_coeff=2e-4,
                        deadzone=5.0, max_speed=100.0, time_constant=0.2)
    # dead zone swallows sub-threshold speeds entirely
    assert propeller_thrust(spec, 4.9) == 0.0
    assert propeller_thrust(spec, -4.9) == 0.0
    # quadratic law beyond the dead zone
    assert propeller_thrust(spec, 15.0) == 2e-4 * 10.0 * 10.0
    assert propeller_thrust(spec, -15.0) == -(2e-4 * 10.0 * 10.0)
    # first-order update is the exact explicit formula
    state = ActuatorState(rotor_speed=20.0)
    stepped = rotor_step(spec, state, 0.5, 0.02)
    assert stepped == 20.0 + (0.02 / 0.2) * (0.5 * 100.0 - 20.0)
    # steady state settles within 0.1% of u * max_speed
    state = ActuatorState(rotor_speed=0.0)
    for _ in range(2000):
        state = ActuatorState(rotor_speed=float(rotor_step(spec, state, 0.8, 0.02)))
    assert abs(state.rotor_speed - 80.0) <= 0.001 * 100.0


# -- reference trajectories ----------------------------------------------------


@pytest.mark.parametrize("spec, third_derivative_bound", [
    (TrajectorySpec(kind="helix", radius=2.0, angular_rate=0.25, climb_rate=0.05),
     np.array([2.0 * 0.25 ** 3, 2.0 * 0.25 ** 3, 0.0])),
    (TrajectorySpec(kind="lissajous", amplitude=(2.0, 2.0, 0.5),
                    rates=(0.2, 0.3, 0.1), phase=0.4),
     np.array([2.0 * 0.2 ** 3, 2.0 * 0.3 ** 3, 0.5 * 0.1 ** 3])),
])
def test_reference_velocity_matches_finite_differences(spec, third_derivative_bound):
    """Central differences at the control step match v_ref to second order:
    the error obeys the |p'''| h^2 / 6 bound and shrinks 4x when h halves."""
    ts = np.linspace(1.0, 40.0, 64)
    errors = {}
    for h in (0.04, 0.02, 0.01):
        p_plus, _ = reference_point(spec, ts + h)
        p_minus, _ = reference_point(spec, ts - h)
        _, v = reference_point(spec, ts)
        err = np.abs((p_plus - p_minus) / (2 * h) - v)
        bound = third_derivative_bound * h ** 2 / 6.0
        assert np.all(err <= bound + 1e-12)
        errors[h] = err.max()
    assert errors[0.04] / max(errors[0.02], 1e-300) == pytest.approx(4.0, rel=0.2)


# -- learning (several minutes) -------------------------------------------------


def test_baseline_learns_station_keeping():
    """Best-so-far return never decreases over 60 iterations, and the
    trained policy's mean position error beats the pinned 0.3 m threshold
    (first verified run: 0.206 m at these exact settings)."""
    task = TaskConfig(task="station_keeping", vehicle="bluerov_heavy")
    env = make_env(task, SimConfig(batch_size=512), seed=0)
    result = cem_train(env, population=32, elite_frac=0.25, iterations=60, seed=0)
    best = [c["best_return"] for c in result.curve]
    assert all(b2 >= b1 for b1, b2 in zip(best, best[1:]))
    eval_env = make_env(task, SimConfig(batch_size=250), seed=1)
    cell = evaluate(result.policy, eval_env, n_trials=500)
    assert cell.mean_error < 0.3, cell


def test_randomized_training_generalizes_in_order():
    """Training under parameter randomization can only help on held-out
    settings, and the far setting is the harder one, for both policies
    (500 trials each, fixed base seed)."""
    report = dr_ablation(seed=0)
    err = {c.label: c.mean_error for c in report.cells}
    assert err["dr/test_env1"] <= err["ndr/test_env1"], err
    assert err["dr/test_env2"] <= err["ndr/test_env2"], err
    assert err["ndr/test_env2"] >= err["ndr/test_env1"], err
    assert err["dr/test_env2"] >= err["dr/test_env1"], err
