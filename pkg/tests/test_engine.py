"""Batched simulation engine: parity with single-body ops, determinism, safety."""

import numpy as np
import pytest
from conftest import bitwise, serial_rollout

from uuvsim.engine import (
    EngineError,
    EnvInit,
    SimConfig,
    current_in_body,
    env_snapshot,
    make_batch,
    reset_envs,
    step_batch,
    throughput_probe,
)
from uuvsim.kinematics import Pose, quat_from_axis_angle
from uuvsim.vehicles import BUILTIN_VEHICLES, apply_overlay, load_vehicle


# ---------------------------------------------------------------- config


def test_sim_config_defaults_and_validation():
    sim = SimConfig(batch_size=4)
    assert sim.dt == 0.02 and sim.substeps == 1 and sim.workers == 1
    for bad in (dict(dt=0.0), dict(dt=-0.1), dict(substeps=0),
                dict(batch_size=0), dict(workers=0)):
        with pytest.raises(EngineError):
            SimConfig(**{"batch_size": 4, **bad})


def test_command_and_mask_shape_errors():
    veh = load_vehicle("bluerov")
    st = make_batch(veh, SimConfig(batch_size=3), master_seed=0)
    reset_envs(st, np.ones(3, bool))
    with pytest.raises(EngineError, match="commands"):
        step_batch(st, np.zeros((3, veh.action_dim + 1)))
    with pytest.raises(EngineError, match="mask"):
        reset_envs(st, np.ones(4, bool))


# ---------------------------------------------------------------- equilibrium


def test_neutral_vehicle_holds_station():
    veh = load_vehicle("bluerov")
    st = make_batch(veh, SimConfig(batch_size=3), master_seed=1)
    reset_envs(st, np.ones(3, bool))
    for _ in range(200):
        step_batch(st, np.zeros((3, veh.action_dim)))
    assert np.abs(st.p).max() < 1e-12
    assert np.abs(st.nu).max() < 1e-12
    assert np.abs(st.q - np.array([1.0, 0.0, 0.0, 0.0])).max() < 1e-12
    assert st.steps[0] == 200 and st.episodes[0] == 0 and not st.diverged.any()


def test_identical_envs_stay_bitwise_identical():
    veh = load_vehicle("bluerov")
    st = make_batch(veh, SimConfig(batch_size=8), master_seed=3)
    reset_envs(st, np.ones(8, bool))
    rng = np.random.default_rng(0)
    for _ in range(100):
        row = rng.uniform(-1, 1, size=(1, veh.action_dim))
        step_batch(st, np.repeat(row, 8, axis=0))
    for arr in (st.p, st.q, st.nu, st.act):
        assert all(bitwise(arr[i], arr[0]) for i in range(8))


# ---------------------------------------------------------------- batch parity


def randomized_sampler(i, ep, rng):
    """Half the batch randomized; odd rows in a current; varied starts."""
    overlay = {}
    if i >= 2:
        overlay = {"mass*": float(rng.uniform(0.9, 1.1)),
                   "damping*": float(rng.uniform(0.9, 1.1)),
                   "cobm": float(rng.uniform(0.8, 2.0)),
                   "thrust_coeff*": float(rng.uniform(0.9, 1.1))}
    cur = rng.uniform(-0.2, 0.2, 3) if i % 2 else np.zeros(3)
    ang = rng.uniform(-0.3, 0.3, 3)
    pose = Pose(p=rng.uniform(-1, 1, 3),
                q=quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), float(ang[2])))
    return EnvInit(pose=pose, nu=rng.uniform(-0.1, 0.1, 6),
                   overlay=overlay, current_ned=cur)


@pytest.mark.parametrize("name", BUILTIN_VEHICLES)
def test_batch_matches_serial_reference_bitwise(name):
    veh = load_vehicle(name)
    n_envs, n_steps = 4, 100
    st = make_batch(veh, SimConfig(batch_size=n_envs, substeps=2), master_seed=42)
    reset_envs(st, np.ones(n_envs, bool), randomized_sampler)
    snaps = [env_snapshot(st, i) for i in range(n_envs)]
    commands = np.random.default_rng(7).uniform(
        -1, 1, size=(n_steps, n_envs, veh.action_dim))
    batch_traj = []
    for t in range(n_steps):
        step_batch(st, commands[t])
        batch_traj.append((st.p.copy(), st.q.copy(), st.nu.copy(), st.act.copy()))
    assert not st.diverged.any()
    for i in range(n_envs):
        cfg = apply_overlay(veh, snaps[i]["overlay"]) if snaps[i]["overlay"] else veh
        serial = serial_rollout(cfg, snaps[i], commands[:, i], st.sim.dt, 2)
        for t in range(n_steps):
            for k, label in enumerate(("p", "q", "nu", "act")):
                assert bitwise(serial[t][k], batch_traj[t][k][i]), (name, i, t, label)


def test_worker_count_does_not_change_results():
    veh = load_vehicle("lauv")
    outs = []
    for workers in (1, 2, 5):
        st = make_batch(veh, SimConfig(batch_size=5, workers=workers), master_seed=9)
        reset_envs(st, np.ones(5, bool))
        rng = np.random.default_rng(11)
        for _ in range(50):
            step_batch(st, rng.uniform(-1, 1, size=(5, veh.action_dim)))
        outs.append((st.p.copy(), st.q.copy(), st.nu.copy(), st.act.copy()))
    for other in outs[1:]:
        assert all(bitwise(a, b) for a, b in zip(outs[0], other))


# ---------------------------------------------------------------- divergence


def test_diverged_env_freezes_without_contaminating_others():
    veh = load_vehicle("bluerov")
    st = make_batch(veh, SimConfig(batch_size=3), master_seed=5)
    reset_envs(st, np.ones(3, bool))
    st.nu[1] = 1e200  # inject a blow-up
    ref = make_batch(veh, SimConfig(batch_size=3), master_seed=5)
    reset_envs(ref, np.ones(3, bool))
    cmds = np.random.default_rng(2).uniform(-1, 1, (3, veh.action_dim))
    for _ in range(10):
        step_batch(st, cmds)
        step_batch(ref, cmds)
    assert st.diverged.tolist() == [False, True, False]
    assert np.isfinite(st.nu).all()
    assert bitwise(st.p[0], ref.p[0]) and bitwise(st.p[2], ref.p[2])


# ---------------------------------------------------------------- reset streams


def pose_sampler(i, ep, rng):
    return EnvInit(pose=Pose(p=rng.uniform(-1, 1, 3)), nu=rng.uniform(-0.1, 0.1, 6))


def test_reset_streams_are_seeded_and_per_episode():
    veh = load_vehicle("bluerov")
    a = make_batch(veh, SimConfig(batch_size=4), master_seed=77)
    b = make_batch(veh, SimConfig(batch_size=4), master_seed=77)
    reset_envs(a, np.ones(4, bool), pose_sampler)
    reset_envs(b, np.ones(4, bool), pose_sampler)
    assert bitwise(a.p, b.p) and bitwise(a.nu, b.nu)
    first = a.p.copy()
    reset_envs(a, np.array([True, False, False, False]), pose_sampler)
    assert not bitwise(a.p[0], first[0])  # episode 1 draws fresh values
    assert bitwise(a.p[1:], first[1:])  # untouched rows stay untouched
    assert a.episodes.tolist() == [1, 0, 0, 0]


def test_env_rng_is_counter_based():
    veh = load_vehicle("bluerov")
    st = make_batch(veh, SimConfig(batch_size=2), master_seed=123)
    reset_envs(st, np.ones(2, bool))
    want = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(123, spawn_key=(1, 0))))
    assert st.env_rng(1).uniform() == want.uniform()


def test_env_snapshot_fields():
    veh = load_vehicle("hauv")
    st = make_batch(veh, SimConfig(batch_size=2), master_seed=4)
    reset_envs(st, np.ones(2, bool), randomized_sampler)
    step_batch(st, np.zeros((2, veh.action_dim)))
    snap = env_snapshot(st, 0)
    assert set(snap) == {"p", "q", "nu", "act", "current_ned", "steps",
                         "episode", "diverged", "overlay"}
    assert snap["steps"] == 1 and snap["episode"] == 0 and snap["diverged"] is False
    assert snap["p"].shape == (3,) and snap["act"].shape == (veh.action_dim,)
    snap["p"][:] = 99.0  # snapshots are copies
    assert st.p[0, 0] != 99.0


# ---------------------------------------------------------------- frames


def test_current_rotates_into_body_frame():
    pose = Pose.from_euler(np.zeros(3), psi=np.pi / 2)
    nu_c = current_in_body(pose, np.array([1.0, 0.0, 0.0]))
    assert np.abs(nu_c - np.array([0, -1, 0, 0, 0, 0])).max() < 1e-12


def test_throughput_probe_reports():
    rep = throughput_probe(SimConfig(batch_size=16), load_vehicle("bluerov"),
                           duration=0.05, warmup_steps=2, seed=0)
    assert rep.batch_size == 16 and rep.n_steps > 0
    assert rep.aggregate_steps_per_s == pytest.approx(
        16 * rep.n_steps / rep.elapsed_s)
    assert rep.per_env_steps_per_s == pytest.approx(rep.n_steps / rep.elapsed_s)
    assert rep.diverged_envs == 0
