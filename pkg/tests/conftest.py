"""Shared test helpers: the single-env reference loop and bit-level compare."""

import numpy as np

from uuvsim.actuation import RUDDER, ActuatorState, actuator_wrench, aggregate_wrenches, rotor_step
from uuvsim.engine import current_in_body
from uuvsim.hydrodynamics import MassMatrix, coriolis_force, hydro_wrench, rb_mass_matrix
from uuvsim.kinematics import BodyVelocity, Pose, integrate_pose, matvec


def bitwise(a, b) -> bool:
    a = np.asarray(a)
    b = np.asarray(b)
    return a.shape == b.shape and a.tobytes() == b.tobytes()


def serial_rollout(cfg, snap, commands, dt, substeps):
    """Single-env reference: public single-body ops composed in engine order.

    ``cfg`` is the effective vehicle config (overlay already applied),
    ``snap`` an env_snapshot dict, ``commands`` a (T, A) array.  Returns a
    list of (p, q, nu, act) tuples, one per step, for bit-level comparison
    against the batched engine.
    """
    mm = MassMatrix.from_params(cfg.rb, cfg.coeffs)
    m_rb = rb_mass_matrix(cfg.rb)
    pose = Pose(p=snap["p"].copy(), q=snap["q"].copy())
    nu = snap["nu"].copy()
    current = snap["current_ned"].copy()
    states = []
    for j, a in enumerate(cfg.actuators):
        st = ActuatorState(tilt_angle=a.tilt_angle_default)
        if a.kind == RUDDER:
            st.rudder_angle = float(snap["act"][j])
        else:
            st.rotor_speed = float(snap["act"][j])
        states.append(st)
    dts = dt / substeps
    traj = []
    for t in range(commands.shape[0]):
        u = commands[t]
        for _ in range(substeps):
            for j, a in enumerate(cfg.actuators):
                new = float(rotor_step(a, states[j], u[j], dts))
                if a.kind == RUDDER:
                    states[j].rudder_angle = new
                else:
                    states[j].rotor_speed = new
            nu_c = current_in_body(pose, current)
            wr = [actuator_wrench(a, states[j], nu, nu_c)
                  for j, a in enumerate(cfg.actuators)]
            tau = aggregate_wrenches(wr)
            rhs = tau + hydro_wrench(pose, nu, nu_c, cfg.rb, cfg.coeffs)
            rhs = rhs - coriolis_force(m_rb, nu)
            acc = matvec(mm.M_inv, rhs)
            nu = nu + dts * acc
            pose = integrate_pose(pose, BodyVelocity.from_vector(nu), dts)
        act = np.array([s.rudder_angle if a.kind == RUDDER else s.rotor_speed
                        for a, s in zip(cfg.actuators, states)])
        traj.append((pose.p.copy(), pose.q.copy(), nu.copy(), act))
    return traj
