import numpy as np
import pytest

from uuvsim.actuation import (
    DATA_DRIVEN,
    FIRST_ORDER,
    PROPELLER,
    RUDDER,
    TILTROTOR,
    ZERO_ORDER,
    ActuatorError,
    ActuatorSpec,
    ActuatorState,
    MLPWeights,
    RudderGeometry,
    actuator_wrench,
    aggregate_wrenches,
    propeller_thrust,
    rotor_step,
    rudder_wrench,
    tilt_rotation,
)
from uuvsim.kinematics import Wrench

RNG = np.random.default_rng(55)


def prop(**kw):
    defaults = dict(index=0, kind=PROPELLER, thrust_coeff=2e-4, deadzone=5.0,
                    max_speed=100.0, rotor_model=FIRST_ORDER, time_constant=0.2)
    defaults.update(kw)
    return ActuatorSpec(**defaults)


def fin(**kw):
    geom = RudderGeometry(area=0.02, c_l_alpha=6.0, c_d0=0.02, k_d=1.0,
                          stall_angle=0.52, max_angle=0.35)
    defaults = dict(index=0, kind=RUDDER, rudder=geom,
                    mount_position=np.array([-0.6, 0.0, 0.0]),
                    mount_axis=np.array([0.0, 0.0, 1.0]),
                    rotor_model=FIRST_ORDER, time_constant=0.1)
    defaults.update(kw)
    return ActuatorSpec(**defaults)


# -- spec validation -----------------------------------------------------------

def test_spec_validation_errors():
    with pytest.raises(ActuatorError):
        prop(kind="jet")
    with pytest.raises(ActuatorError):
        prop(rotor_model="pid")
    with pytest.raises(ActuatorError):
        prop(deadzone=-1.0)
    with pytest.raises(ActuatorError):
        prop(time_constant=0.0)
    with pytest.raises(ActuatorError):
        prop(mount_axis=np.zeros(3))
    with pytest.raises(ActuatorError):
        ActuatorSpec(index=0, kind=RUDDER, rudder=None)


def test_mount_axis_normalized():
    spec = prop(mount_axis=np.array([0.0, 0.0, 2.0]))
    assert np.allclose(spec.mount_axis, [0.0, 0.0, 1.0], atol=0)


# -- thrust map ------------------------------------------------------------------

def test_deadzone_suppresses_small_speeds():
    spec = prop()
    assert propeller_thrust(spec, 0.0) == 0.0
    assert propeller_thrust(spec, 4.9) == 0.0
    assert propeller_thrust(spec, -4.9) == 0.0


def test_thrust_quadratic_past_deadzone_and_odd_symmetry():
    spec = prop()
    # (|15| - 5)^2 * 2e-4 = 100 * 2e-4 = 0.02 N
    assert np.isclose(propeller_thrust(spec, 15.0), 0.02, atol=0)
    assert np.isclose(propeller_thrust(spec, -15.0), -0.02, atol=0)
    n = RNG.uniform(-80, 80, 40)
    assert np.allclose(propeller_thrust(spec, n), -propeller_thrust(spec, -n), atol=0)


# -- rotor response families -------------------------------------------------------

def test_zero_order_jumps_to_command():
    spec = prop(rotor_model=ZERO_ORDER)
    st = ActuatorState(rotor_speed=10.0)
    assert rotor_step(spec, st, 0.5, 0.02) == 50.0
    assert rotor_step(spec, st, -1.5, 0.02) == -100.0  # command clipped to -1


def test_first_order_discrete_update_exact():
    spec = prop(rotor_model=FIRST_ORDER, time_constant=0.2)
    st = ActuatorState(rotor_speed=20.0)
    new = rotor_step(spec, st, 0.5, 0.02)
    assert new == 20.0 + (0.02 / 0.2) * (0.5 * 100.0 - 20.0)


def test_first_order_steady_state_reaches_command():
    spec = prop(rotor_model=FIRST_ORDER, time_constant=0.15)
    st = ActuatorState(rotor_speed=0.0)
    n = 0.0
    for _ in range(2000):  # 40 s  >> 5 time constants
        n = float(rotor_step(spec, ActuatorState(rotor_speed=n), 0.8, 0.02))
    assert abs(n - 0.8 * spec.max_speed) < 0.001 * spec.max_speed


def test_rotor_speed_clipped_at_limit():
    spec = prop(rotor_model=ZERO_ORDER, max_speed=50.0)
    assert rotor_step(spec, ActuatorState(), 1.0, 0.02) == 50.0
    spec_fo = prop(rotor_model=FIRST_ORDER, time_constant=1e-3, max_speed=50.0)
    assert abs(rotor_step(spec_fo, ActuatorState(rotor_speed=49.0), 1.0, 0.02)) <= 50.0


def test_data_driven_rotor_matches_manual_mlp():
    mlp = MLPWeights(layer_sizes=[2, 4, 1],
                     weights=[RNG.normal(size=(4, 2)), RNG.normal(size=(1, 4))],
                     biases=[RNG.normal(size=4), RNG.normal(size=1)])
    spec = prop(rotor_model=DATA_DRIVEN, mlp=mlp)
    st = ActuatorState(rotor_speed=30.0)
    got = rotor_step(spec, st, 0.4, 0.02)
    x = np.array([0.4, 30.0 / 100.0])
    h = np.tanh(mlp.weights[0] @ x + mlp.biases[0])
    dn = (mlp.weights[1] @ h + mlp.biases[1])[0]
    assert np.isclose(got, np.clip(30.0 + 0.02 * dn * 100.0, -100, 100), atol=0)


def test_data_driven_without_weights_raises():
    spec = prop(rotor_model=DATA_DRIVEN, mlp=None)
    with pytest.raises(ActuatorError):
        rotor_step(spec, ActuatorState(), 0.5, 0.02)


def test_rotor_step_rejects_bad_dt():
    with pytest.raises(ActuatorError):
        rotor_step(prop(), ActuatorState(), 0.5, 0.0)


def test_mlp_validation():
    with pytest.raises(ActuatorError):
        MLPWeights(layer_sizes=[3, 1], weights=[np.zeros((1, 3))], biases=[np.zeros(1)])
    with pytest.raises(ActuatorError):
        MLPWeights(layer_sizes=[2, 1], weights=[np.zeros((2, 2))], biases=[np.zeros(1)])
    with pytest.raises(ActuatorError):
        MLPWeights(layer_sizes=[2, 1], weights=[np.zeros((1, 2))],
                   biases=[np.zeros(1)], activation="selu")


def test_rudder_command_maps_to_angle_limit():
    spec = fin(rotor_model=ZERO_ORDER)
    st = ActuatorState()
    assert rotor_step(spec, st, 1.0, 0.02) == spec.rudder.max_angle
    assert rotor_step(spec, st, -0.5, 0.02) == -0.5 * spec.rudder.max_angle


# -- wrench generation ---------------------------------------------------------------

def test_propeller_wrench_force_torque_geometry():
    spec = prop(mount_position=np.array([0.0, 0.2, 0.0]),
                mount_axis=np.array([1.0, 0.0, 0.0]))
    w = actuator_wrench(spec, ActuatorState(rotor_speed=15.0), np.zeros(6))
    assert np.allclose(w.force, [0.02, 0.0, 0.0], atol=1e-15)
    assert np.allclose(w.torque, np.cross([0.0, 0.2, 0.0], [0.02, 0.0, 0.0]), atol=1e-15)


def test_reaction_torque_about_thrust_axis():
    spec = prop(mount_position=np.zeros(3), mount_axis=np.array([0.0, 0.0, 1.0]),
                reaction_coeff=1e-5)
    w = actuator_wrench(spec, ActuatorState(rotor_speed=15.0), np.zeros(6))
    # ndz = 10, reaction = 1e-5 * 100 = 1e-3 about +z
    assert np.allclose(w.torque, [0.0, 0.0, 1e-3], atol=1e-15)
    spec_neg = prop(mount_position=np.zeros(3), mount_axis=np.array([0.0, 0.0, 1.0]),
                    reaction_coeff=-1e-5)
    w2 = actuator_wrench(spec_neg, ActuatorState(rotor_speed=15.0), np.zeros(6))
    assert w2.torque[2] == -1e-3


def test_tiltrotor_rotates_thrust_axis():
    spec = ActuatorSpec(index=0, kind=TILTROTOR, thrust_coeff=1e-3, deadzone=0.0,
                        max_speed=100.0, mount_axis=np.array([1.0, 0.0, 0.0]),
                        tilt_axis=np.array([0.0, -1.0, 0.0]), tilt_range=1.0)
    # tilt angle pi/2 about -y maps +x onto +z (nose thrust swings down)
    st = ActuatorState(rotor_speed=10.0, tilt_angle=np.pi / 2)
    w = actuator_wrench(spec, st, np.zeros(6))
    assert np.allclose(w.force, [0.0, 0.0, 0.1], atol=1e-12)


def test_tilt_rotation_rodrigues_properties():
    axis = np.array([1.0, 0.0, 0.0])
    tilt = np.array([0.0, 0.0, 1.0])
    r0 = tilt_rotation(axis, tilt, 0.0)
    assert np.allclose(r0, axis, atol=0)
    r90 = tilt_rotation(axis, tilt, np.pi / 2)
    assert np.allclose(r90, [0.0, 1.0, 0.0], atol=1e-12)
    angles = RNG.uniform(-np.pi, np.pi, 20)
    rs = tilt_rotation(axis, tilt, angles)
    assert np.allclose(np.linalg.norm(rs, axis=-1), 1.0, atol=1e-12)


# -- rudder fin -------------------------------------------------------------------

def test_rudder_zero_flow_zero_force():
    spec = fin()
    w = rudder_wrench(spec, 0.3, np.zeros(3))
    assert np.allclose(w.force, 0.0, atol=0)
    assert np.allclose(w.torque, 0.0, atol=0)


def test_rudder_pure_drag_at_zero_deflection():
    spec = fin()
    # vehicle surging at 2 m/s -> flow -x at 2 m/s, zero incidence
    flow = np.array([-2.0, 0.0, 0.0])
    w = rudder_wrench(spec, 0.0, flow)
    q_dyn = 0.5 * 1000.0 * 4.0 * 0.02
    assert np.isclose(w.force[0], -q_dyn * 0.02, atol=1e-12)  # drag downstream (-x)
    assert np.isclose(w.force[1], 0.0, atol=1e-12)
    assert w.force[2] == 0.0


def test_rudder_deflection_lift_direction_and_yaw_moment():
    spec = fin()
    flow = np.array([-2.0, 0.0, 0.0])
    w = rudder_wrench(spec, 0.2, flow)
    q_dyn = 0.5 * 1000.0 * 4.0 * 0.02
    lift = q_dyn * 6.0 * 0.2
    # hinge +z, flow -x: lift_dir = v_hat x h = (-1,0,0) x (0,0,1) = (0,1,0)
    assert np.isclose(w.force[1], lift, atol=1e-9)
    # fin sits aft (-x): +y force there yaws the nose, torque_z < 0
    assert w.torque[2] < 0
    # opposite deflection mirrors
    w2 = rudder_wrench(spec, -0.2, flow)
    assert np.isclose(w2.force[1], -w.force[1], atol=1e-9)


def test_rudder_stall_clamps_lift():
    spec = fin()
    flow = np.array([-2.0, 0.0, 0.0])
    at_stall = rudder_wrench(spec, 0.52, flow)
    beyond = rudder_wrench(spec, 1.2, flow)
    assert np.isclose(beyond.force[1], at_stall.force[1], atol=1e-12)


def test_rudder_incidence_adds_to_deflection():
    spec = fin()
    # sideslip: flow has +y component, beta = arctan2(b, -a) > 0
    flow = np.array([-2.0, 0.5, 0.0])
    w_defl = rudder_wrench(spec, 0.1, flow)
    w_zero = rudder_wrench(spec, 0.0, flow)
    # same flow, bigger alpha -> bigger lift magnitude along lift_dir
    lift_axis = np.cross(flow / np.linalg.norm(flow), [0.0, 0.0, 1.0])
    assert w_defl.force @ lift_axis > w_zero.force @ lift_axis


# -- aggregation --------------------------------------------------------------------

def test_aggregate_wrenches_sums_and_transports():
    w1 = Wrench(force=np.array([1.0, 0.0, 0.0]), torque=np.array([0.0, 0.1, 0.0]))
    w2 = Wrench(force=np.array([0.0, 2.0, 0.0]), torque=np.zeros(3),
                point=np.array([0.5, 0.0, 0.0]))
    out = aggregate_wrenches([w1, w2])
    assert np.allclose(out[:3], [1.0, 2.0, 0.0], atol=0)
    assert np.allclose(out[3:], np.array([0.0, 0.1, 0.0]) + np.cross([0.5, 0, 0], [0, 2.0, 0]),
                       atol=0)


def test_aggregate_empty_and_frame_check():
    assert np.allclose(aggregate_wrenches([]), np.zeros(6), atol=0)
    with pytest.raises(ActuatorError):
        aggregate_wrenches([Wrench(frame="ned")])


def test_aggregate_origin_torque_skips_cross_term():
    # cross([0,0,0], force) is 0*inf = nan for non-finite forces; an
    # origin-referred torque must never pick that up
    w = Wrench(force=np.array([np.inf, 2.0, 3.0]), torque=np.array([4.0, 5.0, 6.0]))
    out = aggregate_wrenches([w])
    assert np.array_equal(out[3:], w.torque)
    assert np.isinf(out[0])
