import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import energy_windows, make_specs, pendulum_setup
from tetherclimb import dynamics as dyn
from tetherclimb.dynamics import (PayloadSpec, RobotSpec, SystemState, TetherSpec, WorldParams,
                                  contact_force, friction_force, gravity_accel,
                                  oscillation_angle, step, tether_force, tether_forces)
from tetherclimb.grip import grip_force


# -- hand oracles, written independently of the vectorized code -----------------

def oracle_tether(r, v, R, V, phi, phi_dot, p, k_t, c_t, l_0):
    c, s = math.cos(phi), math.sin(phi)
    q = (c * p[0] - s * p[1], s * p[0] + c * p[1], 0.0)
    l = [R[k] + q[k] - r[k] for k in range(3)]
    L = math.sqrt(sum(x * x for x in l))
    if L <= l_0:
        return [0.0, 0.0, 0.0]
    qd = (-phi_dot * q[1], phi_dot * q[0], 0.0)
    rate = sum(l[k] * (V[k] + qd[k] - v[k]) for k in range(3)) / L
    mag = max(0.0, k_t * (L - l_0) + c_t * rate)
    return [mag * x / L for x in l]


# -- gravity ----------------------------------------------------------------------

@pytest.mark.parametrize("theta,expected", [
    (0.0, [0.0, 0.0, -9.81]),
    (math.pi / 2, [0.0, -9.81, 0.0]),
    (math.radians(15), [0.0, -2.5391, -9.4757]),
])
def test_gravity_examples(theta, expected):
    g = gravity_accel(SimpleNamespace(g=9.81, slope_theta=theta))
    # expected values are printed to 4 decimals; 9.81 sin 15deg = 2.539015...
    np.testing.assert_allclose(g, expected, atol=1e-4)
    np.testing.assert_allclose(g, [0.0, -9.81 * math.sin(theta), -9.81 * math.cos(theta)], rtol=1e-15)


# -- tether -----------------------------------------------------------------------

def test_tether_slack_is_zero():
    f = tether_force([0, 0, 0], [0.9, 0, 0], 0.0, [0, 0], TetherSpec(100, 10, 1.0))
    assert np.array_equal(f, np.zeros(3))


def test_tether_spring_only_10N():
    f = tether_force([0, 0, 0], [1.1, 0, 0], 0.0, [0, 0], TetherSpec(100, 0, 1.0))
    np.testing.assert_allclose(f, [10.0, 0, 0], rtol=1e-12)


def test_tether_with_damping_12N():
    f = tether_force([0, 0, 0], [1.1, 0, 0], 0.0, [0, 0], TetherSpec(100, 10, 1.0),
                     payload_vel=[0.2, 0, 0])
    np.testing.assert_allclose(f, [12.0, 0, 0], rtol=1e-12)


def test_tether_never_pushes():
    # stretched but closing fast: the damping term would push
    f = tether_force([0, 0, 0], [1.1, 0, 0], 0.0, [0, 0], TetherSpec(100, 10, 1.0),
                     payload_vel=[-5.0, 0, 0])
    assert np.array_equal(f, np.zeros(3))


def test_tether_degenerate_zero_length():
    f = tether_force([1, 2, 0], [1, 2, 0], 0.0, [0, 0], TetherSpec())
    assert np.array_equal(f, np.zeros(3))


def test_tether_matches_oracle_randomized(rng):
    for _ in range(200):
        r, v, R, V = (rng.normal(size=3) * 2 for _ in range(4))
        phi, phi_dot = rng.uniform(-math.pi, math.pi), rng.normal()
        p = rng.normal(size=2)
        spec = TetherSpec(rng.uniform(0, 200), rng.uniform(0, 20), rng.uniform(0.1, 3))
        got = tether_force(r, R, phi, p, spec, robot_vel=v, payload_vel=V, payload_yaw_rate=phi_dot)
        want = oracle_tether(r, v, R, V, phi, phi_dot, p, spec.k_t, spec.c_t, spec.l_0)
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=12, max_size=12), st.floats(-3.2, 3.2))
def test_tether_parallel_and_pulling(xs, phi):
    r, R, v, V = (np.array(xs[i:i + 3]) for i in range(0, 12, 3))
    spec = TetherSpec(50.0, 5.0, 1.0)
    forces, q = tether_forces(r[None], v[None], R, V, phi, 0.3, [(0.6, 0.8)], spec)
    f = forces[0]
    l = R + q[0] - r
    L = np.linalg.norm(l)
    if L <= spec.l_0:
        assert np.all(f == 0)
    else:
        assert f @ l >= 0
        assert np.linalg.norm(np.cross(f, l)) <= 1e-9 * max(1.0, np.linalg.norm(f) * L)


# -- contact and friction -----------------------------------------------------------

def test_contact_examples():
    w = WorldParams(k_c=1000.0, c_c=0.0)
    assert contact_force(0.0, 0.0, w) == 0.0
    assert contact_force(0.01, 0.0, w) == pytest.approx(1.0, rel=1e-12)
    assert contact_force(0.01, -0.1, WorldParams(k_c=1000.0, c_c=50.0)) == 0.0


def test_contact_rejects_negative_depth():
    with pytest.raises(ValueError):
        contact_force(-1e-6, 0.0, WorldParams())


def test_contact_randomized_and_monotone(rng):
    for _ in range(100):
        w = WorldParams(k_c=rng.uniform(1, 1e5), c_c=rng.uniform(0, 500), contact_exp_n=rng.uniform(1, 2))
        d, rate = rng.uniform(1e-6, 0.05), rng.uniform(0, 1)
        want = max(0.0, w.k_c * d ** w.contact_exp_n + w.c_c * rate)
        assert contact_force(d, rate, w) == pytest.approx(want, rel=1e-9)
        assert contact_force(d * 1.01, rate, w) > contact_force(d, rate, w)


def test_friction_examples():
    w = WorldParams(mu_v=2.0)
    np.testing.assert_array_equal(friction_force([0, 0, 0], w), np.zeros(3))
    np.testing.assert_allclose(friction_force([1, 0, 0], w), [-2, 0, 0])
    v = np.array([0.3, -1.2, 0.5])
    np.testing.assert_allclose(friction_force(2 * v, w), 2 * friction_force(v, w))


# -- integration ----------------------------------------------------------------------

def free_robot_state(z=10.0, v0=(1.0, 0.5, 2.0)):
    # one robot far above the plane, tether far too long to engage
    return SystemState(0.0, [[0.0, 0.0, z]], [v0], [0.0, 0.0, 50.0], None, gripped=[False])


def test_free_fall_matches_ballistic():
    specs = make_specs(theta=0.0, tether=TetherSpec(20, 5, 1000.0))
    state = free_robot_state()
    dt, n = 1e-3, 200
    for _ in range(n):
        state = step(state, np.zeros((1, 3)), [False], specs, dt)
    t = n * dt
    g = gravity_accel(specs.world)
    closed = np.array([0.0, 0.0, 10.0]) + np.array([1.0, 0.5, 2.0]) * t + 0.5 * g * t * t
    assert np.max(np.abs(state.r[0] - closed)) < 1e-3
    # semi-implicit Euler carries a known first-order bias of a*t*dt/2
    np.testing.assert_allclose(state.r[0], closed + 0.5 * g * t * dt, atol=1e-9)


def test_static_equilibrium_unchanged():
    specs = make_specs(theta=0.0, n=3, robot=RobotSpec(f_load=1e6))
    # slack tethers: robots just outside the disk, closer than rest length
    state = dyn.at_rest_state(specs, [0, 0, 0], [[1.5, 0, 0], [-0.75, 1.3, 0], [-0.75, -1.3, 0]])
    new = state
    for _ in range(100):
        new = step(new, np.zeros((3, 3)), [True] * 3, specs, 1e-3)
    np.testing.assert_allclose(new.r, state.r, atol=1e-12)
    np.testing.assert_allclose(new.R, state.R, atol=1e-9)
    assert new.t == pytest.approx(0.1)
    assert new.gripped.all()


def test_newton_third_law_on_payload_and_robot():
    specs = make_specs(theta=0.0, n=2, world=WorldParams(slope_theta=0.0, mu_v=0.0))
    r = np.array([[2.5, 0.3, 6.0], [-2.2, -0.4, 5.5]])
    state = SystemState(0.0, r, None, [0.0, 0.0, 5.0], None, gripped=[False, False])
    dt = 1e-3
    new = step(state, np.zeros((2, 3)), [False, False], specs, dt)
    ft, _ = tether_forces(state.r, state.v, state.R, state.V, 0.0, 0.0, specs.payload.attachments, specs.tether)
    g = gravity_accel(specs.world)
    np.testing.assert_allclose(specs.payload.M * (new.V / dt - g), -ft.sum(axis=0), rtol=1e-9)
    np.testing.assert_allclose(specs.robot.m_r * (new.v / dt - g), ft, rtol=1e-9)
    assert np.linalg.norm(ft) > 1.0


def test_yaw_torque_is_restoring():
    specs = make_specs(theta=0.0, n=3, k_r=0.0, c_r=0.0, robot=RobotSpec(f_load=1e6))
    pos = np.array([[2.2 * math.cos(a), 2.2 * math.sin(a), 0.15] for a in np.radians([0, 120, 240])])
    state = SystemState(0.0, pos, None, [0, 0, 5.0], None, phi=0.1)
    new = step(state, np.zeros((3, 3)), [True] * 3, specs, 1e-3)
    assert new.phi_dot < 0
    state.phi = -0.1
    assert step(state, np.zeros((3, 3)), [True] * 3, specs, 1e-3).phi_dot > 0


def test_thrust_limit_error():
    specs = make_specs(tether=TetherSpec(l_0=1000.0))
    with pytest.raises(dyn.ThrustLimitError):
        step(free_robot_state(), [[0, 0, 31.0]], [False], specs, 1e-3)


def test_fuel_budget_cuts_thrust():
    specs = make_specs(robot=RobotSpec(fuel_budget=0.05), tether=TetherSpec(l_0=1000.0))
    state = free_robot_state()
    used, cuts = [], []
    for _ in range(8):
        state = step(state, [[10.0, 0, 0]], [False], specs, 1e-3)
        used.append(state.fuel_used[0])
        cuts.append(bool(state.thrust_cut[0]))
    assert np.all(np.diff(used) >= 0)
    assert max(used) <= 0.05 + 1e-12
    assert cuts == [False] * 5 + [True] * 3


def test_overloaded_grip_slips_with_sigmoid_reaction():
    robot = RobotSpec(f_load=50.0)
    specs = make_specs(theta=0.0, robot=robot, tether=TetherSpec(k_t=100.0, c_t=0.0, l_0=1.0))
    # tether stretched by 1 m: 100 N pull on a grip rated for 50 N
    state = SystemState(0.0, [[3.0, 0, 5.0]], None, [0, 0, 5.0], None, gripped=[True])
    new = step(state, np.zeros((1, 3)), [True], specs, 1e-3)
    assert not new.gripped[0] and new.slipped[0]
    load = np.array([-100.0, 0.0, -9.81])
    demand = np.linalg.norm(load)
    reaction = grip_force(demand, robot.f_load, robot.sigmoid_k)
    expected_v = (load - reaction * load / demand) * 1e-3 / robot.m_r
    np.testing.assert_allclose(new.v[0], expected_v, rtol=1e-9)


def test_grip_holds_under_capacity():
    specs = make_specs(theta=0.0, tether=TetherSpec(k_t=10.0, c_t=0.0, l_0=1.0))
    state = SystemState(0.0, [[3.0, 0, 5.0]], [[0.3, 0, 0]], [0, 0, 5.0], None, gripped=[False])
    new = step(state, np.zeros((1, 3)), [True], specs, 1e-3)
    assert new.gripped[0] and not new.slipped[0]
    np.testing.assert_array_equal(new.v[0], 0.0)
    np.testing.assert_array_equal(new.r[0], state.r[0])


def test_oscillation_angle_examples():
    def at(cm, cg):
        return SystemState(0.0, [[cm[0], cm[1], 0.0]], None, [cg[0], cg[1], 0.0], None)
    assert oscillation_angle(at((0, 1), (0, 0))) == 0.0
    assert oscillation_angle(at((0, 0), (1, -1))) == pytest.approx(math.pi / 4)
    assert oscillation_angle(at((0, 0), (-0.7, -0.2))) == oscillation_angle(at((0, 0), (0.7, -0.2)))
    assert oscillation_angle(at((2, 2), (2, 2))) == 0.0


def test_energy_non_increasing_pinned_pendulum():
    specs, state = pendulum_setup()
    e0, e = energy_windows(specs, state)
    scale = abs(e0 - e.min())
    assert scale > 1.0
    assert np.all(np.diff(e) <= 0.01 * scale)
    assert e[-1] < e[0]


def test_first_order_convergence():
    specs, state = pendulum_setup()
    finals = []
    for dt in (2e-3, 1e-3, 5e-4):
        s = state.copy()
        grips = np.ones(3, dtype=bool)
        for _ in range(int(round(10.0 / dt))):
            s = step(s, np.zeros((3, 3)), grips, specs, dt)
        finals.append(np.concatenate([s.R, s.V, [s.phi, s.phi_dot]]))
    ratio = np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2])
    assert 1.5 <= ratio <= 2.5


def test_state_validation():
    with pytest.raises(ValueError):
        SystemState(0.0, [[0, 0, 0], [1, 1, 1]], None, [0, 0, 0], None, gripped=[True])
    with pytest.raises(ValueError):
        PayloadSpec(attachments=((0.5, 0.0),))
    with pytest.raises(ValueError):
        step(free_robot_state(), np.zeros((1, 3)), [False], make_specs(), 0.0)
