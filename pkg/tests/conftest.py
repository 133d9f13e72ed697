import math

import numpy as np
import pytest

from tetherclimb import dynamics as dyn
from tetherclimb.dynamics import PayloadSpec, RobotSpec, TetherSpec, WorldParams
from tetherclimb.scenario import ScenarioSpec


def make_specs(theta=0.0, n=1, angles=None, world=None, robot=None, tether=None, **payload_kw):
    angles = list(angles) if angles is not None else [360.0 * i / n for i in range(n)]
    return ScenarioSpec(
        world=world or WorldParams(slope_theta=theta),
        robot=robot or RobotSpec(),
        payload=PayloadSpec.from_angles(angles, **payload_kw),
        tether=tether or TetherSpec(),
    )


def pendulum_setup(theta=math.radians(15)):
    specs = make_specs(theta=theta, n=3, angles=[60, 90, 120], robot=RobotSpec(f_load=1e12))
    robots = np.array([[3.0 + 2.2 * math.cos(a), 6.0 + 2.2 * math.sin(a), 0.0]
                       for a in np.radians([60, 90, 120])])
    state = dyn.at_rest_state(specs, [3.6, 3.4, 0.0], robots)
    return specs, state


def energy_windows(specs, state, steps=5000, window=1000, dt=1e-3):
    datum = state.copy()
    e0 = dyn.mechanical_energy(state, specs, datum)
    energies = [e0]
    grips = np.ones(state.n, dtype=bool)
    zeros = np.zeros((state.n, 3))
    for k in range(1, steps + 1):
        state = dyn.step(state, zeros, grips, specs, dt)
        if k % window == 0:
            energies.append(dyn.mechanical_energy(state, specs, datum))
    return e0, np.array(energies)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def deg():
    return math.radians


def pytest_terminal_summary(terminalreporter):
    lines = [value for key in ("passed", "failed") for rep in terminalreporter.stats.get(key, [])
             for name, value in getattr(rep, "user_properties", []) if name == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
