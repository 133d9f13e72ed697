import json

import pytest

from tetherclimb.scenario import ConfigError, ScenarioSpec, climb_down_scenario, climb_up_scenario


@pytest.mark.parametrize("factory", [climb_up_scenario, climb_down_scenario])
def test_round_trip(tmp_path, factory):
    sc = factory(duration=7.0)
    sc.save(tmp_path / "s.json")
    back = ScenarioSpec.load(tmp_path / "s.json")
    assert back.to_dict() == sc.to_dict()


def test_presets():
    up, down = climb_up_scenario(), climb_down_scenario()
    assert up.payload_start[1] == 2.0 and down.payload_start[1] == 8.0
    assert up.controller.goal_dir == (0.0, 1.0) and down.controller.goal_dir == (0.0, -1.0)
    assert up.world.slope_theta == pytest.approx(0.2617993877991494)
    assert (up.robot.m_r, up.payload.M, up.payload.I_z, up.payload.disk_radius) == (1.0, 10.0, 5.0, 1.0)
    assert up.n_robots == 3


def test_partial_config_takes_defaults():
    sc = ScenarioSpec.from_dict({"controller": {"duration": 5.0}})
    assert sc.controller.duration == 5.0 and sc.controller.dt == 1e-3


@pytest.mark.parametrize("data", [
    {"wrold": {}},
    {"controller": {"durration": 1.0}},
    {"controller": {"dt": -1.0}},
    {"schema_version": 99},
    {"tether": {"l_0": -1.0}},
    [],
])
def test_bad_configs(data):
    with pytest.raises(ConfigError):
        ScenarioSpec.from_dict(data)


def test_json_error_has_location(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"controller": {"dt": }}')
    with pytest.raises(ConfigError, match="line 1, column"):
        ScenarioSpec.load(p)


def test_initial_state_matches_layout():
    sc = climb_up_scenario()
    s = sc.initial_state()
    assert s.r.shape == (3, 3) and all(s.gripped)
    assert json.loads(sc.to_json())["initial"]["payload_start"][:2] == [3.0, 2.0]
