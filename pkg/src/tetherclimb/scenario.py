"""Scenario configuration: physical parameters, controller settings, initial layout.

Config files are JSON with the top-level keys ``world``, ``robot``,
``payload``, ``tether``, ``controller``, ``initial`` and ``seed``.  Every key
is optional; missing values take the dataclass defaults.  ``schema_version``
is written on export and checked on import.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .dynamics import PayloadSpec, RobotSpec, TetherSpec, WorldParams, at_rest_state

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


@dataclass(frozen=True)
class ControllerSpec:
    dt: float = 1.0e-3
    duration: float = 60.0
    hop_len: float = 0.55
    n_hops: int | None = None
    goal_dir: tuple = (0.0, 1.0)
    settle_time: float = 1.0
    tau_bounds: tuple = (0.2, 0.6)
    sample_every: int = 10
    replan_at_launch: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"controller.dt must be > 0, got {self.dt}")
        if not self.duration > 0:
            raise ConfigError(f"controller.duration must be > 0, got {self.duration}")
        if not self.hop_len > 0:
            raise ConfigError(f"controller.hop_len must be > 0, got {self.hop_len}")
        if self.n_hops is not None and int(self.n_hops) < 0:
            raise ConfigError("controller.n_hops must be >= 0")
        if self.settle_time < 0:
            raise ConfigError("controller.settle_time must be >= 0")
        lo, hi = (float(x) for x in self.tau_bounds)
        if not 0 < lo <= hi:
            raise ConfigError(f"controller.tau_bounds must satisfy 0 < min <= max, got {self.tau_bounds}")
        gd = np.asarray(self.goal_dir, dtype=float)
        if gd.shape != (2,) or np.linalg.norm(gd) == 0:
            raise ConfigError("controller.goal_dir must be a non-zero 2-vector")
        if int(self.sample_every) < 1:
            raise ConfigError("controller.sample_every must be >= 1")
        object.__setattr__(self, "goal_dir", tuple(float(x) for x in gd / np.linalg.norm(gd)))
        object.__setattr__(self, "tau_bounds", (lo, hi))
        object.__setattr__(self, "sample_every", int(self.sample_every))
        if self.n_hops is not None:
            object.__setattr__(self, "n_hops", int(self.n_hops))


@dataclass(frozen=True)
class ScenarioSpec:
    world: WorldParams = field(default_factory=WorldParams)
    robot: RobotSpec = field(default_factory=RobotSpec)
    payload: PayloadSpec = field(default_factory=lambda: PayloadSpec.from_angles([60, 90, 120]))
    tether: TetherSpec = field(default_factory=TetherSpec)
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    payload_start: tuple = (3.0, 2.0, 0.0)
    robot_starts: tuple | None = None
    robot_standoff: float | None = None
    seed: int = 0

    def __post_init__(self):
        n = len(self.payload.attachments)
        if n < 1:
            raise ConfigError("payload needs at least one tether attachment")
        if len(self.payload_start) != 3:
            raise ConfigError("payload_start must be a 3-vector")
        object.__setattr__(self, "payload_start", tuple(float(x) for x in self.payload_start))
        if self.robot_starts is not None:
            starts = tuple(tuple(float(c) for c in p) for p in self.robot_starts)
            if len(starts) != n or any(len(p) not in (2, 3) for p in starts):
                raise ConfigError(f"robot_starts must list {n} positions of 2 or 3 components")
            object.__setattr__(self, "robot_starts", starts)
        if self.robot_standoff is not None and self.robot_standoff < 0:
            raise ConfigError("robot_standoff must be >= 0")

    @property
    def n_robots(self):
        return len(self.payload.attachments)

    def initial_positions(self):
        """Robot start positions; by default radially outward of each attachment node."""
        if self.robot_starts is not None:
            pts = np.zeros((self.n_robots, 3))
            for i, p in enumerate(self.robot_starts):
                pts[i, : len(p)] = p
            return pts
        standoff = self.tether.l_0 if self.robot_standoff is None else self.robot_standoff
        return radial_placement(self.payload, self.payload_start, standoff)

    def initial_state(self):
        return at_rest_state(self, self.payload_start, self.initial_positions())

    def with_attachments(self, points):
        return replace(self, payload=replace(self.payload, attachments=tuple(map(tuple, points))),
                       robot_starts=None)

    def to_dict(self):
        out = {"schema_version": SCHEMA_VERSION}
        for name in ("world", "robot", "payload", "tether", "controller"):
            out[name] = _plain(asdict(getattr(self, name)))
        out["initial"] = {
            "payload_start": list(self.payload_start),
            "robot_starts": None if self.robot_starts is None else [list(p) for p in self.robot_starts],
            "robot_standoff": self.robot_standoff,
        }
        out["seed"] = int(self.seed)
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("scenario config must be a JSON object")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        known = {"schema_version", "world", "robot", "payload", "tether", "controller", "initial", "seed"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        try:
            for name, klass in (("world", WorldParams), ("robot", RobotSpec), ("tether", TetherSpec),
                                ("controller", ControllerSpec)):
                if name in data:
                    kwargs[name] = _build(klass, data[name], name)
            if "payload" in data:
                pdata = dict(data["payload"])
                angles = pdata.pop("attachment_angles_deg", None)
                if angles is not None:
                    kwargs["payload"] = PayloadSpec.from_angles(angles, **_checked(PayloadSpec, pdata, "payload"))
                else:
                    kwargs["payload"] = _build(PayloadSpec, pdata, "payload")
            initial = data.get("initial", {})
            for key in ("payload_start", "robot_starts", "robot_standoff"):
                if key in initial:
                    kwargs[key] = initial[key]
            if "seed" in data:
                kwargs["seed"] = int(data["seed"])
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(data)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")


def radial_placement(payload, payload_pos, standoff):
    """Put each robot ``standoff`` metres radially outward of its attachment node."""
    p = payload.attachment_array
    R = np.asarray(payload_pos, dtype=float).reshape(3)
    norms = np.linalg.norm(p, axis=1, keepdims=True)
    out = np.zeros((p.shape[0], 3))
    out[:, :2] = R[:2] + p * (1.0 + standoff / norms)
    return out


def climb_up_scenario(**controller_overrides):
    """Three robots hauling a 10 kg disk up a 15 degree slope from (3, 2, 0)."""
    return ScenarioSpec(
        payload=PayloadSpec.from_angles([60, 90, 120]),
        controller=ControllerSpec(goal_dir=(0.0, 1.0), **controller_overrides),
        payload_start=(3.0, 2.0, 0.0),
        robot_standoff=1.4,
    )


def climb_down_scenario(**controller_overrides):
    """Mirror of :func:`climb_up_scenario`: lower the disk from (3, 8, 0)."""
    return ScenarioSpec(
        payload=PayloadSpec.from_angles([60, 90, 120]),
        controller=ControllerSpec(goal_dir=(0.0, -1.0), **controller_overrides),
        payload_start=(3.0, 8.0, 0.0),
        robot_standoff=1.4,
    )


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _checked(klass, data, section):
    if not isinstance(data, dict):
        raise ConfigError(f"{section} must be an object")
    names = {f.name for f in fields(klass)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")
    return {k: (tuple(map(tuple, v)) if k == "attachments" else tuple(v) if isinstance(v, list) else v)
            for k, v in data.items()}


def _build(klass, data, section):
    return klass(**_checked(klass, data, section))
