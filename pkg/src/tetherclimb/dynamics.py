"""Force laws and fixed-step integration for a payload hauled by tethered robots.

Everything lives in the incline frame: ``x`` across the slope, ``y`` upslope
and ``z`` along the plane normal.  Robots are point masses, the payload is a
disk that only yaws about ``z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from ._validation import check_positive, check_vector

__all__ = [
    "WorldParams",
    "RobotSpec",
    "PayloadSpec",
    "TetherSpec",
    "SystemState",
    "ThrustLimitError",
    "gravity_accel",
    "yaw_rotation",
    "tether_force",
    "tether_forces",
    "contact_force",
    "friction_force",
    "step",
    "oscillation_angle",
    "mechanical_energy",
]

class ThrustLimitError(ValueError):
    """A commanded thrust exceeds the robot's maximum thrust magnitude."""


@dataclass(frozen=True)
class WorldParams:
    g: float = 9.81
    slope_theta: float = math.radians(15.0)
    mu_v: float = 20.0
    k_c: float = 1.0e5
    c_c: float = 200.0
    contact_exp_n: float = 1.5

    def __post_init__(self):
        check_positive(self.g, "g")
        if not 0.0 <= self.slope_theta < math.pi / 2:
            raise ValueError(f"slope_theta must lie in [0, pi/2), got {self.slope_theta}")
        check_positive(self.k_c, "k_c", allow_zero=True)
        check_positive(self.c_c, "c_c", allow_zero=True)
        check_positive(self.mu_v, "mu_v", allow_zero=True)
        check_positive(self.contact_exp_n, "contact_exp_n")


@dataclass(frozen=True)
class RobotSpec:
    m_r: float = 1.0
    radius_rho: float = 0.15
    f_load: float = 200.0
    sigmoid_k: float = 15.0
    t_max: float = 30.0
    fuel_budget: float = 400.0

    def __post_init__(self):
        check_positive(self.m_r, "m_r")
        check_positive(self.radius_rho, "radius_rho")
        check_positive(self.f_load, "f_load", allow_zero=True)
        check_positive(self.sigmoid_k, "sigmoid_k")
        check_positive(self.t_max, "t_max")
        check_positive(self.fuel_budget, "fuel_budget", allow_zero=True)


@dataclass(frozen=True)
class PayloadSpec:
    M: float = 10.0
    I_z: float = 5.0
    disk_radius: float = 1.0
    k_r: float = 0.5
    c_r: float = 0.5
    attachments: tuple = ()

    def __post_init__(self):
        check_positive(self.M, "M")
        check_positive(self.I_z, "I_z")
        check_positive(self.disk_radius, "disk_radius")
        check_positive(self.k_r, "k_r", allow_zero=True)
        check_positive(self.c_r, "c_r", allow_zero=True)
        pts = tuple(tuple(float(c) for c in p) for p in self.attachments)
        for p in pts:
            if len(p) != 2:
                raise ValueError(f"attachment points are 2D, got {p}")
            if abs(math.hypot(*p) - self.disk_radius) > 1e-6 * max(1.0, self.disk_radius):
                raise ValueError(f"attachment {p} is not on the disk perimeter")
        object.__setattr__(self, "attachments", pts)

    @classmethod
    def from_angles(cls, angles_deg, **kwargs):
        """Build a payload whose tethers attach at the given perimeter angles."""
        radius = kwargs.get("disk_radius", cls.disk_radius)
        pts = tuple(
            (radius * math.cos(math.radians(a)), radius * math.sin(math.radians(a)))
            for a in angles_deg
        )
        return cls(attachments=pts, **kwargs)

    @property
    def attachment_array(self):
        return np.array(self.attachments, dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class TetherSpec:
    k_t: float = 20.0
    c_t: float = 5.0
    l_0: float = 1.0

    def __post_init__(self):
        check_positive(self.k_t, "k_t", allow_zero=True)
        check_positive(self.c_t, "c_t", allow_zero=True)
        check_positive(self.l_0, "l_0")


@dataclass
class SystemState:
    """Snapshot of N robots and the payload.

    ``slipped`` and ``thrust_cut`` describe what happened during the step that
    produced this state: a grip lost to overload, or thrust zeroed because
    the fuel budget ran out.
    """

    t: float
    r: np.ndarray
    v: np.ndarray
    R: np.ndarray
    V: np.ndarray
    phi: float = 0.0
    phi_dot: float = 0.0
    gripped: np.ndarray = None
    fuel_used: np.ndarray = None
    slipped: np.ndarray = None
    thrust_cut: np.ndarray = None

    def __post_init__(self):
        self.r = np.array(self.r, dtype=float).reshape(-1, 3)
        n = self.r.shape[0]
        self.v = np.zeros((n, 3)) if self.v is None else np.array(self.v, dtype=float).reshape(n, 3)
        self.R = check_vector(self.R, "R")
        self.V = np.zeros(3) if self.V is None else check_vector(self.V, "V")
        for name, default, dtype in (
            ("gripped", True, bool),
            ("fuel_used", 0.0, float),
            ("slipped", False, bool),
            ("thrust_cut", False, bool),
        ):
            value = getattr(self, name)
            arr = np.full(n, default, dtype=dtype) if value is None else np.array(value, dtype=dtype)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have length {n}, got {arr.shape}")
            setattr(self, name, arr)
        self.t = float(self.t)
        self.phi = float(self.phi)
        self.phi_dot = float(self.phi_dot)

    @classmethod
    def _raw(cls, t, r, v, R, V, phi, phi_dot, gripped, fuel_used, slipped, thrust_cut):
        # trusted constructor for the integrator; skips validation
        obj = cls.__new__(cls)
        obj.t, obj.r, obj.v, obj.R, obj.V = t, r, v, R, V
        obj.phi, obj.phi_dot = phi, phi_dot
        obj.gripped, obj.fuel_used, obj.slipped, obj.thrust_cut = gripped, fuel_used, slipped, thrust_cut
        return obj

    @property
    def n(self):
        return self.r.shape[0]

    def copy(self):
        return SystemState(
            self.t, self.r.copy(), self.v.copy(), self.R.copy(), self.V.copy(),
            self.phi, self.phi_dot, self.gripped.copy(), self.fuel_used.copy(),
            self.slipped.copy(), self.thrust_cut.copy(),
        )


def gravity_accel(world):
    th = world.slope_theta
    return np.array([0.0, -world.g * math.sin(th), -world.g * math.cos(th)])


def yaw_rotation(phi):
    """Body-to-incline rotation for a yaw of ``phi`` about the plane normal."""
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def tether_forces(r, v, R, V, phi, phi_dot, attachments, tether):
    """Vectorized tether tension on each robot.

    Returns ``(forces, lever_arms)`` where ``forces[i]`` acts on robot ``i``
    (the payload receives ``-forces[i]`` at ``R + lever_arms[i]``).
    """
    r = np.asarray(r, dtype=float).reshape(-1, 3)
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    p = np.asarray(attachments, dtype=float).reshape(-1, 2)
    c, s = math.cos(phi), math.sin(phi)
    q = np.zeros((p.shape[0], 3))
    q[:, 0] = c * p[:, 0] - s * p[:, 1]
    q[:, 1] = s * p[:, 0] + c * p[:, 1]
    l = R + q - r
    q_dot = np.zeros_like(q)
    q_dot[:, 0] = -phi_dot * q[:, 1]
    q_dot[:, 1] = phi_dot * q[:, 0]
    l_dot = V + q_dot - v
    length = np.sqrt(np.einsum("ij,ij->i", l, l))
    taut = length > tether.l_0
    forces = np.zeros_like(l)
    if np.any(taut):
        lt = length[taut]
        rate = np.einsum("ij,ij->i", l[taut], l_dot[taut]) / lt
        mag = tether.k_t * (lt - tether.l_0) + tether.c_t * rate
        np.maximum(mag, 0.0, out=mag)
        forces[taut] = (mag / lt)[:, None] * l[taut]
    return forces, q


def tether_force(robot_pos, payload_pos, payload_yaw, attach_pt, spec,
                 robot_vel=(0.0, 0.0, 0.0), payload_vel=(0.0, 0.0, 0.0), payload_yaw_rate=0.0):
    """Kelvin-Voigt tension pulling one robot toward its payload attachment.

    Zero while the tether is at or below rest length, and never compressive.
    """
    forces, _ = tether_forces(
        check_vector(robot_pos, "robot_pos"), check_vector(robot_vel, "robot_vel"),
        check_vector(payload_pos, "payload_pos"), check_vector(payload_vel, "payload_vel"),
        float(payload_yaw), float(payload_yaw_rate), check_vector(attach_pt, "attach_pt", 2), spec,
    )
    return forces[0]


def contact_force(penetration_delta, delta_rate, world):
    """Hertz normal force for a penetration depth, clamped to be non-adhesive."""
    if penetration_delta < 0:
        raise ValueError(f"penetration depth must be >= 0, got {penetration_delta}")
    if penetration_delta == 0:
        return 0.0
    f = world.k_c * penetration_delta ** world.contact_exp_n + world.c_c * delta_rate
    return max(f, 0.0)


def friction_force(payload_vel, world):
    return -world.mu_v * np.asarray(payload_vel, dtype=float)


@lru_cache(maxsize=64)
def _packed(world, robot, payload, tether):
    prm = np.zeros(_kernels.N_PARAMS)
    prm[_kernels.FGX:_kernels.FGZ + 1] = gravity_accel(world)
    prm[_kernels.MU_V] = world.mu_v
    prm[_kernels.K_C] = world.k_c
    prm[_kernels.C_C] = world.c_c
    prm[_kernels.N_EXP] = world.contact_exp_n
    prm[_kernels.M_R] = robot.m_r
    prm[_kernels.RHO] = robot.radius_rho
    prm[_kernels.F_LOAD] = robot.f_load
    prm[_kernels.SIG_K] = robot.sigmoid_k
    prm[_kernels.T_MAX] = robot.t_max
    prm[_kernels.BUDGET] = robot.fuel_budget
    prm[_kernels.MASS] = payload.M
    prm[_kernels.I_Z] = payload.I_z
    prm[_kernels.K_R] = payload.k_r
    prm[_kernels.C_R] = payload.c_r
    prm[_kernels.K_T] = tether.k_t
    prm[_kernels.C_T] = tether.c_t
    prm[_kernels.L_0] = tether.l_0
    attach = payload.attachment_array.copy()
    prm.flags.writeable = False
    attach.flags.writeable = False
    return prm, attach


def step(state, thrusts, grips, specs, dt):
    """Advance robots and payload by one semi-implicit Euler step.

    ``specs`` is anything carrying ``world``, ``robot``, ``payload`` and
    ``tether`` attributes (a ``ScenarioSpec`` does).  ``grips`` are the
    requested grip flags.  A requested grip holds the robot in place while
    the demanded load (tether + gravity + contact + thrust) stays within
    ``f_load``; beyond that the grip reaction saturates along the sigmoid
    grip law and the robot slips.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    prm, attach = _packed(specs.world, specs.robot, specs.payload, specs.tether)
    n = state.n
    if attach.shape[0] != n:
        raise ValueError(f"state has {n} robots but payload has {attach.shape[0]} attachments")
    thrust = np.ascontiguousarray(thrusts, dtype=float).reshape(n, 3)
    want = np.ascontiguousarray(grips, dtype=bool).reshape(n)
    (r, v, R, V, phi, phi_dot, held, over, cut, fuel, _applied, bad) = _kernels.step_kernel(
        state.r, state.v, state.R, state.V, state.phi, state.phi_dot, want, thrust,
        state.fuel_used, attach, prm, float(dt))
    if bad >= 0:
        mag = float(np.linalg.norm(thrust[bad]))
        raise ThrustLimitError(f"robot {bad} thrust {mag:.6g} N exceeds t_max {specs.robot.t_max} N")
    return SystemState._raw(state.t + dt, r, v, R, V, phi, phi_dot, held, fuel,
                            over & state.gripped, cut)


def oscillation_angle(state):
    """Unsigned in-plane angle between -y and the robot-CM to payload-CG vector."""
    if state.n < 1:
        raise ValueError("need at least one robot")
    cm = state.r[:, :2].mean(axis=0)
    dx, dy = state.R[0] - cm[0], state.R[1] - cm[1]
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return math.atan2(abs(dx), -dy)


def mechanical_energy(state, specs, datum=None):
    """Kinetic + gravitational + tether/yaw-spring + contact energy.

    ``datum`` is a state whose positions define zero gravitational energy;
    by default the incline origin is used.
    """
    world, robot, payload, tether = specs.world, specs.robot, specs.payload, specs.tether
    fg = gravity_accel(world)
    r0 = np.zeros_like(state.r) if datum is None else datum.r
    R0 = np.zeros(3) if datum is None else datum.R
    kinetic = (0.5 * robot.m_r * np.sum(state.v ** 2) + 0.5 * payload.M * state.V @ state.V
               + 0.5 * payload.I_z * state.phi_dot ** 2)
    potential = -robot.m_r * np.sum((state.r - r0) @ fg) - payload.M * ((state.R - R0) @ fg)
    _, q = tether_forces(state.r, state.v, state.R, state.V, state.phi, 0.0,
                         payload.attachments, tether)
    length = np.linalg.norm(state.R + q - state.r, axis=1)
    stretch = np.maximum(length - tether.l_0, 0.0)
    elastic = 0.5 * tether.k_t * np.sum(stretch ** 2) + 0.5 * payload.k_r * state.phi ** 2
    n_exp = world.contact_exp_n
    pen = np.concatenate([np.maximum(robot.radius_rho - state.r[:, 2], 0.0), [max(-state.R[2], 0.0)]])
    contact = world.k_c * np.sum(pen ** (n_exp + 1)) / (n_exp + 1)
    return float(kinetic + potential + elastic + contact)


def at_rest_state(specs, payload_pos, robot_pos, gripped=True):
    """State with everything at rest, bodies seated at their contact equilibrium depth."""
    world, robot, payload = specs.world, specs.robot, specs.payload
    g_n = world.g * math.cos(world.slope_theta)
    n = world.contact_exp_n
    sink_payload = (payload.M * g_n / world.k_c) ** (1.0 / n) if world.k_c > 0 else 0.0
    sink_robot = (robot.m_r * g_n / world.k_c) ** (1.0 / n) if world.k_c > 0 else 0.0
    R = np.array(payload_pos, dtype=float).reshape(3).copy()
    R[2] = -sink_payload
    r = np.array(robot_pos, dtype=float).reshape(-1, 3).copy()
    r[:, 2] = robot.radius_rho - sink_robot
    return SystemState(0.0, r, None, R, None, gripped=np.full(r.shape[0], gripped))


def with_time(state, t):
    out = state.copy()
    out.t = float(t)
    return out

