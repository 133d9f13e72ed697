"""Minimum-thrust hops and the one-robot-at-a-time climbing gait."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from ._validation import check_positive, check_vector
from .trajectory import TrajectoryRecorder

__all__ = [
    "HopProblem",
    "HopSolution",
    "HopInfeasible",
    "HopEntry",
    "ClimbSchedule",
    "constant_thrust",
    "solve_hop",
    "plan_climb_sequence",
    "run_episode",
    "settle",
]


class HopInfeasible(ValueError):
    """No flight time within bounds keeps the required thrust under the limit."""

    def __init__(self, required_thrust, t_max, robot=None, hop=None):
        self.required_thrust = float(required_thrust)
        self.t_max = float(t_max)
        self.robot = robot
        self.hop = hop
        where = "" if robot is None else f"robot {robot}, hop {hop}: "
        super().__init__(
            f"{where}hop needs at least {self.required_thrust:.6g} N but t_max is {self.t_max:.6g} N"
        )


@dataclass(frozen=True)
class HopProblem:
    r_0: np.ndarray
    r_tau: np.ndarray
    m_r: float
    f_g: np.ndarray
    t_max: float
    tau_bounds: tuple = (0.2, 0.6)

    def __post_init__(self):
        object.__setattr__(self, "r_0", check_vector(self.r_0, "r_0"))
        object.__setattr__(self, "r_tau", check_vector(self.r_tau, "r_tau"))
        object.__setattr__(self, "f_g", check_vector(self.f_g, "f_g"))
        check_positive(self.m_r, "m_r")
        check_positive(self.t_max, "t_max")
        lo, hi = (float(x) for x in self.tau_bounds)
        if not 0 < lo <= hi:
            raise ValueError(f"tau_bounds must satisfy 0 < min <= max, got {self.tau_bounds}")
        object.__setattr__(self, "tau_bounds", (lo, hi))


@dataclass(frozen=True)
class HopSolution:
    thrust_T: np.ndarray
    tau: float
    cost: float

    @property
    def thrust_norm(self):
        return math.sqrt(self.cost)

    def to_dict(self):
        return {"thrust_T": [float(x) for x in self.thrust_T], "tau": float(self.tau),
                "cost": float(self.cost), "thrust_norm": self.thrust_norm}


def constant_thrust(problem, tau):
    """Thrust that carries the robot from rest at r_0 to r_tau in ``tau`` seconds."""
    d = problem.r_tau - problem.r_0
    return problem.m_r * (2.0 * d / (tau * tau) - problem.f_g)


def solve_hop(problem):
    """Cheapest constant thrust over the admissible flight times.

    With ``s = 1 / tau**2`` the squared thrust is a convex quadratic in ``s``,
    so the bounded minimizer is the clipped vertex.  A zero displacement has
    a tau-independent cost; the shortest flight (least impulse) is returned.
    """
    lo, hi = problem.tau_bounds
    d = problem.r_tau - problem.r_0
    dd = float(d @ d)
    if dd == 0.0:
        tau = lo
    else:
        s_lo, s_hi = 1.0 / (hi * hi), 1.0 / (lo * lo)
        s = min(max(float(d @ problem.f_g) / (2.0 * dd), s_lo), s_hi)
        tau = 1.0 / math.sqrt(s)
        tau = min(max(tau, lo), hi)
    thrust = constant_thrust(problem, tau)
    cost = float(thrust @ thrust)
    if math.sqrt(cost) > problem.t_max:
        raise HopInfeasible(math.sqrt(cost), problem.t_max)
    return HopSolution(thrust, tau, cost)


@dataclass(frozen=True)
class HopEntry:
    robot: int
    start_time: float
    target: np.ndarray
    solution: HopSolution
    dwell: float

    @property
    def end_time(self):
        return self.start_time + self.solution.tau

    def to_dict(self):
        return {"robot": self.robot, "start_time": self.start_time,
                "target": [float(x) for x in self.target], "dwell": self.dwell,
                **self.solution.to_dict()}


@dataclass
class ClimbSchedule:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def robot_order(self):
        return [e.robot for e in self.entries]


def plan_climb_sequence(state, goal_dir, hop_len, n_hops, scenario):
    """Round-robin schedule: robot ``k % N`` hops ``hop_len`` along ``goal_dir``.

    Targets are planned in absolute coordinates from the current gripped
    positions; each hop is followed by the controller's settle window.
    """
    if not np.all(state.gripped):
        raise ValueError("all robots must be gripped before planning a climb")
    check_positive(hop_len, "hop_len")
    n_hops = int(n_hops)
    if n_hops < 0:
        raise ValueError("n_hops must be >= 0")
    g2 = check_vector(goal_dir, "goal_dir", 2)
    norm = np.linalg.norm(g2)
    if norm == 0:
        raise ValueError("goal_dir must be non-zero")
    step_vec = np.array([g2[0], g2[1], 0.0]) * (hop_len / norm)

    ctl = scenario.controller
    fg = dynamics.gravity_accel(scenario.world)
    positions = state.r.copy()
    t = state.t + ctl.settle_time
    entries = []
    for k in range(n_hops):
        i = k % state.n
        target = positions[i] + step_vec
        problem = HopProblem(positions[i], target, scenario.robot.m_r, fg,
                             scenario.robot.t_max, ctl.tau_bounds)
        try:
            sol = solve_hop(problem)
        except HopInfeasible as exc:
            raise HopInfeasible(exc.required_thrust, exc.t_max, robot=i, hop=k) from None
        entries.append(HopEntry(i, t, target, sol, ctl.settle_time))
        positions[i] = target
        t += sol.tau + ctl.settle_time
    return ClimbSchedule(entries)


def hops_that_fit(scenario):
    """Number of hops whose nominal timing fits in the controller's episode."""
    ctl = scenario.controller
    cycle = ctl.tau_bounds[1] + ctl.settle_time
    return max(0, int((ctl.duration - ctl.settle_time) // cycle))


def settle(state, scenario, duration):
    """Let the system relax with every robot gripped; returns the final state."""
    dt = scenario.controller.dt
    zeros = np.zeros((state.n, 3))
    grips = np.ones(state.n, dtype=bool)
    for _ in range(int(round(duration / dt))):
        state = dynamics.step(state, zeros, grips, scenario, dt)
    return state


def run_episode(scenario, schedule, state=None, duration=None, observer=None):
    """Execute a climb schedule through the simulator and record a Trajectory.

    Each hop releases the robot's grip, applies constant thrust for the
    flight time, then requests the grip again.  With
    ``controller.replan_at_launch`` the hop is re-solved at launch with the
    tether pull frozen at its launch value; otherwise the scheduled thrust is
    used as is.  A launch waits until every other robot is gripped.

    A hop the robot cannot pay for from its remaining fuel budget is skipped;
    once no robot can afford a hop the remaining schedule is dropped and the
    system just settles until the episode ends.

    ``observer(state)`` is called on every recorded sample.
    """
    ctl = scenario.controller
    dt = ctl.dt
    state = scenario.initial_state() if state is None else state.copy()
    n = state.n
    for e in schedule:
        if not 0 <= e.robot < n:
            raise ValueError(f"schedule references robot {e.robot} but scenario has {n}")
    duration = ctl.duration if duration is None else duration
    every = ctl.sample_every
    n_steps = -(-int(round(duration / dt)) // every) * every
    fg = dynamics.gravity_accel(scenario.world)
    l_0 = scenario.tether.l_0
    e0 = dynamics.mechanical_energy(state, scenario)

    rec = TrajectoryRecorder()
    zero_thrust = np.zeros((n, 3))
    rec.add(state, zero_thrust, dynamics.oscillation_angle(state))
    if observer is not None:
        observer(state)

    pending = list(schedule)
    active = None
    slip_events, hops, skipped = [], [], []
    aborted, reason = False, ""
    for k in range(1, n_steps + 1):
        thrusts = zero_thrust
        grips = np.ones(n, dtype=bool)
        if active is None and pending and state.t >= pending[0].start_time - 0.5 * dt:
            entry = pending[0]
            others = np.delete(state.gripped, entry.robot)
            if np.all(others):
                pending.pop(0)
                launch = _launch(state, entry, scenario, fg, dt)
                remaining = scenario.robot.fuel_budget - state.fuel_used
                if launch["log"]["impulse"] <= remaining[entry.robot] + 1e-9:
                    active = launch
                    hops.append(active["log"])
                else:
                    skipped.append({"robot": int(entry.robot), "t": float(state.t), "reason": "fuel"})
                    if np.all(remaining < launch["log"]["impulse"]):
                        reason = "fuel budget exhausted"
                        pending.clear()
        if active is not None:
            i = active["robot"]
            thrusts = zero_thrust.copy()
            thrusts[i] = active["thrust"]
            grips[i] = False
        state = dynamics.step(state, thrusts, grips, scenario, dt)
        if active is not None:
            active["left"] -= 1
            if active["log"]["tether_slack"] and _tether_length(state, scenario, active["robot"]) > l_0:
                active["log"]["tether_slack"] = False
            if active["left"] == 0:
                i = active["robot"]
                log = active["log"]
                log["landed"] = [float(x) for x in state.r[i]]
                miss = state.r[i] - active["target"]
                log["landing_error"] = float(np.linalg.norm(miss))
                # the normal offset mostly comes from the contact spring unloading at launch
                log["landing_error_plane"] = float(np.hypot(miss[0], miss[1]))
                active = None
        if state.slipped.any():
            for i in np.flatnonzero(state.slipped):
                slip_events.append({"t": state.t, "robot": int(i)})
            if not state.gripped.any():
                aborted, reason = True, "all robots lost grip"
        if k % every == 0 or aborted:
            applied = thrusts.copy() if thrusts is not zero_thrust else zero_thrust
            if np.any(state.thrust_cut):
                applied = applied.copy()
                applied[state.thrust_cut] = 0.0
            rec.add(state, applied, dynamics.oscillation_angle(state))
            if observer is not None:
                observer(state)
        if aborted:
            break

    e1 = dynamics.mechanical_energy(state, scenario)
    fuel = [float(x) for x in state.fuel_used]
    energy = {"initial": e0, "final": e1, "fuel_impulse": fuel,
              "hop_impulse": [sum(h["impulse"] for h in hops if h["robot"] == i) for i in range(n)]}
    return rec.build(slip_events=slip_events, hops=hops, skipped=skipped, aborted=aborted,
                     abort_reason=reason, energy=energy)


def _launch(state, entry, scenario, fg, dt):
    i = entry.robot
    robot = scenario.robot
    sol = entry.solution
    replanned = False
    if scenario.controller.replan_at_launch:
        ft, _ = dynamics.tether_forces(state.r, state.v, state.R, state.V, state.phi, state.phi_dot,
                                       scenario.payload.attachments, scenario.tether)
        target = entry.target.copy()
        target[2] = state.r[i, 2]
        problem = HopProblem(state.r[i], target, robot.m_r, fg + ft[i] / robot.m_r,
                             robot.t_max, scenario.controller.tau_bounds)
        try:
            sol = solve_hop(problem)
            replanned = True
        except HopInfeasible:
            sol = entry.solution
    steps = max(1, int(round(sol.tau / dt)))
    log = {"robot": int(i), "t_launch": float(state.t), "target": [float(x) for x in entry.target],
           "thrust": [float(x) for x in sol.thrust_T], "tau": float(sol.tau),
           "impulse": float(math.sqrt(sol.cost) * steps * dt), "replanned": replanned,
           "tether_slack": _tether_length(state, scenario, i) <= scenario.tether.l_0}
    return {"robot": i, "thrust": np.array(sol.thrust_T, dtype=float), "left": steps,
            "target": entry.target, "log": log}


def _tether_length(state, scenario, i):
    px, py = scenario.payload.attachments[i]
    c, s = math.cos(state.phi), math.sin(state.phi)
    dx = state.R[0] + c * px - s * py - state.r[i, 0]
    dy = state.R[1] + s * px + c * py - state.r[i, 1]
    dz = state.R[2] - state.r[i, 2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)
