"""CSV tables behind the standard plots (rendering is left to the user).

Schemas
-------
staircase_csv (payload and robots climbing over time)
    ``t, y_robot0, ..., y_robot{N-1}, y_payload``
fitness_csv (fitness per generation)
    ``gen, individual, fitness``; after each generation's individuals a row
    with ``individual = mean`` holds that generation's mean fitness.
profile_csv (surface trace and grip sites)
    ``x, surface_h``, then for each tip radius ``traced_h_<r_s>`` and
    ``site_<r_s>`` (1 where a spine can hold).  ``<r_s>`` is written in
    micrometres, e.g. ``traced_h_10um``.
path_csv
    ``waypoint, robot, x, y`` with ``robot = payload`` rows for the payload.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .grip import surface_angle, trace_profile
from .trajectory import fmt

__all__ = ["staircase_csv", "fitness_csv", "profile_csv", "path_csv", "radius_label"]


def _text(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def staircase_csv(traj):
    n = traj.n_robots
    rows = [["t"] + [f"y_robot{i}" for i in range(n)] + ["y_payload"]]
    for k in range(len(traj)):
        rows.append([fmt(traj.t[k])] + [fmt(traj.r[k, i, 1]) for i in range(n)] + [fmt(traj.R[k, 1])])
    return _text(rows)


def fitness_csv(history):
    rows = [["gen", "individual", "fitness"]]
    gens = sorted({h["gen"] for h in history})
    for g in gens:
        members = [h for h in history if h["gen"] == g]
        for h in members:
            rows.append([g, h["individual"], fmt(h["fitness"])])
        rows.append([g, "mean", fmt(np.mean([h["fitness"] for h in members]))])
    return _text(rows)


def radius_label(r_s):
    um = r_s * 1e6
    return f"{um:g}um"


def profile_csv(profile, resolution, radii, psi_min):
    profile = np.asarray(profile, dtype=float)
    x = np.arange(profile.size) * resolution
    traced = [trace_profile(profile, r, resolution) for r in radii]
    flags = [surface_angle(t, resolution) > psi_min for t in traced]
    header = ["x", "surface_h"]
    for r in radii:
        header += [f"traced_h_{radius_label(r)}", f"site_{radius_label(r)}"]
    rows = [header]
    for j in range(profile.size):
        row = [fmt(x[j]), fmt(profile[j])]
        for t, f in zip(traced, flags):
            row += [fmt(t[j]), int(f[j])]
        rows.append(row)
    return _text(rows)


def path_csv(path):
    rows = [["waypoint", "robot", "x", "y"]]
    for k, team in enumerate(path.waypoints):
        for i, (x, y) in enumerate(team):
            rows.append([k, i, fmt(x), fmt(y)])
    for k, (x, y) in enumerate(path.payload_waypoints):
        rows.append([k, "payload", fmt(x), fmt(y)])
    return _text(rows)
