"""Sampled episode record with CSV / JSON export."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np


def fmt(x):
    """Shortest round-trip text for a float; keeps exports byte-stable."""
    return repr(float(x))


@dataclass
class Trajectory:
    """Fixed-interval samples of an episode.

    Array attributes are stacked over samples: ``r`` has shape (S, N, 3),
    ``R`` has shape (S, 3), and so on.
    """

    t: np.ndarray
    r: np.ndarray
    v: np.ndarray
    R: np.ndarray
    V: np.ndarray
    phi: np.ndarray
    phi_dot: np.ndarray
    gripped: np.ndarray
    fuel_used: np.ndarray
    thrust: np.ndarray
    thrust_cut: np.ndarray
    vartheta: np.ndarray
    slip_events: list = field(default_factory=list)
    hops: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: str = ""
    energy: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def n_robots(self):
        return self.r.shape[1]

    @property
    def displacement(self):
        return self.R[-1] - self.R[0]

    @property
    def distance(self):
        return float(np.linalg.norm(self.displacement))

    def released_counts(self):
        return (~self.gripped).sum(axis=1)

    def columns(self):
        cols = ["t"]
        for i in range(self.n_robots):
            cols += [f"r{i}_x", f"r{i}_y", f"r{i}_z", f"v{i}_x", f"v{i}_y", f"v{i}_z",
                     f"T{i}_x", f"T{i}_y", f"T{i}_z", f"grip{i}", f"fuel{i}", f"cut{i}"]
        cols += ["R_x", "R_y", "R_z", "V_x", "V_y", "V_z", "phi", "phi_dot", "vartheta"]
        return cols

    def to_csv(self, path_or_buf=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns())
        for k in range(len(self.t)):
            row = [fmt(self.t[k])]
            for i in range(self.n_robots):
                row += [fmt(x) for x in self.r[k, i]]
                row += [fmt(x) for x in self.v[k, i]]
                row += [fmt(x) for x in self.thrust[k, i]]
                row += [int(self.gripped[k, i]), fmt(self.fuel_used[k, i]), int(self.thrust_cut[k, i])]
            row += [fmt(x) for x in self.R[k]] + [fmt(x) for x in self.V[k]]
            row += [fmt(self.phi[k]), fmt(self.phi_dot[k]), fmt(self.vartheta[k])]
            writer.writerow(row)
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self):
        last = -1
        return {
            "samples": len(self.t),
            "t_final": float(self.t[last]),
            "payload_start": [float(x) for x in self.R[0]],
            "payload_final": [float(x) for x in self.R[last]],
            "payload_displacement": [float(x) for x in self.displacement],
            "distance": self.distance,
            "vartheta_max": float(np.max(self.vartheta)),
            "vartheta_mean": float(np.mean(self.vartheta)),
            "robots_final": [[float(x) for x in p] for p in self.r[last]],
            "fuel_used": [float(x) for x in self.fuel_used[last]],
            "max_released": int(self.released_counts().max()),
            "slip_events": [dict(e) for e in self.slip_events],
            "hops": [dict(h) for h in self.hops],
            "skipped_hops": [dict(h) for h in self.skipped],
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "energy": dict(self.energy),
        }

    def summary_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True)


class TrajectoryRecorder:
    """Accumulates SystemState samples and freezes them into a Trajectory."""

    def __init__(self):
        self._rows = {k: [] for k in ("t", "r", "v", "R", "V", "phi", "phi_dot", "gripped",
                                      "fuel_used", "thrust", "thrust_cut", "vartheta")}

    def add(self, state, thrust, vartheta):
        rows = self._rows
        rows["t"].append(state.t)
        rows["r"].append(state.r)
        rows["v"].append(state.v)
        rows["R"].append(state.R)
        rows["V"].append(state.V)
        rows["phi"].append(state.phi)
        rows["phi_dot"].append(state.phi_dot)
        rows["gripped"].append(state.gripped)
        rows["fuel_used"].append(state.fuel_used)
        rows["thrust"].append(thrust)
        rows["thrust_cut"].append(state.thrust_cut)
        rows["vartheta"].append(vartheta)

    def __len__(self):
        return len(self._rows["t"])

    def build(self, **extra):
        arrays = {k: np.array(v) for k, v in self._rows.items()}
        return Trajectory(**arrays, **extra)
