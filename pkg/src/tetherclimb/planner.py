"""Three-robot kinematic path planning over slope-obstacle maps.

The joint state is the 2D position of each of the three robots.  Only states
with ``|p0 - p1| < p/2`` and ``|p1 - p2| < p/2`` exist for the planner, where
``p`` is the separation bound.  Two trees grow from the start and the goal,
steered by a grid over the robots' centroid; sparse cells on the frontier
of each tree are expanded first.  Edges are checked only once a candidate
start-to-goal chain exists (lazy), and the payload's swept disk is checked
after that.  A payload collision penalizes the cells involved and the search
goes on.

Collision semantics: a disk of radius ``r`` centred at point ``x`` collides
when ``x`` is outside the map or when the nearest blocked cell centre is
within ``r`` of the centre of the cell holding ``x``.  With ``r = 0`` that is
simply "``x`` lies in a blocked cell".
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .terrain import ObstacleMask
from .trajectory import fmt

__all__ = [
    "PlanProblem",
    "Path",
    "PlanningError",
    "PlanningTimeout",
    "PlanningFailure",
    "separation_ok",
    "plan",
    "validate_payload_path",
    "validate_path",
    "SeparationPlanner",
]

N_ROBOTS = 3


class PlanningError(RuntimeError):
    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = dict(stats or {})


class PlanningTimeout(PlanningError):
    """Time or iteration budget spent without a valid path."""


class PlanningFailure(PlanningError):
    """The query cannot be solved (for instance, start and goal are disconnected)."""


def separation_ok(positions, sep_p):
    """True iff robots 0-1 and 1-2 are each strictly closer than ``sep_p / 2``.

    Pair 0-2 is not tested; the triangle inequality keeps it below ``sep_p``.
    """
    p = np.asarray(positions, dtype=float)
    if p.shape != (N_ROBOTS, 2):
        raise ValueError(f"expected 3 planar positions, got shape {p.shape}")
    half = 0.5 * sep_p
    return bool(math.hypot(*(p[0] - p[1])) < half and math.hypot(*(p[1] - p[2])) < half)


def _as_team(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (N_ROBOTS, 2) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be 3 finite planar positions, got {value!r}")
    return arr


@dataclass(frozen=True)
class PlanProblem:
    starts: np.ndarray
    goals: np.ndarray
    sep_p: float
    robot_radius: float = 0.0
    payload_radius: float = 0.0
    max_hop: float = 1.0
    time_budget: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "starts", _as_team(self.starts, "starts"))
        object.__setattr__(self, "goals", _as_team(self.goals, "goals"))
        for name in ("sep_p", "max_hop", "time_budget"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("robot_radius", "payload_radius"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if not separation_ok(self.starts, self.sep_p):
            raise ValueError("start positions violate the separation constraint")
        if not separation_ok(self.goals, self.sep_p):
            raise ValueError("goal positions violate the separation constraint")

    def to_dict(self):
        return {"starts": self.starts.tolist(), "goals": self.goals.tolist(), "sep_p": self.sep_p,
                "robot_radius": self.robot_radius, "payload_radius": self.payload_radius,
                "max_hop": self.max_hop, "time_budget": self.time_budget}

    @classmethod
    def from_dict(cls, d):
        known = {"starts", "goals", "sep_p", "robot_radius", "payload_radius", "max_hop", "time_budget"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown plan problem keys: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class Path:
    """Joint waypoints, shape (K, 3, 2), plus the payload's following offset."""

    waypoints: np.ndarray
    payload_offset: tuple = (0.0, 0.0)
    stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=float)
        if w.ndim != 3 or w.shape[1:] != (N_ROBOTS, 2) or len(w) == 0:
            raise ValueError(f"waypoints must have shape (K, 3, 2), got {w.shape}")
        object.__setattr__(self, "waypoints", w)
        object.__setattr__(self, "payload_offset", tuple(float(x) for x in self.payload_offset))

    def __len__(self):
        return len(self.waypoints)

    def robot(self, i):
        return self.waypoints[:, i, :]

    @property
    def payload_waypoints(self):
        return self.waypoints.mean(axis=1) + np.asarray(self.payload_offset)

    @property
    def centroid_length(self):
        c = self.waypoints.mean(axis=1)
        return float(np.linalg.norm(np.diff(c, axis=0), axis=1).sum())

    def robot_csv(self, i):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["waypoint", "x", "y"])
        for k, (x, y) in enumerate(self.robot(i)):
            w.writerow([k, fmt(x), fmt(y)])
        return buf.getvalue()

    def payload_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["waypoint", "x", "y"])
        for k, (x, y) in enumerate(self.payload_waypoints):
            w.writerow([k, fmt(x), fmt(y)])
        return buf.getvalue()

    def metadata(self):
        return {"waypoints": len(self), "centroid_length": self.centroid_length,
                "payload_offset": list(self.payload_offset), **self.stats}

    def metadata_json(self):
        return json.dumps(self.metadata(), indent=2, sort_keys=True)


class _Checker:
    """Grid lookups for disk collision and sampled motion checks."""

    def __init__(self, mask):
        self.mask = mask
        self.cell = mask.cell_size
        self.ox, self.oy = mask.origin
        self.ny, self.nx = mask.shape
        self.clearance = mask.clearance()
        self._free = {}

    def free_grid(self, radius):
        key = float(radius)
        if key not in self._free:
            self._free[key] = self.clearance > radius
        return self._free[key]

    def points_free(self, xy, radius):
        xy = np.asarray(xy, dtype=float)
        col = np.floor((xy[..., 0] - self.ox) / self.cell).astype(np.int64)
        row = np.floor((xy[..., 1] - self.oy) / self.cell).astype(np.int64)
        inside = (col >= 0) & (col < self.nx) & (row >= 0) & (row < self.ny)
        out = np.zeros(xy.shape[:-1], dtype=bool)
        grid = self.free_grid(radius)
        out[inside] = grid[row[inside], col[inside]]
        return out

    def point_free(self, x, y, grid):
        col = math.floor((x - self.ox) / self.cell)
        row = math.floor((y - self.oy) / self.cell)
        if col < 0 or row < 0 or col >= self.nx or row >= self.ny:
            return False
        return bool(grid[row, col])

    def n_samples(self, length, min_samples=10):
        return max(min_samples, int(math.ceil(length / (0.25 * self.cell))))

    def sweep_ok(self, a, b, radius):
        """Disk of ``radius`` swept from point a to point b."""
        n = self.n_samples(math.hypot(b[0] - a[0], b[1] - a[1]))
        s = np.linspace(0.0, 1.0, n + 1)[:, None]
        pts = a[None, :] * (1 - s) + b[None, :] * s
        return bool(self.points_free(pts, radius).all())


def _interp(a, b, n):
    s = np.linspace(0.0, 1.0, n + 1)[:, None, None]
    return a[None] * (1 - s) + b[None] * s


def _sep_many(states, sep_p):
    half = 0.5 * sep_p
    d01 = np.linalg.norm(states[:, 0] - states[:, 1], axis=-1)
    d12 = np.linalg.norm(states[:, 1] - states[:, 2], axis=-1)
    return (d01 < half) & (d12 < half)


def _edge_ok(checker, a, b, problem):
    step = np.linalg.norm(b - a, axis=1)
    if step.max() > problem.max_hop * (1 + 1e-12):
        return False
    samples = _interp(a, b, checker.n_samples(float(step.max())))
    if not checker.points_free(samples, problem.robot_radius).all():
        return False
    return bool(_sep_many(samples, problem.sep_p).all())


def validate_payload_path(path, mask, payload_radius, _checker=None):
    """Sweep the payload disk along the path's payload waypoints.

    Returns ``(valid, first_bad_segment)``; the segment index is ``None``
    when valid.  A single-waypoint path is checked at that point (segment 0).
    """
    if payload_radius < 0:
        raise ValueError("payload_radius must be >= 0")
    checker = _checker or _Checker(mask)
    pts = path.payload_waypoints
    if len(pts) == 1:
        ok = bool(checker.points_free(pts, payload_radius).all())
        return ok, (None if ok else 0)
    for k in range(len(pts) - 1):
        if not checker.sweep_ok(pts[k], pts[k + 1], payload_radius):
            return False, k
    return True, None


def validate_path(path, mask, problem, samples=10):
    """All path invariants at the waypoints and ``samples`` points per segment.

    Returns a list of human-readable violations (empty when valid).
    """
    checker = _Checker(mask)
    w = path.waypoints
    problems = []
    if not np.allclose(w[0], problem.starts) or not np.allclose(w[-1], problem.goals):
        problems.append("path does not join start to goal")
    for k in range(len(w)):
        if not separation_ok(w[k], problem.sep_p):
            problems.append(f"waypoint {k}: separation")
        if not checker.points_free(w[k], problem.robot_radius).all():
            problems.append(f"waypoint {k}: robot collision")
    for k in range(len(w) - 1):
        step = np.linalg.norm(w[k + 1] - w[k], axis=1)
        if step.max() > problem.max_hop * (1 + 1e-9):
            problems.append(f"segment {k}: hop {step.max():.6g} > max_hop")
        pts = _interp(w[k], w[k + 1], samples)
        if not _sep_many(pts, problem.sep_p).all():
            problems.append(f"segment {k}: separation between waypoints")
        if not checker.points_free(pts, problem.robot_radius).all():
            problems.append(f"segment {k}: robot collision between waypoints")
    ok, bad = validate_payload_path(path, mask, problem.payload_radius, _checker=checker)
    if not ok:
        problems.append(f"segment {bad}: payload collision")
    return problems


class _Tree:
    def __init__(self, root, cell_size):
        self.cell_size = cell_size
        self.states = [root]
        self.parent = [-1]
        self.children = [[]]
        self.alive = [True]
        self.edge_checked = [True]
        self.keys = []
        self.cells = {}
        self._add_to_cell(0, root)

    def key_of(self, state):
        c = state.mean(axis=0)
        return (math.floor(c[0] / self.cell_size), math.floor(c[1] / self.cell_size))

    def _add_to_cell(self, idx, state):
        key = self.key_of(state)
        self.keys.append(key)
        cell = self.cells.get(key)
        if cell is None:
            nb = 0
            for dk in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                other = self.cells.get((key[0] + dk[0], key[1] + dk[1]))
                if other is not None:
                    other["neighbors"] += 1
                    nb += 1
            cell = {"motions": [], "selections": 0, "penalty": 0.0, "neighbors": nb}
            self.cells[key] = cell
        cell["motions"].append(idx)

    def add(self, state, parent):
        idx = len(self.states)
        self.states.append(state)
        self.parent.append(parent)
        self.children.append([])
        self.children[parent].append(idx)
        self.alive.append(True)
        self.edge_checked.append(False)
        self._add_to_cell(idx, state)
        return idx

    def remove_subtree(self, idx):
        stack, removed = [idx], 0
        while stack:
            j = stack.pop()
            if not self.alive[j]:
                continue
            self.alive[j] = False
            removed += 1
            key = self.keys[j]
            cell = self.cells[key]
            cell["motions"].remove(j)
            if not cell["motions"]:
                del self.cells[key]
                for dk in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    other = self.cells.get((key[0] + dk[0], key[1] + dk[1]))
                    if other is not None:
                        other["neighbors"] -= 1
            stack.extend(self.children[j])
        return removed

    def chain(self, idx):
        """Indices from the root to ``idx``."""
        out = []
        while idx >= 0:
            out.append(idx)
            idx = self.parent[idx]
        return out[::-1]


class SeparationPlanner(BaseEstimator):
    """Lazy bidirectional cell-exploration planner for a three-robot team.

    ``fit(mask)`` precomputes clearance data for an ObstacleMask;
    ``predict(problem)`` returns a :class:`Path` or raises a PlanningError.

    Parameters
    ----------
    projection_scale : centroid grid cell size as a multiple of the map cell.
    exterior_bias : probability of expanding a frontier (exterior) cell.
    goal_bias : probability of steering toward the other tree instead of a
        random step.
    max_iterations : hard cap on expansions (in addition to the time budget).
    smoothing : number of random shortcut attempts on the found path.
    payload_follow : ``"centroid"`` or ``"offset"``; the latter shifts the
        payload by ``payload_offset`` metres downslope (-y).
    seed : RNG seed.
    """

    def __init__(self, projection_scale=4.0, exterior_bias=0.75, goal_bias=0.2,
                 max_iterations=200_000, smoothing=200, payload_follow="centroid",
                 payload_offset=1.0, seed=0):
        self.projection_scale = projection_scale
        self.exterior_bias = exterior_bias
        self.goal_bias = goal_bias
        self.max_iterations = max_iterations
        self.smoothing = smoothing
        self.payload_follow = payload_follow
        self.payload_offset = payload_offset
        self.seed = seed

    def fit(self, mask, y=None):
        if not isinstance(mask, ObstacleMask):
            raise TypeError("fit expects an ObstacleMask")
        if self.payload_follow not in ("centroid", "offset"):
            raise ValueError(f"payload_follow must be 'centroid' or 'offset', got {self.payload_follow!r}")
        if not self.projection_scale > 0:
            raise ValueError("projection_scale must be > 0")
        self.mask_ = mask
        self.checker_ = _Checker(mask)
        self.projection_cell_ = self.projection_scale * mask.cell_size
        return self

    @property
    def _offset(self):
        if self.payload_follow == "offset":
            return (0.0, -float(self.payload_offset))
        return (0.0, 0.0)

    def _path(self, states, stats):
        return Path(np.array(states), self._offset, stats)

    def predict(self, problem):
        check_is_fitted(self, "mask_")
        t0 = time.perf_counter()
        checker = self.checker_
        rgrid = checker.free_grid(problem.robot_radius)
        for name, team in (("start", problem.starts), ("goal", problem.goals)):
            if not checker.points_free(team, problem.robot_radius).all():
                raise ValueError(f"{name} positions are in collision")
        stats = {"iterations": 0, "cells_explored": 0, "motions": 2, "lazy_rejections": 0,
                 "payload_rejections": 0, "seed": self.seed}

        if np.array_equal(problem.starts, problem.goals):
            path = self._path([problem.starts], stats)
            ok, _ = validate_payload_path(path, self.mask_, problem.payload_radius, _checker=checker)
            if not ok:
                raise PlanningFailure("payload collides at the start configuration", stats)
            return path

        labels, _ = ndimage.label(rgrid, structure=np.ones((3, 3), dtype=int))
        rs, cs = self.mask_.cell_of(problem.starts)
        rg, cg = self.mask_.cell_of(problem.goals)
        if np.any(labels[rs, cs] != labels[rg, cg]):
            raise PlanningFailure("start and goal lie in disconnected free regions", stats)

        rng = np.random.default_rng(self.seed)
        trees = (_Tree(problem.starts.copy(), self.projection_cell_),
                 _Tree(problem.goals.copy(), self.projection_cell_))
        tried = set()
        half = 0.5 * problem.sep_p
        hop = problem.max_hop

        for it in range(int(self.max_iterations)):
            if time.perf_counter() - t0 > problem.time_budget:
                break
            stats["iterations"] = it + 1
            side = it % 2
            tree, other = trees[side], trees[1 - side]
            src = self._select(tree, rng)
            base = tree.states[src]
            new = None
            if rng.random() < self.goal_bias:
                target = other.states[self._select(other, rng)]
                delta = target - base
                dist = np.linalg.norm(delta, axis=1, keepdims=True)
                cand = base + delta * np.minimum(1.0, hop / np.maximum(dist, 1e-300))
                if self._state_ok(cand, rgrid, half):
                    new = cand
            if new is None:
                new = self._sample_near(base, rng, rgrid, half, hop)
            if new is None:
                continue
            idx = tree.add(new, src)
            stats["motions"] += 1
            path = self._try_connect(trees, side, idx, problem, tried, stats)
            if path is not None:
                stats["cells_explored"] = len(trees[0].cells) + len(trees[1].cells)
                smoothed = self._smooth(path, problem, rng)
                stats["planning_time_s"] = time.perf_counter() - t0
                return self._path(smoothed, stats)

        stats["cells_explored"] = len(trees[0].cells) + len(trees[1].cells)
        stats["planning_time_s"] = time.perf_counter() - t0
        raise PlanningTimeout(
            f"no valid path after {stats['iterations']} iterations "
            f"({stats['cells_explored']} cells, {stats['motions']} motions)", stats)

    def _select(self, tree, rng):
        keys = list(tree.cells)
        exterior = [k for k in keys if tree.cells[k]["neighbors"] < 4]
        interior = [k for k in keys if tree.cells[k]["neighbors"] >= 4]
        if exterior and (not interior or rng.random() < self.exterior_bias):
            pool = exterior
        else:
            pool = interior
        w = np.array([1.0 / ((1 + tree.cells[k]["selections"]) * (1 + tree.cells[k]["penalty"]))
                      for k in pool])
        key = pool[int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right").clip(0, len(pool) - 1))]
        cell = tree.cells[key]
        cell["selections"] += 1
        motions = cell["motions"]
        return motions[int(rng.integers(len(motions)))]

    def _state_ok(self, s, grid, half):
        pf = self.checker_.point_free
        if not (pf(s[0, 0], s[0, 1], grid) and pf(s[1, 0], s[1, 1], grid) and pf(s[2, 0], s[2, 1], grid)):
            return False
        return (math.hypot(s[0, 0] - s[1, 0], s[0, 1] - s[1, 1]) < half
                and math.hypot(s[1, 0] - s[2, 0], s[1, 1] - s[2, 1]) < half)

    def _sample_near(self, base, rng, grid, half, hop, tries=20):
        """Robot 0 steps randomly; robots 1 and 2 are resampled until each
        lies within ``half`` of its predecessor."""
        pf = self.checker_.point_free
        new = np.empty_like(base)
        for i in range(N_ROBOTS):
            for _ in range(tries):
                ang = rng.random() * 2 * math.pi
                rad = hop * math.sqrt(rng.random())
                x = base[i, 0] + rad * math.cos(ang)
                y = base[i, 1] + rad * math.sin(ang)
                if i > 0 and math.hypot(x - new[i - 1, 0], y - new[i - 1, 1]) >= half:
                    continue
                if pf(x, y, grid):
                    new[i] = (x, y)
                    break
            else:
                return None
        return new

    def _try_connect(self, trees, side, idx, problem, tried, stats):
        tree, other = trees[side], trees[1 - side]
        state = tree.states[idx]
        kx, ky = tree.keys[idx]
        cands = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                cell = other.cells.get((kx + dx, ky + dy))
                if cell:
                    cands.extend(cell["motions"])
        if not cands:
            return None
        arr = np.array([other.states[j] for j in cands])
        gap = np.linalg.norm(arr - state[None], axis=2).max(axis=1)
        for order in np.argsort(gap, kind="stable")[:3]:
            if gap[order] > problem.max_hop:
                break
            j = cands[int(order)]
            pair = (side, idx, j)
            if pair in tried:
                continue
            tried.add(pair)
            path = self._lazy_validate(trees, side, idx, j, problem, stats)
            if path is not None:
                return path
            if not tree.alive[idx]:
                return None
        return None

    def _lazy_validate(self, trees, side, idx, j, problem, stats):
        checker = self.checker_
        a_chain = trees[side].chain(idx)
        b_chain = trees[1 - side].chain(j)
        for tree, chain in ((trees[side], a_chain), (trees[1 - side], b_chain)):
            for k in chain[1:]:
                if tree.edge_checked[k]:
                    continue
                if _edge_ok(checker, tree.states[tree.parent[k]], tree.states[k], problem):
                    tree.edge_checked[k] = True
                else:
                    stats["lazy_rejections"] += 1
                    tree.remove_subtree(k)
                    return None
        if not _edge_ok(checker, trees[side].states[idx], trees[1 - side].states[j], problem):
            stats["lazy_rejections"] += 1
            return None
        if side == 0:
            states = [trees[0].states[k] for k in a_chain] + [trees[1].states[k] for k in b_chain[::-1]]
        else:
            states = [trees[0].states[k] for k in b_chain] + [trees[1].states[k] for k in a_chain[::-1]]
        ok, bad = validate_payload_path(self._path(states, {}), self.mask_, problem.payload_radius,
                                        _checker=checker)
        if ok:
            return states
        stats["payload_rejections"] += 1
        for s in (states[bad], states[bad + 1]):
            for tree in trees:
                cell = tree.cells.get(tree.key_of(s))
                if cell is not None:
                    cell["penalty"] += 1.0
        return None

    def _smooth(self, states, problem, rng):
        """Random shortcutting; keeps a change only if the whole path stays valid."""
        checker = self.checker_
        states = list(states)
        for _ in range(int(self.smoothing)):
            if len(states) < 3:
                break
            i, j = sorted(rng.choice(len(states), size=2, replace=False))
            if j - i < 2:
                continue
            a, b = states[i], states[j]
            n = max(1, int(math.ceil(np.linalg.norm(b - a, axis=1).max() / problem.max_hop)))
            mids = [a + (b - a) * (s / n) for s in range(1, n)]
            seq = [a] + mids + [b]
            if n >= j - i:
                continue
            if not all(_edge_ok(checker, seq[k], seq[k + 1], problem) for k in range(n)):
                continue
            cand = states[:i + 1] + mids + states[j:]
            ok, _ = validate_payload_path(self._path(cand, {}), self.mask_, problem.payload_radius,
                                          _checker=checker)
            if ok:
                states = cand
        return states


def plan(problem, mask, seed=0, **planner_params):
    """Plan a path for the three-robot team; see :class:`SeparationPlanner`."""
    return SeparationPlanner(seed=seed, **planner_params).fit(mask).predict(problem)
