"""NSGA-II search over binary perimeter-attachment genotypes.

A genotype has one bit per payload perimeter node (nodes every
``alpha_node`` degrees).  Set bits carry a robot tether.  Each individual is
scored by a climbing episode on three objectives: climb distance (maximized),
peak and mean payload oscillation angle (minimized).  Tether crossings make
an individual infeasible under constrained domination.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import gait
from ._validation import check_positive, check_probability
from .trajectory import fmt

__all__ = [
    "Genotype",
    "AttachmentConfig",
    "EvalResult",
    "GAParams",
    "decode",
    "tethers_cross",
    "nominal_robot_positions",
    "evaluate",
    "ClimbConfigProblem",
    "dominates",
    "nondominated_sort",
    "crowding_distance",
    "scalar_fitness",
    "NSGA2",
    "evolve",
]


@dataclass(frozen=True)
class Genotype:
    bits: tuple
    alpha_node: float = 15.0

    def __post_init__(self):
        m = 360.0 / self.alpha_node
        if self.alpha_node <= 0 or abs(m - round(m)) > 1e-9:
            raise ValueError(f"alpha_node must divide 360 exactly, got {self.alpha_node}")
        bits = tuple(bool(b) for b in self.bits)
        if len(bits) != round(m):
            raise ValueError(f"genotype needs {round(m)} bits for alpha_node={self.alpha_node}, got {len(bits)}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_indices(cls, indices, alpha_node=15.0):
        m = int(round(360.0 / alpha_node))
        bits = [False] * m
        for j in indices:
            bits[j] = True
        return cls(tuple(bits), alpha_node)

    @property
    def m(self):
        return len(self.bits)

    @property
    def n_robots(self):
        return sum(self.bits)

    def to_string(self):
        return "".join("1" if b else "0" for b in self.bits)


@dataclass(frozen=True)
class AttachmentConfig:
    angles_deg: tuple
    points: np.ndarray
    robot_count: int

    @property
    def feasible(self):
        return self.robot_count >= 1


@dataclass(frozen=True)
class EvalResult:
    f1: float
    f2: float
    f3: float
    feasible: bool
    robots_used: int
    violation: float = 0.0
    aborted: bool = False

    @property
    def objectives(self):
        """Minimization vector: distance is negated."""
        return (-self.f1, self.f2, self.f3)

    def to_dict(self):
        return {"f1": self.f1, "f2": self.f2, "f3": self.f3, "feasible": self.feasible,
                "robots_used": self.robots_used, "violation": self.violation, "aborted": self.aborted}


@dataclass(frozen=True)
class GAParams:
    pop_A: int = 50
    off_B: int | None = None
    p_cross: float = 0.8
    p_mut: float = 0.2
    generations: int = 21
    weights: tuple = (0.5, 0.25, 0.25)
    seed: int = 0

    def __post_init__(self):
        if int(self.pop_A) < 2:
            raise ValueError("pop_A must be >= 2")
        if self.off_B is not None and int(self.off_B) < 1:
            raise ValueError("off_B must be >= 1")
        check_probability(self.p_cross, "p_cross")
        check_probability(self.p_mut, "p_mut")
        if int(self.generations) < 1:
            raise ValueError("generations must be >= 1")
        w = tuple(float(x) for x in self.weights)
        if any(x < 0 for x in w) or not math.isclose(sum(w), 1.0, abs_tol=1e-9):
            raise ValueError(f"weights must be non-negative and sum to 1, got {self.weights}")
        object.__setattr__(self, "weights", w)

    @property
    def offspring(self):
        return int(self.pop_A if self.off_B is None else self.off_B)


def decode(genotype, payload):
    """Attachment points on the payload disk for every set bit."""
    idx = [j for j, b in enumerate(genotype.bits) if b]
    angles = tuple(j * genotype.alpha_node for j in idx)
    rad = np.radians(angles)
    pts = payload.disk_radius * np.column_stack([np.cos(rad), np.sin(rad)]) if idx else np.zeros((0, 2))
    return AttachmentConfig(angles, pts, len(idx))


def tethers_cross(attach_xy, robot_xy):
    """True if any two tether chords (attachment -> robot) properly intersect."""
    a = np.asarray(attach_xy, dtype=float).reshape(-1, 2)
    r = np.asarray(robot_xy, dtype=float)[:, :2].reshape(-1, 2)
    if a.shape[0] < 2:
        return False

    def orient(o, e, p):
        # sign of (e - o) x (p - o) for every chord pair (row: chord, column: point)
        return (e[:, None, 0] - o[:, None, 0]) * (p[None, :, 1] - o[:, None, 1]) - \
               (e[:, None, 1] - o[:, None, 1]) * (p[None, :, 0] - o[:, None, 0])

    s_a = orient(a, r, a)
    s_r = orient(a, r, r)
    straddle = s_a * s_r < 0
    cross = straddle & straddle.T
    np.fill_diagonal(cross, False)
    return bool(cross.any())


def nominal_robot_positions(config, payload_pos, l_0):
    """Robots parked radially outward of their nodes at the tether rest length."""
    R = np.asarray(payload_pos, dtype=float)[:2]
    pts = np.asarray(config.points, dtype=float).reshape(-1, 2)
    if pts.size == 0:
        return pts
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    return R + pts * (1.0 + l_0 / norms)


def _world_attachments(state, payload):
    p = payload.attachment_array
    c, s = math.cos(state.phi), math.sin(state.phi)
    return np.column_stack([state.R[0] + c * p[:, 0] - s * p[:, 1],
                            state.R[1] + s * p[:, 0] + c * p[:, 1]])


def evaluate(genotype, scenario, pre_settle=1.0, distance="progress"):
    """Score one attachment layout with a climbing episode.

    The robots are parked radially outward of their nodes, the system relaxes
    with all grips set for ``pre_settle`` seconds, then a round-robin climb
    runs for the controller's duration under the per-robot fuel budget.

    ``distance="progress"`` scores payload travel along the goal direction
    (never negative); ``"norm"`` uses the plain displacement length.
    """
    config = decode(genotype, scenario.payload)
    if not config.feasible:
        return EvalResult(0.0, 0.0, 0.0, False, 0, violation=1.0)
    sc = scenario.with_attachments(config.points)
    state = sc.initial_state()
    if tethers_cross(_world_attachments(state, sc.payload), state.r):
        return EvalResult(0.0, 0.0, 0.0, False, config.robot_count, violation=1.0)
    state = gait.settle(state, sc, pre_settle)
    ctl = sc.controller
    try:
        schedule = gait.plan_climb_sequence(state, ctl.goal_dir, ctl.hop_len, gait.hops_that_fit(sc), sc)
    except (gait.HopInfeasible, ValueError):
        return EvalResult(0.0, 0.0, 0.0, False, config.robot_count, violation=1.0)

    crossings = [0, 0]

    def watch(s):
        crossings[1] += 1
        if tethers_cross(_world_attachments(s, sc.payload), s.r):
            crossings[0] += 1

    traj = gait.run_episode(sc, schedule, state=state, duration=ctl.duration, observer=watch)
    disp = traj.R[-1] - traj.R[0]
    if distance == "norm":
        f1 = float(np.linalg.norm(disp))
    else:
        goal = np.asarray(ctl.goal_dir)
        f1 = max(0.0, float(disp[:2] @ goal))
    f2 = float(np.max(traj.vartheta))
    f3 = float(np.mean(traj.vartheta))
    violation = crossings[0] / max(crossings[1], 1) + (1.0 if traj.aborted else 0.0)
    return EvalResult(f1, f2, f3, violation == 0.0, config.robot_count, violation, traj.aborted)


class ClimbConfigProblem:
    """Genotype -> EvalResult for a climbing scenario, memoized per bit string.

    Evaluation is a pure function of the genotype and the scenario, so the
    cache only saves repeated simulation of duplicate individuals.
    """

    def __init__(self, scenario, alpha_node=15.0, pre_settle=1.0, distance="progress"):
        self.scenario = scenario
        self.alpha_node = alpha_node
        self.pre_settle = pre_settle
        self.distance = distance
        self.n_bits = int(round(360.0 / alpha_node))
        self._cache = {}

    def evaluate(self, bits):
        key = tuple(bool(b) for b in bits)
        if key not in self._cache:
            self._cache[key] = evaluate(Genotype(key, self.alpha_node), self.scenario,
                                        self.pre_settle, self.distance)
        return self._cache[key]


def _as_matrix(results):
    if isinstance(results, np.ndarray):
        F = np.asarray(results, dtype=float)
        return F, np.ones(len(F), dtype=bool), np.zeros(len(F))
    F = np.array([r.objectives for r in results], dtype=float)
    feas = np.array([bool(r.feasible) for r in results], dtype=bool)
    viol = np.array([float(getattr(r, "violation", 0.0)) for r in results])
    return F, feas, viol


def dominates(a, b, feas_a=True, feas_b=True, viol_a=0.0, viol_b=0.0):
    """Constrained domination for minimization vectors."""
    if feas_a and not feas_b:
        return True
    if feas_b and not feas_a:
        return False
    if not feas_a:
        return viol_a < viol_b
    a = np.asarray(a)
    b = np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def _domination_matrix(F, feas, viol):
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    pareto = le & lt
    both_feas = feas[:, None] & feas[None, :]
    both_infeas = ~feas[:, None] & ~feas[None, :]
    D = np.where(both_feas, pareto, False)
    D |= feas[:, None] & ~feas[None, :]
    D |= both_infeas & (viol[:, None] < viol[None, :])
    return D


def crowding_distance(F):
    """Crowding distance of one front; boundary points get infinity."""
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(F.shape[1]):
        order = np.argsort(F[:, k], kind="stable")
        col = F[order, k]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = col[-1] - col[0]
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def nondominated_sort(results):
    """Front ranks (0 = non-dominated) and per-front crowding distances.

    Accepts a sequence of results with ``objectives``/``feasible``/
    ``violation`` attributes, or a plain (n, m) minimization array.
    Infeasible individuals rank behind every feasible one.
    """
    F, feas, viol = _as_matrix(results)
    n = len(F)
    ranks = np.full(n, -1, dtype=int)
    crowd = np.zeros(n)
    if n == 0:
        return ranks, crowd
    D = _domination_matrix(F, feas, viol)
    dominated_by = D.sum(axis=0)
    front = np.flatnonzero(dominated_by == 0)
    level = 0
    while front.size:
        ranks[front] = level
        crowd[front] = crowding_distance(F[front])
        dominated_by = dominated_by - D[front].sum(axis=0)
        dominated_by[ranks >= 0] = -1
        front = np.flatnonzero(dominated_by == 0)
        level += 1
    return ranks, crowd


def scalar_fitness(results, weights=(0.5, 0.25, 0.25)):
    """Weighted sum of min-max normalized objectives, oriented so higher is better.

    Each minimization objective contributes ``w * (1 - normalized)`` (which
    is ``w * normalized`` for the negated distance).  Objectives with no
    spread normalize to 0.5.  Normalization runs over the feasible members;
    infeasible individuals get fitness 0.
    """
    F, feas, _ = _as_matrix(results)
    n = len(F)
    if n == 0:
        raise ValueError("empty generation")
    w = np.asarray(weights, dtype=float)
    if w.shape != (F.shape[1],):
        raise ValueError(f"need {F.shape[1]} weights, got {w.shape}")
    fitness = np.zeros(n)
    pool = F[feas]
    if pool.size == 0:
        return fitness
    lo, hi = pool.min(axis=0), pool.max(axis=0)
    span = hi - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        norm = np.where(span > 0, (F - lo) / np.where(span > 0, span, 1.0), 0.5)
    fitness[feas] = ((1.0 - norm[feas]) * w).sum(axis=1)
    return fitness


def _survivor_order(ranks, crowd):
    return np.lexsort((-crowd, ranks))


class NSGA2(BaseEstimator):
    """Elitist non-dominated sorting GA on fixed-length bit strings.

    ``fit(problem)`` takes any object with an ``n_bits`` attribute and an
    ``evaluate(bits)`` method returning a result carrying ``objectives``
    (minimization), ``feasible`` and ``violation``.

    Fitted attributes: ``population_`` (bool array, pop_size x n_bits),
    ``results_``, ``ranks_``, ``crowding_``, ``fitness_``, ``archive_``
    (feasible rank-0 members, duplicates removed) and ``history_`` (one row
    per individual per generation).
    """

    def __init__(self, pop_size=50, n_offspring=None, p_cross=0.8, p_mut=0.2, generations=21,
                 weights=(0.5, 0.25, 0.25), seed=0):
        self.pop_size = pop_size
        self.n_offspring = n_offspring
        self.p_cross = p_cross
        self.p_mut = p_mut
        self.generations = generations
        self.weights = weights
        self.seed = seed

    @classmethod
    def from_params(cls, params):
        return cls(params.pop_A, params.off_B, params.p_cross, params.p_mut, params.generations,
                   params.weights, params.seed)

    def _check(self):
        if int(self.pop_size) < 2:
            raise ValueError("pop_size must be >= 2")
        check_probability(self.p_cross, "p_cross")
        check_probability(self.p_mut, "p_mut")
        if int(self.generations) < 1:
            raise ValueError("generations must be >= 1")

    def fit(self, problem, y=None):
        self._check()
        rng = np.random.default_rng(self.seed)
        m = int(problem.n_bits)
        A = int(self.pop_size)
        B = A if self.n_offspring is None else int(self.n_offspring)

        pop = rng.random((A, m)) < 0.5
        results = [problem.evaluate(b) for b in pop]
        ranks, crowd = nondominated_sort(results)
        history = []
        self._record(history, 0, pop, results, ranks)
        for gen in range(1, int(self.generations)):
            children = self._offspring(pop, ranks, crowd, B, rng)
            child_results = [problem.evaluate(b) for b in children]
            merged = np.vstack([pop, children])
            merged_results = results + child_results
            m_ranks, m_crowd = nondominated_sort(merged_results)
            keep = _survivor_order(m_ranks, m_crowd)[:A]
            pop = merged[keep]
            results = [merged_results[i] for i in keep]
            ranks, crowd = nondominated_sort(results)
            self._record(history, gen, pop, results, ranks)

        self.population_ = pop
        self.results_ = results
        self.ranks_ = ranks
        self.crowding_ = crowd
        self.fitness_ = scalar_fitness(results, self._weights(results))
        self.history_ = history
        seen, archive = set(), []
        for bits, res, rank in zip(pop, results, ranks):
            key = tuple(bool(b) for b in bits)
            if rank == 0 and res.feasible and key not in seen:
                seen.add(key)
                archive.append((key, res))
        self.archive_ = archive
        return self

    def _weights(self, results):
        k = len(results[0].objectives)
        w = tuple(self.weights)
        if len(w) == k:
            return w
        return (1.0 / k,) * k

    def _record(self, history, gen, pop, results, ranks):
        fitness = scalar_fitness(results, self._weights(results))
        for i, (bits, res) in enumerate(zip(pop, results)):
            history.append({"gen": gen, "individual": i, "bits": "".join("1" if b else "0" for b in bits),
                            "result": res, "rank": int(ranks[i]), "fitness": float(fitness[i])})

    def _tournament(self, ranks, crowd, rng):
        a, b = rng.integers(0, len(ranks), size=2)
        if ranks[a] != ranks[b]:
            return a if ranks[a] < ranks[b] else b
        if crowd[a] != crowd[b]:
            return a if crowd[a] > crowd[b] else b
        return a

    def _offspring(self, pop, ranks, crowd, B, rng):
        m = pop.shape[1]
        kids = []
        while len(kids) < B:
            p1 = pop[self._tournament(ranks, crowd, rng)].copy()
            p2 = pop[self._tournament(ranks, crowd, rng)].copy()
            if m > 1 and rng.random() < self.p_cross:
                cut = int(rng.integers(1, m))
                p1[cut:], p2[cut:] = p2[cut:].copy(), p1[cut:].copy()
            for child in (p1, p2):
                flips = rng.random(m) < self.p_mut
                child ^= flips
                kids.append(child)
        return np.array(kids[:B], dtype=bool)


@dataclass
class EvolutionResult:
    archive: list
    history: list
    estimator: NSGA2 = field(repr=False, default=None)

    def history_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["gen", "individual", "bits", "f1", "f2", "f3", "feasible", "rank", "fitness"])
        for row in self.history:
            res = row["result"]
            writer.writerow([row["gen"], row["individual"], row["bits"], fmt(res.f1), fmt(res.f2),
                             fmt(res.f3), int(res.feasible), row["rank"], fmt(row["fitness"])])
        return buf.getvalue()

    def archive_json(self):
        items = [{"bits": "".join("1" if b else "0" for b in bits), **res.to_dict()}
                 for bits, res in self.archive]
        return json.dumps({"archive": items}, indent=2, sort_keys=True)


def evolve(params, scenario, alpha_node=15.0, pre_settle=1.0, distance="progress"):
    """Run the attachment-layout search; returns the final archive and full history."""
    check_positive(alpha_node, "alpha_node")
    problem = ClimbConfigProblem(scenario, alpha_node, pre_settle, distance)
    est = NSGA2.from_params(params).fit(problem)
    return EvolutionResult(est.archive_, est.history_, est)
