"""Command-line entry point: ``tetherclimb <subcommand> [options]``.

Subcommands: simulate, hopsolve, surface, evolve, plan.

Every run resolves a configuration (built-in defaults, then ``--config``,
then explicit flags), writes its outputs into ``--out`` and records a
``manifest.json`` there.  The manifest's ``config`` block alone reproduces
the run: pass it back with ``--manifest``.  The default output directory is
taken from ``$TETHERCLIMB_OUT`` when ``--out`` is omitted.

Exit status: 0 success, 1 domain failure (infeasible hop, planning failure
or timeout), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, gait, grip, plotdata
from .evo import GAParams, evolve
from .planner import PlanningError, PlanProblem, SeparationPlanner, validate_path
from .scenario import ConfigError, ScenarioSpec, climb_down_scenario, climb_up_scenario
from .terrain import export_heightmap, gradient_obstacles, load_heightmap, two_ridge_heightmap
from .trajectory import fmt

OUT_ENV = "TETHERCLIMB_OUT"
DEFAULT_OUT = "tetherclimb-out"
PRESETS = {"climb-up": climb_up_scenario, "climb-down": climb_down_scenario}
EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class DomainError(Exception):
    def __init__(self, payload):
        super().__init__(payload.get("error", "domain failure"))
        self.payload = payload


def _read_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"{what} not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _merge(base, override):
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


class _Run:
    """Collects outputs and timings for one invocation, then writes the manifest."""

    def __init__(self, subcommand, out_dir, config):
        self.subcommand = subcommand
        self.out_dir = out_dir
        self.config = config
        self.outputs = []
        self.timings = {}
        self.seeds = {}
        self.inputs = {}
        self._t0 = time.perf_counter()
        os.makedirs(out_dir, exist_ok=True)

    def write(self, name, text):
        path = os.path.join(self.out_dir, name)
        mode = "wb" if isinstance(text, bytes) else "w"
        with open(path, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(text)
        self.outputs.append(name)
        return path

    def finish(self, status="ok"):
        self.timings.setdefault("total_s", time.perf_counter() - self._t0)
        manifest = {
            "subcommand": self.subcommand,
            "version": __version__,
            "status": status,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "timings": self.timings,
        }
        with open(os.path.join(self.out_dir, "manifest.json"), "w") as fh:
            fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------- simulate

def _scenario_config(args):
    if getattr(args, "scenario", None):
        try:
            sc = ScenarioSpec.load(args.scenario)
        except FileNotFoundError:
            raise UsageError(f"scenario file not found: {args.scenario}") from None
    else:
        sc = PRESETS[args.preset]()
    data = sc.to_dict()
    ctl = {}
    for flag, key in (("duration", "duration"), ("dt", "dt"), ("n_hops", "n_hops"),
                      ("sample_every", "sample_every")):
        value = getattr(args, flag, None)
        if value is not None:
            ctl[key] = value
    if ctl:
        data = _merge(data, {"controller": ctl})
    ScenarioSpec.from_dict(data)
    return data


def _run_simulate(config, run):
    sc = ScenarioSpec.from_dict(config["scenario"])
    run.seeds["scenario"] = sc.seed
    ctl = sc.controller
    state = sc.initial_state()
    n_hops = gait.hops_that_fit(sc) if ctl.n_hops is None else ctl.n_hops
    try:
        schedule = gait.plan_climb_sequence(state, ctl.goal_dir, ctl.hop_len, n_hops, sc)
    except gait.HopInfeasible as exc:
        raise DomainError({"error": "hop infeasible", "required_thrust": exc.required_thrust,
                           "t_max": exc.t_max, "robot": exc.robot, "hop": exc.hop}) from None
    t0 = time.perf_counter()
    traj = gait.run_episode(sc, schedule, state=state)
    run.timings["simulation_s"] = time.perf_counter() - t0
    run.write("trajectory.csv", traj.to_csv())
    run.write("summary.json", traj.summary_json() + "\n")
    run.write("staircase.csv", plotdata.staircase_csv(traj))
    s = traj.summary()
    return f"payload moved {np.round(s['payload_displacement'], 3).tolist()} m in {s['t_final']:.3f} s"


# --------------------------------------------------------------------------- hopsolve

HOP_DEFAULTS = {"r_0": [0.0, 0.0, 0.0], "r_tau": [0.0, 0.55, 0.0], "m_r": 1.0, "t_max": 30.0,
                "tau_bounds": [0.2, 0.6], "slope_deg": 15.0, "g": 9.81}


def _hop_config(args):
    cfg = dict(HOP_DEFAULTS)
    if args.config:
        extra = _read_json(args.config, "config")
        unknown = set(extra) - set(HOP_DEFAULTS)
        if unknown:
            raise UsageError(f"unknown hopsolve config keys: {sorted(unknown)}")
        cfg.update(extra)
    for flag in ("r_0", "r_tau", "m_r", "t_max", "tau_bounds", "slope_deg", "g"):
        value = getattr(args, flag)
        if value is not None:
            cfg[flag] = list(value) if isinstance(value, (list, tuple)) else value
    return cfg


def _run_hopsolve(config, run):
    th = math.radians(config["slope_deg"])
    fg = [0.0, -config["g"] * math.sin(th), -config["g"] * math.cos(th)]
    try:
        problem = gait.HopProblem(config["r_0"], config["r_tau"], config["m_r"], fg,
                                  config["t_max"], tuple(config["tau_bounds"]))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    try:
        sol = gait.solve_hop(problem)
    except gait.HopInfeasible as exc:
        raise DomainError({"error": "hop infeasible", "required_thrust": exc.required_thrust,
                           "t_max": exc.t_max}) from None
    run.write("hop.json", _dump(sol.to_dict()))
    return json.dumps(sol.to_dict(), sort_keys=True)


# --------------------------------------------------------------------------- surface

SURFACE_DEFAULTS = {"target_rms": 100e-6, "extent": 1e-3, "resolution": 2e-6, "seed": 0,
                    "corr_length": None, "r_s": [10e-6, 50e-6, 100e-6], "psi_load": 0.0,
                    "mu_f": 0.5, "row": 0, "spine": None}


def _surface_config(args):
    cfg = dict(SURFACE_DEFAULTS)
    if args.config:
        extra = _read_json(args.config, "config")
        unknown = set(extra) - set(SURFACE_DEFAULTS)
        if unknown:
            raise UsageError(f"unknown surface config keys: {sorted(unknown)}")
        cfg.update(extra)
    for flag in ("target_rms", "extent", "resolution", "seed", "corr_length", "r_s", "psi_load",
                 "mu_f", "row"):
        value = getattr(args, flag)
        if value is not None:
            cfg[flag] = value
    if args.sigma_max is not None:
        cfg["spine"] = {"sigma_max": args.sigma_max, "E_mod": args.E_mod, "nu": args.nu,
                        "count_s": args.count_s}
    return cfg


def _run_surface(config, run):
    run.seeds["surface"] = config["seed"]
    try:
        surf = grip.gen_surface(config["target_rms"], config["extent"], config["resolution"],
                                config["seed"], config["corr_length"])
        psi_min = grip.min_grip_angle(config["psi_load"], config["mu_f"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    row = int(config["row"])
    if not 0 <= row < surf.shape[0]:
        raise UsageError(f"row {row} outside surface with {surf.shape[0]} rows")
    radii = [float(r) for r in config["r_s"]]
    run.write("surface.csv", surf.to_csv())
    run.write("profile.csv", plotdata.profile_csv(surf.profile(row), surf.resolution, radii, psi_min))
    counts = {}
    for r in radii:
        det = grip.GripSiteDetector(r, surf.resolution, config["psi_load"], config["mu_f"])
        counts[plotdata.radius_label(r)] = int(det.fit_transform(surf.heights).sum())
    report = {"rms": surf.rms, "psi_min": psi_min, "site_counts": counts}
    if config["spine"]:
        loads = {}
        for r in radii:
            try:
                spine = grip.SpineModel(r, psi_load=config["psi_load"], mu_f=config["mu_f"], **config["spine"])
            except (TypeError, ValueError) as exc:
                raise UsageError(f"spine: {exc}") from None
            loads[plotdata.radius_label(r)] = grip.aggregate_load(spine, surf)
        report["aggregate_load"] = loads
    run.write("sites.json", _dump(report))
    return "grip sites " + ", ".join(f"{k}: {v}" for k, v in counts.items())


# --------------------------------------------------------------------------- evolve

def _evolve_config(args):
    data = _scenario_config(args)
    ga = {"pop_A": 50, "off_B": None, "p_cross": 0.8, "p_mut": 0.2, "generations": 21,
          "weights": [0.5, 0.25, 0.25], "seed": args.seed}
    cfg = {"scenario": data, "ga": ga, "alpha_node": 15.0, "pre_settle": 1.0, "distance": "progress"}
    if args.config:
        extra = _read_json(args.config, "config")
        unknown = set(extra) - set(cfg)
        if unknown:
            raise UsageError(f"unknown evolve config keys: {sorted(unknown)}")
        cfg = _merge(cfg, extra)
        cfg["ga"]["seed"] = args.seed
    for flag, key in (("pop", "pop_A"), ("offspring", "off_B"), ("p_cross", "p_cross"),
                      ("p_mut", "p_mut"), ("generations", "generations"), ("weights", "weights")):
        value = getattr(args, flag)
        if value is not None:
            cfg["ga"][key] = value
    for flag in ("alpha_node", "pre_settle", "distance"):
        value = getattr(args, flag)
        if value is not None:
            cfg[flag] = value
    _ga_params(cfg["ga"])
    return cfg


def _ga_params(ga):
    kw = dict(ga)
    kw["weights"] = tuple(kw["weights"])
    try:
        return GAParams(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"ga: {exc}") from None


def _run_evolve(config, run):
    params = _ga_params(config["ga"])
    sc = ScenarioSpec.from_dict(config["scenario"])
    run.seeds["ga"] = params.seed
    t0 = time.perf_counter()
    result = evolve(params, sc, config["alpha_node"], config["pre_settle"], config["distance"])
    run.timings["evolution_s"] = time.perf_counter() - t0
    run.write("history.csv", result.history_csv())
    run.write("fitness.csv", plotdata.fitness_csv(result.history))
    run.write("archive.json", result.archive_json() + "\n")
    return f"{len(result.archive)} archive members after {params.generations} generations"


# --------------------------------------------------------------------------- plan

PLAN_DEFAULT_PROBLEM = {
    "starts": [[7.6, 1.0], [8.0, 1.6], [8.4, 1.0]],
    "goals": [[7.6, 14.5], [8.0, 15.1], [8.4, 14.5]],
    "sep_p": 2.0, "robot_radius": 0.2, "payload_radius": 0.5, "max_hop": 1.0, "time_budget": 5.0,
}


def _plan_config(args):
    cfg = {"heightmap": {"path": None, "synthetic": "two-ridge", "cell_size": None, "vertical_scale": None},
           "grad_threshold": 0.5, "problem": dict(PLAN_DEFAULT_PROBLEM),
           "planner": {"payload_follow": "centroid", "payload_offset": 1.0}, "seed": args.seed}
    if args.config:
        extra = _read_json(args.config, "config")
        unknown = set(extra) - set(cfg)
        if unknown:
            raise UsageError(f"unknown plan config keys: {sorted(unknown)}")
        cfg = _merge(cfg, extra)
        cfg["seed"] = args.seed
    if args.problem:
        cfg["problem"] = _merge(cfg["problem"], _read_json(args.problem, "problem"))
    if args.heightmap:
        cfg["heightmap"] = {"path": os.path.abspath(args.heightmap), "synthetic": None,
                            "cell_size": args.cell_size, "vertical_scale": args.vertical_scale}
    if args.grad_threshold is not None:
        cfg["grad_threshold"] = args.grad_threshold
    if args.time_budget is not None:
        cfg["problem"]["time_budget"] = args.time_budget
    if args.payload_follow is not None:
        cfg["planner"]["payload_follow"] = args.payload_follow
    cfg["export_mask"] = bool(args.export_mask) or bool(cfg.get("export_mask", False))
    return cfg


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _run_plan(config, run):
    hm_cfg = config["heightmap"]
    try:
        if hm_cfg.get("path"):
            hm = load_heightmap(hm_cfg["path"], hm_cfg.get("cell_size"), hm_cfg.get("vertical_scale"))
            run.inputs["heightmap"] = {"path": hm_cfg["path"], "sha256": _sha256(hm_cfg["path"])}
        elif hm_cfg.get("synthetic") == "two-ridge":
            hm = two_ridge_heightmap()
        else:
            raise UsageError("plan needs --heightmap or heightmap.synthetic = 'two-ridge'")
        mask = gradient_obstacles(hm, config["grad_threshold"])
        problem = PlanProblem.from_dict(config["problem"])
        planner = SeparationPlanner(seed=config["seed"], **config["planner"]).fit(mask)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    run.seeds["planner"] = config["seed"]
    if config.get("export_mask"):
        run.write("mask.csv", mask.to_csv())
    if hm_cfg.get("synthetic"):
        tmp = os.path.join(run.out_dir, "heightmap.csv")
        export_heightmap(hm, tmp)
        run.outputs.append("heightmap.csv")
    t0 = time.perf_counter()
    try:
        path = planner.predict(problem)
    except PlanningError as exc:
        run.timings["planning_s"] = time.perf_counter() - t0
        stats = {k: v for k, v in exc.stats.items() if k != "planning_time_s"}
        raise DomainError({"error": type(exc).__name__, "message": str(exc), "stats": stats}) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    run.timings["planning_s"] = time.perf_counter() - t0
    for i in range(3):
        run.write(f"path_robot{i}.csv", path.robot_csv(i))
    run.write("path_payload.csv", path.payload_csv())
    run.write("path_points.csv", plotdata.path_csv(path))
    meta = {k: v for k, v in path.metadata().items() if k != "planning_time_s"}
    meta["violations"] = validate_path(path, mask, problem)
    run.write("path.json", _dump(meta))
    return f"path with {len(path)} waypoints, centroid length {fmt(round(path.centroid_length, 3))} m"


# --------------------------------------------------------------------------- parser

def _default_out():
    return os.environ.get(OUT_ENV, DEFAULT_OUT)


def build_parser():
    parser = argparse.ArgumentParser(prog="tetherclimb", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"tetherclimb {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    sub.required = True

    def common(p, seed_required=False):
        p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--manifest", help="replay the config block of an earlier manifest.json")
        if seed_required:
            p.add_argument("--seed", type=int, help="required unless --manifest is given")

    def scenario_flags(p):
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--preset", choices=sorted(PRESETS), default="climb-up")
        p.add_argument("--duration", type=float)
        p.add_argument("--dt", type=float)
        p.add_argument("--n-hops", dest="n_hops", type=int)
        p.add_argument("--sample-every", dest="sample_every", type=int)

    p = sub.add_parser("simulate", help="run a climbing episode")
    common(p)
    scenario_flags(p)

    p = sub.add_parser("hopsolve", help="minimum-thrust constant-thrust hop")
    common(p)
    p.add_argument("--r0", dest="r_0", type=float, nargs=3, metavar=("X", "Y", "Z"))
    p.add_argument("--rtau", dest="r_tau", type=float, nargs=3, metavar=("X", "Y", "Z"))
    p.add_argument("--m-r", dest="m_r", type=float)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--tau-bounds", dest="tau_bounds", type=float, nargs=2, metavar=("MIN", "MAX"))
    p.add_argument("--slope-deg", dest="slope_deg", type=float)
    p.add_argument("--g", type=float)

    p = sub.add_parser("surface", help="rough surface and grip-site statistics")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--rms", dest="target_rms", type=float)
    p.add_argument("--extent", type=float)
    p.add_argument("--resolution", type=float)
    p.add_argument("--corr-length", dest="corr_length", type=float)
    p.add_argument("--r-s", dest="r_s", type=float, nargs="+")
    p.add_argument("--psi-load", dest="psi_load", type=float)
    p.add_argument("--mu-f", dest="mu_f", type=float)
    p.add_argument("--row", type=int)
    p.add_argument("--sigma-max", dest="sigma_max", type=float)
    p.add_argument("--E-mod", dest="E_mod", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--count-s", dest="count_s", type=int, default=100)

    p = sub.add_parser("evolve", help="NSGA-II search over tether attachment layouts")
    common(p, seed_required=True)
    scenario_flags(p)
    p.add_argument("--pop", type=int)
    p.add_argument("--offspring", type=int)
    p.add_argument("--p-cross", dest="p_cross", type=float)
    p.add_argument("--p-mut", dest="p_mut", type=float)
    p.add_argument("--generations", type=int)
    p.add_argument("--weights", type=float, nargs=3)
    p.add_argument("--alpha-node", dest="alpha_node", type=float)
    p.add_argument("--pre-settle", dest="pre_settle", type=float)
    p.add_argument("--distance", choices=("progress", "norm"))

    p = sub.add_parser("plan", help="three-robot path over a heightmap")
    common(p, seed_required=True)
    p.add_argument("--heightmap", help="CSV or 16-bit PGM heightmap (default: synthetic two-ridge map)")
    p.add_argument("--cell-size", dest="cell_size", type=float)
    p.add_argument("--vertical-scale", dest="vertical_scale", type=float)
    p.add_argument("--problem", help="JSON plan problem (starts, goals, sep_p, ...)")
    p.add_argument("--grad-threshold", dest="grad_threshold", type=float)
    p.add_argument("--time-budget", dest="time_budget", type=float)
    p.add_argument("--payload-follow", dest="payload_follow", choices=("centroid", "offset"))
    p.add_argument("--export-mask", dest="export_mask", action="store_true")
    return parser


_HANDLERS = {
    "simulate": (lambda a: {"scenario": _scenario_config(a)}, _run_simulate),
    "hopsolve": (_hop_config, _run_hopsolve),
    "surface": (_surface_config, _run_surface),
    "evolve": (_evolve_config, _run_evolve),
    "plan": (_plan_config, _run_plan),
}


def _resolve(args):
    if args.manifest:
        manifest = _read_json(args.manifest, "manifest")
        if manifest.get("subcommand") != args.subcommand:
            raise UsageError(f"manifest is for {manifest.get('subcommand')!r}, not {args.subcommand!r}")
        return manifest["config"]
    if args.subcommand in ("evolve", "plan") and args.seed is None:
        raise UsageError("--seed is required")
    if args.subcommand == "simulate" and args.config and not args.scenario:
        args.scenario = args.config
    return _HANDLERS[args.subcommand][0](args)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    out_dir = args.out or _default_out()
    try:
        config = _resolve(args)
    except (UsageError, ConfigError) as exc:
        print(f"tetherclimb {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    run = _Run(args.subcommand, out_dir, config)
    try:
        message = _HANDLERS[args.subcommand][1](config, run)
    except (UsageError, ConfigError) as exc:
        run.finish("usage-error")
        print(f"tetherclimb {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        run.write("error.json", _dump(exc.payload))
        run.finish("failed")
        print(json.dumps(exc.payload, sort_keys=True))
        return EXIT_DOMAIN
    run.finish()
    print(message)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
