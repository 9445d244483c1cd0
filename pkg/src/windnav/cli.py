"""Command-line front end: ``windnav downscale``, ``windnav plan`` and ``windnav bench``.

Exit codes: 0 success, 1 input error, 2 downscaling finished without solver
convergence (output still written), 3 planning found no solution (result
still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .bench import PlannerConfig, SCENARIOS, make_scenario, run_benchmark, write_csv
from .downscaler import DEFAULT_ALPHA, PRECONDITIONERS, downscale
from .dubins import AircraftParams, AirplaneState
from .dubins_wind import WindIterParams, simulate
from .planner import OBJECTIVES, PlanProblem, plan
from .terrain import BoundingBox, TerrainFormatError, load_dem
from .wind_grid import SPACING_KINDS, load_field, load_profiles, save_field

log = logging.getLogger("windnav")

CONFIG_ENV = "WINDNAV_CONFIG"
EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_NO_SOLUTION = 0, 1, 2, 3


class InputError(Exception):
    """Bad user input; reported with exit code 1."""


@dataclass(frozen=True)
class Config:
    """Defaults for every downscaler and planner knob; a JSON config file overrides them."""

    alpha: float = DEFAULT_ALPHA
    n_z: int = 11
    spacing: str = "linear"
    domain_factor: float = 3.5
    preconditioner: str = "jacobi"
    solver_tol: float = 1e-8
    v_air: float = 9.0
    gamma_max: float = 0.15
    r_turn: float = 25.0
    bbox: float = 30.0
    d_icc: float = 10.0
    k_rrg: float = 2.0 * math.e
    goal_bias: float = 0.05
    dz_shift_k: float = 5.0
    wind_max_iter: int = 12
    wind_tol: float = 1.0
    d_max: float | None = None

    def __post_init__(self):
        positive = ("alpha", "domain_factor", "solver_tol", "v_air", "r_turn", "bbox", "d_icc",
                    "k_rrg", "dz_shift_k", "wind_tol")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InputError(f"config value {name} must be positive, got {getattr(self, name)}")
        if self.n_z < 2:
            raise InputError(f"config value n_z must be at least 2, got {self.n_z}")
        if self.spacing not in SPACING_KINDS:
            raise InputError(f"config value spacing must be one of {SPACING_KINDS}")
        if self.preconditioner not in PRECONDITIONERS:
            raise InputError(f"config value preconditioner must be one of {PRECONDITIONERS}")
        if not 0 < self.gamma_max < math.pi / 2:
            raise InputError("config value gamma_max must lie in (0, pi/2)")
        if not 0 <= self.goal_bias < 1:
            raise InputError("config value goal_bias must lie in [0, 1)")
        if self.wind_max_iter < 1:
            raise InputError("config value wind_max_iter must be at least 1")
        if self.d_max is not None and not self.d_max > 0:
            raise InputError("config value d_max must be positive")

    @property
    def aircraft(self) -> AircraftParams:
        return AircraftParams(self.v_air, self.gamma_max, self.r_turn)

    def updated(self, values: dict) -> "Config":
        known = {f.name for f in fields(self)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise InputError(f"unknown config keys: {unknown}")
        return replace(self, **values)


def load_config(path=None) -> Config:
    """Defaults, overridden by ``path`` or else by the file named in ``WINDNAV_CONFIG``."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return Config()
    try:
        values = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(values, dict):
        raise InputError(f"config {path} must hold a JSON object")
    return Config().updated(values)


def _dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


# ---------------------------------------------------------------------------
# downscale


def cmd_downscale(args, cfg: Config) -> int:
    cfg = cfg.updated({k: v for k, v in (("alpha", args.alpha), ("n_z", args.nz),
                                         ("spacing", args.spacing),
                                         ("domain_factor", args.domain_factor),
                                         ("preconditioner", args.preconditioner))
                       if v is not None})
    try:
        dem = load_dem(args.dem)
        profiles = load_profiles(args.profiles)
    except (OSError, ValueError, TerrainFormatError) as exc:
        raise InputError(str(exc)) from exc
    res = downscale(dem, profiles, alpha=cfg.alpha, n_z=cfg.n_z, spacing=cfg.spacing,
                    domain_factor=cfg.domain_factor, tol=cfg.solver_tol, max_iter=args.max_iter,
                    preconditioner=cfg.preconditioner, top=args.top)
    save_field(res.field, args.out)
    if args.diagnostics:
        diag = json.loads(json.dumps(res.diagnostics))
        if not args.timing:
            diag["solver"].pop("seconds", None)
        _dump(diag, args.diagnostics)
    div = res.divergence
    log.info("solver %s after %d iterations; max |div| %.3g", "converged" if res.report.converged
             else "did not converge", res.report.iterations, div.max)
    return EXIT_OK if res.report.converged else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# plan

PROBLEM_KEYS = {"start", "goal", "objective", "budget", "knobs", "seed", "map", "field", "bounds"}
KNOB_KEYS = {"d_max", "d_icc", "k_rrg", "goal_bias", "dz_shift_k", "obstacle_aware", "informed",
             "custom_knn", "two_way_knn", "preevaluate", "bbox", "v_air", "gamma_max", "r_turn",
             "wind_max_iter", "wind_tol", "safety_margin"}


def _state(value, name) -> AirplaneState:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise InputError(f"{name} must be [x, y, z, heading]")
    try:
        return AirplaneState(*(float(v) for v in value))
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name} must hold numbers") from exc


def load_problem(path, cfg: Config) -> tuple:
    """Parse a problem file; returns ``(PlanProblem, field)``.

    Map and field paths are resolved relative to the problem file. Without
    ``bounds`` the state space spans the map horizontally and reaches from
    the lowest terrain to 200 m above the highest terrain or endpoint.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read problem {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError("problem file must hold a JSON object")
    unknown = sorted(set(data) - PROBLEM_KEYS)
    if unknown:
        raise InputError(f"unknown problem keys: {unknown}")
    for key in ("start", "goal", "map"):
        if key not in data:
            raise InputError(f"problem is missing {key!r}")
    knobs = dict(data.get("knobs") or {})
    bad = sorted(set(knobs) - KNOB_KEYS)
    if bad:
        raise InputError(f"unknown planner knobs: {bad}")
    cfg = cfg.updated({k: knobs.pop(k) for k in list(knobs) if k in
                       {"bbox", "v_air", "gamma_max", "r_turn", "wind_max_iter", "wind_tol",
                        "d_icc", "k_rrg", "goal_bias", "dz_shift_k", "d_max"}})
    objective = data.get("objective", "shortest")
    objective = "time" if objective == "time_optimal" else objective
    if objective not in OBJECTIVES:
        raise InputError(f"objective must be one of {OBJECTIVES} or 'time_optimal'")
    base = path.parent
    try:
        hmap = load_dem(base / data["map"], safety_margin=float(knobs.pop("safety_margin", 0.0)))
        field = load_field(base / data["field"]) if data.get("field") else None
    except (OSError, ValueError, TerrainFormatError) as exc:
        raise InputError(str(exc)) from exc
    start, goal = _state(data["start"], "start"), _state(data["goal"], "goal")
    if data.get("bounds") is not None:
        bounds = data["bounds"]
    else:
        x0, x1, y0, y1 = hmap.extent
        z_top = max(hmap.max_height, start.z, goal.z) + 200.0
        bounds = ((x0, y0, float(hmap.heights.min())), (x1, y1, z_top))
    budget = data.get("budget") or {"max_iterations": 1000}
    if not isinstance(budget, dict) or not set(budget) <= {"max_iterations", "max_seconds"}:
        raise InputError("budget must be an object with max_iterations and/or max_seconds")
    try:
        pb = PlanProblem(start, goal, hmap, bounds, field=field, aircraft=cfg.aircraft,
                         objective=objective, bbox=BoundingBox(cfg.bbox),
                         max_iterations=budget.get("max_iterations"),
                         max_seconds=budget.get("max_seconds"), d_max=cfg.d_max, d_icc=cfg.d_icc,
                         k_rrg=cfg.k_rrg, goal_bias=cfg.goal_bias, dz_shift_k=cfg.dz_shift_k,
                         wind_iter=WindIterParams(cfg.wind_max_iter, cfg.wind_tol),
                         seed=int(data.get("seed", 0)), **knobs)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid problem: {exc}") from exc
    return pb, field


def write_waypoints(result, spacing: float, path) -> None:
    """Ground states of the planned path every ``spacing`` meters of air path, as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "heading"])
        for i, m in enumerate(result.motions):
            n = max(1, math.ceil(m.length / spacing))
            ts = [k / n for k in range(0 if i == 0 else 1, n + 1)]
            for row in m.states_at(ts):
                w.writerow([repr(float(v)) for v in row])


def cmd_plan(args, cfg: Config) -> int:
    pb, field = load_problem(args.problem, cfg)
    res = plan(pb)
    out = res.to_dict(include_timing=args.timing)
    if res.solved:
        sim = simulate(res.states, field, pb.terrain, pb.d_icc, pb.bbox, pb.aircraft, pb.wind_iter)
        out["simulation"] = sim.to_dict()
    else:
        out["simulation"] = None
    _dump(out, args.out)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "cost"])
            w.writerows(res.trace)
    if args.waypoints and res.solved:
        write_waypoints(res, args.spacing, args.waypoints)
    if not res.solved:
        log.warning("no solution within the budget")
        return EXIT_NO_SOLUTION
    log.info("cost %.6g after %d iterations; simulated feasible: %s", res.cost, res.iterations,
             out["simulation"]["feasible"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def cmd_bench(args, cfg: Config) -> int:
    if args.scenario not in SCENARIOS:
        raise InputError(f"unknown scenario {args.scenario!r}; known: {sorted(SCENARIOS)}")
    sc = make_scenario(args.scenario)
    if sc.start is None:
        raise InputError(f"scenario {args.scenario!r} has no planning query")
    objectives = args.objectives.split(",")
    for o in objectives:
        if o not in OBJECTIVES:
            raise InputError(f"objective must be one of {OBJECTIVES}, got {o!r}")
    factors = [float(f) for f in args.bbox_factors.split(",")]
    configs = [PlannerConfig(f"{o}" if len(factors) == 1 else f"{o}-bbox{f:g}x", o,
                             bbox_factor=f) for o in objectives for f in factors]
    if args.budget is not None:
        budget = {"max_iterations": None, "max_seconds": args.budget}
    else:
        budget = {"max_iterations": args.iterations, "max_seconds": None}
    result = run_benchmark(sc, configs, seeds=args.seeds, jobs=args.jobs,
                           reference_iterations=args.reference_iterations,
                           include_timing=args.timing, **budget)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(result, out / "benchmark.json")
    write_csv(result, out)
    for c in result["configs"]:
        s = c["summary"]
        log.info("%s: %d/%d feasible, cost quartiles %s", c["name"], s["feasible"], s["runs"],
                 s["cost_quartiles"])
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="windnav", description=__doc__.splitlines()[0])
    p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("downscale", help="mass-consistent wind downscaling over a DEM")
    d.add_argument("--dem", required=True, help="ESRI ASCII grid (.asc) or x,y,z CSV")
    d.add_argument("--profiles", required=True, help="JSON wind profiles")
    d.add_argument("--alpha", type=float)
    d.add_argument("--nz", type=int)
    d.add_argument("--spacing", choices=SPACING_KINDS)
    d.add_argument("--domain-factor", type=float)
    d.add_argument("--top", type=float, help="absolute domain top altitude")
    d.add_argument("--preconditioner", choices=PRECONDITIONERS)
    d.add_argument("--max-iter", type=int)
    d.add_argument("--out", required=True, help=".csv for text output, anything else for binary")
    d.add_argument("--diagnostics", help="diagnostics JSON path")
    d.add_argument("--timing", action="store_true", help="keep solver wall time in diagnostics")
    d.set_defaults(func=cmd_downscale)

    pl = sub.add_parser("plan", help="plan a path for a problem file")
    pl.add_argument("--problem", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--trace", help="convergence trace CSV")
    pl.add_argument("--waypoints", help="ground waypoint CSV")
    pl.add_argument("--spacing", type=float, default=10.0, help="waypoint spacing [m]")
    pl.add_argument("--timing", action="store_true", help="include wall-clock figures")
    pl.set_defaults(func=cmd_plan)

    b = sub.add_parser("bench", help="run a benchmark scenario over several seeds")
    b.add_argument("--scenario", required=True)
    b.add_argument("--seeds", type=int, default=20)
    b.add_argument("--budget", type=float, help="wall-clock budget per run [s]")
    b.add_argument("--iterations", type=int, default=200,
                   help="iteration budget per run, used when --budget is not given")
    b.add_argument("--objectives", default="shortest,time")
    b.add_argument("--bbox-factors", default="1")
    b.add_argument("--reference-iterations", type=int)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--timing", action="store_true", help="include wall-clock figures")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except InputError as exc:
        print(f"windnav: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
