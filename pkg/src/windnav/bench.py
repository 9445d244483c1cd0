"""Scenario generators, analytic oracles, error metrics and the benchmark harness.

Downscaling scenarios (``valley``, ``ramp``, ``hemisphere``) carry a
downscaled field; planning scenarios (``empty``, ``w0`` ... ``w3``,
``ridge-gale``) carry a synthetic field on a terrain-following grid plus
start and goal states. Wind geometries that are only known from figures are
marked ``reconstructed`` in the scenario metadata.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .downscaler import DownscaleResult, downscale
from .dubins import AircraftParams, AirplaneState
from .dubins_wind import simulate
from .planner import PlanProblem, heuristic_many, plan, true_cost_via
from .terrain import BoundingBox, HeightMap
from .wind_grid import WindField, WindProfile, build_grid, field_from_function, uniform_profile


DEFAULT_ITERATIONS = 200


@dataclass(eq=False)
class Scenario:
    """A fully materialized test case.

    ``bounds`` is ``((xmin, ymin, zmin), (xmax, ymax, zmax))`` for the
    planner state space. ``downscaled`` is set for the downscaling cases.
    """

    name: str
    terrain: HeightMap
    field: WindField | None
    start: AirplaneState | None = None
    goal: AirplaneState | None = None
    aircraft: AircraftParams = field(default_factory=AircraftParams)
    bounds: tuple | None = None
    bbox: BoundingBox = field(default_factory=BoundingBox)
    params: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    downscaled: DownscaleResult | None = None

    def with_bbox(self, side: float) -> "Scenario":
        """Copy with a different bounding box side (endpoints are kept)."""
        from dataclasses import replace
        return replace(self, bbox=BoundingBox(side))

    def problem(self, objective: str = "shortest", **knobs) -> PlanProblem:
        """Planning query for this scenario; ``knobs`` are passed to :class:`PlanProblem`."""
        if self.start is None or self.bounds is None:
            raise ValueError(f"scenario {self.name!r} is not a planning scenario")
        knobs.setdefault("max_iterations", DEFAULT_ITERATIONS)
        return PlanProblem(self.start, self.goal, self.terrain, self.bounds, field=self.field,
                           aircraft=self.aircraft, objective=objective, bbox=self.bbox, **knobs)

    def to_dict(self) -> dict:
        """JSON-ready summary; arrays are not included."""
        out = {
            "name": self.name,
            "params": self.params,
            "metadata": self.metadata,
            "terrain": {"origin": list(self.terrain.origin), "cell_size": self.terrain.cell_size,
                        "nx": self.terrain.nx, "ny": self.terrain.ny,
                        "max_height": self.terrain.max_height},
            "bbox": self.bbox.side,
            "aircraft": {"v_air": self.aircraft.v_air, "gamma_max": self.aircraft.gamma_max,
                         "r_turn": self.aircraft.r_turn},
        }
        if self.start is not None:
            out["start"] = [float(v) for v in self.start]
            out["goal"] = [float(v) for v in self.goal]
        if self.bounds is not None:
            out["bounds"] = [list(map(float, b)) for b in self.bounds]
        return out


# ---------------------------------------------------------------------------
# Terrain generators


def _grid_map(xs: np.ndarray, ys: np.ndarray, h: np.ndarray) -> HeightMap:
    r = float(xs[1] - xs[0])
    return HeightMap((xs[0] - r / 2, ys[0] - r / 2), r, h)


def _smoothstep(d):
    d = np.clip(d, 0.0, 1.0)
    return d * d * (3.0 - 2.0 * d)


def valley_terrain(half_length: float = 800.0, n: int = 41, inflow_halfwidth: float = 480.0,
                   height: float = 500.0, wall: float = 40.0, flat_center: float = 300.0,
                   taper: float = 200.0, constriction: float = 0.25) -> tuple:
    """Straight valley along x whose floor narrows to ``constriction`` of its inflow width.

    The floor half-width is ``inflow_halfwidth`` at the ends and shrinks with
    a squared-cosine taper to ``constriction * inflow_halfwidth`` over the
    central ``2 * flat_center`` meters. Walls rise with a smoothstep of
    horizontal width ``wall`` to ``height``.

    Returns ``(HeightMap, floor_halfwidth)`` where the second array is the
    floor half-width for every x node.
    """
    xs = np.linspace(-half_length, half_length, n)
    X, Y = np.meshgrid(xs, xs)
    ax = np.maximum(np.abs(xs) - flat_center, 0.0)
    c = np.where(ax < taper, np.cos(np.pi * ax / (2 * taper)) ** 2, 0.0)
    halfwidth = inflow_halfwidth * (1.0 - (1.0 - constriction) * c)
    h = height * _smoothstep((np.abs(Y) - halfwidth[None, :]) / wall)
    return _grid_map(xs, xs, h), halfwidth


def ramp_terrain(half_length: float = 800.0, half_width: float = 400.0, cell: float = 40.0,
                 height: float = 160.0, foot: float = -200.0, crest: float = 200.0) -> HeightMap:
    """Linear ramp along +x from ``foot`` to ``crest``, then a plateau at ``height``."""
    xs = np.arange(-half_length, half_length + cell / 2, cell)
    ys = np.arange(-half_width, half_width + cell / 2, cell)
    X, _ = np.meshgrid(xs, ys)
    h = height * np.clip((X - foot) / (crest - foot), 0.0, 1.0)
    return _grid_map(xs, ys, h)


def hemisphere_terrain(radius: float = 0.25, n: int = 41) -> HeightMap:
    """Hemisphere of ``radius`` at the origin of the unit square [-1, 1]^2."""
    xs = np.linspace(-1.0, 1.0, n)
    X, Y = np.meshgrid(xs, xs)
    return _grid_map(xs, xs, np.sqrt(np.clip(radius ** 2 - X ** 2 - Y ** 2, 0.0, None)))


def flat_terrain(size_x: float, size_y: float, cell: float, height: float = 0.0) -> HeightMap:
    nx = int(round(size_x / cell))
    ny = int(round(size_y / cell))
    return HeightMap((0.0, 0.0), cell, np.full((ny, nx), float(height)))


def ridge_terrain(size_x: float = 2000.0, size_y: float = 1000.0, cell: float = 25.0,
                  center: float = 1000.0, height: float = 200.0, half_width: float = 250.0) -> HeightMap:
    """Ridge across the map (constant in y) with a raised-cosine cross-section."""
    hm = flat_terrain(size_x, size_y, cell)
    xc, _ = hm.cell_centers()
    prof = np.where(np.abs(xc - center) < half_width,
                    height * np.cos(np.pi * (xc - center) / (2 * half_width)) ** 2, 0.0)
    return HeightMap(hm.origin, cell, np.broadcast_to(prof, (hm.ny, hm.nx)).copy())


def mountain_valley_terrain(size_x: float = 2400.0, size_y: float = 1200.0, cell: float = 30.0,
                            floor: float = 1550.0, rim: float = 2100.0,
                            floor_halfwidth: float = 250.0, slope_width: float = 300.0) -> HeightMap:
    """Alpine valley along x: flat floor at ``floor`` m, flanks up to ``rim`` m."""
    hm = flat_terrain(size_x, size_y, cell)
    _, yc = hm.cell_centers()
    d = (np.abs(yc - size_y / 2) - floor_halfwidth) / slope_width
    prof = floor + (rim - floor) * _smoothstep(d)
    return HeightMap(hm.origin, cell, np.broadcast_to(prof[:, None], (hm.ny, hm.nx)).copy())


# ---------------------------------------------------------------------------
# Synthetic wind fields


def _bands(speed: float, split_y: float, blend: float):
    def fn(p):
        s = speed * np.tanh((p[:, 1] - split_y) / blend)
        return np.column_stack([s, np.zeros_like(s), np.zeros_like(s)])
    return fn


def _updraft_column(speed: float, cx: float, cy: float, radius: float, blend: float):
    def fn(p):
        rho = np.hypot(p[:, 0] - cx, p[:, 1] - cy)
        w = speed * 0.5 * (1.0 - np.tanh((rho - radius) / blend))
        return np.column_stack([np.zeros_like(w), np.zeros_like(w), w])
    return fn


def _two_layers(speed: float, z_flip: float, blend: float):
    def fn(p):
        s = speed * np.tanh((p[:, 2] - z_flip) / blend)
        return np.column_stack([s, np.zeros_like(s), np.zeros_like(s)])
    return fn


def _gale(terrain: HeightMap, speed: float, layer: float, crest_fraction: float):
    h_crest = crest_fraction * terrain.max_height

    def fn(p):
        i, j = terrain.cell_index(p[:, 0], p[:, 1])
        h = terrain.heights[j, i]
        near_top = _smoothstep((h - h_crest) / (terrain.max_height - h_crest))
        in_layer = 0.5 * (1.0 - np.tanh((p[:, 2] - h - layer) / (0.25 * layer)))
        u = speed * near_top * in_layer
        return np.column_stack([u, np.zeros_like(u), np.zeros_like(u)])
    return fn


# ---------------------------------------------------------------------------
# Scenario construction


VALLEY_DEFAULTS = dict(half_length=800.0, n=41, inflow_halfwidth=480.0, height=500.0, wall=40.0,
                       flat_center=300.0, taper=200.0, constriction=0.25)
RAMP_DEFAULTS = dict(half_length=800.0, half_width=400.0, cell=40.0, height=160.0,
                     foot=-200.0, crest=200.0)


def _valley(alpha: float = 0.01, **kw) -> Scenario:
    p = {**VALLEY_DEFAULTS, **kw}
    hm, halfwidth = valley_terrain(**p)
    res = downscale(hm, [uniform_profile(0.0, 0.0, (5.0, 0.0, 0.0))], alpha=alpha)
    i_in = int(np.argmin(np.abs(res.field.grid.x + 0.75 * p["half_length"])))
    i_c = int(np.argmin(np.abs(res.field.grid.x)))
    meta = {"inflow_halfwidth": float(halfwidth[i_in]), "center_halfwidth": float(halfwidth[i_c]),
            "constriction": float(halfwidth[i_c] / halfwidth[i_in]), "inflow_x": float(res.field.grid.x[i_in]),
            "center_x": 0.0, "alpha": alpha}
    return Scenario("valley", hm, res.field, params={**p, "alpha": alpha}, metadata=meta,
                    downscaled=res)


def _ramp(alpha: float | None = None, **kw) -> Scenario:
    p = {**RAMP_DEFAULTS, **kw}
    hm = ramp_terrain(**p)
    slope = p["height"] / (p["crest"] - p["foot"])
    # stability from the expected vertical-to-horizontal wind ratio, which is the slope
    alpha = slope ** 2 if alpha is None else alpha
    res = downscale(hm, [uniform_profile(0.0, 0.0, (5.0, 0.0, 0.0))], alpha=alpha)
    meta = {"crest_x": p["crest"], "inflow_x": -0.75 * p["half_length"],
            "outflow_x": 0.75 * p["half_length"], "alpha": alpha}
    return Scenario("ramp", hm, res.field, params={**p, "alpha": alpha}, metadata=meta,
                    downscaled=res)


def _hemisphere(radius: float = 0.25, n: int = 41, n_z: int = 21, alpha: float = 1.0) -> Scenario:
    hm = hemisphere_terrain(radius, n)
    res = downscale(hm, [uniform_profile(0.0, 0.0, (1.0, 0.0, 0.0))], alpha=alpha, n_z=n_z, top=1.0)
    return Scenario("hemisphere", hm, res.field,
                    params={"radius": radius, "n": n, "n_z": n_z, "alpha": alpha, "u_inf": 1.0},
                    metadata={"radius": radius}, downscaled=res)


def _synthetic_field(hm: HeightMap, fn, n_z: int, top: float | None = None,
                     spacing: str = "linear") -> WindField:
    grid = build_grid(hm, n_z=n_z, spacing=spacing, top=top)
    return field_from_function(grid, fn)


def _empty() -> Scenario:
    hm = flat_terrain(1500.0, 1000.0, 50.0)
    return Scenario("empty", hm, None,
                    start=AirplaneState(250.0, 500.0, 100.0, 0.0),
                    goal=AirplaneState(1250.0, 500.0, 100.0, 0.0),
                    bounds=((0.0, 0.0, 0.0), (1500.0, 1000.0, 300.0)),
                    metadata={"optimum": 1000.0})


def _bands_scenario(name: str, speed: float) -> Scenario:
    hm = flat_terrain(2000.0, 1200.0, 50.0)
    wf = _synthetic_field(hm, _bands(speed, 600.0, 25.0), n_z=3, top=400.0)
    return Scenario(name, hm, wf,
                    start=AirplaneState(300.0, 350.0, 100.0, 0.0),
                    goal=AirplaneState(1700.0, 350.0, 100.0, 0.0),
                    bounds=((0.0, 0.0, 0.0), (2000.0, 1200.0, 300.0)),
                    params={"wind_speed": speed, "split_y": 600.0},
                    metadata={"reconstructed": True,
                              "layout": "headwind band y < 600 holds start and goal; tailwind band above"})


def _w2() -> Scenario:
    hm = flat_terrain(2000.0, 1000.0, 50.0)
    wf = _synthetic_field(hm, _updraft_column(1.0, 1000.0, 500.0, 250.0, 25.0), n_z=3, top=400.0)
    bbox = BoundingBox()
    z0 = bbox.side / 2.0  # lowest valid altitude over flat ground
    return Scenario("w2", hm, wf,
                    start=AirplaneState(200.0, 500.0, z0, 0.0),
                    goal=AirplaneState(1800.0, 500.0, z0, 0.0),
                    bounds=((0.0, 0.0, 0.0), (2000.0, 1000.0, 300.0)), bbox=bbox,
                    params={"updraft": 1.0, "column_center": [1000.0, 500.0], "column_radius": 250.0},
                    metadata={"reconstructed": True,
                              "layout": "start and goal at the lowest valid altitude on both sides of the column"})


def _w3() -> Scenario:
    hm = mountain_valley_terrain()
    wf = _synthetic_field(hm, _two_layers(6.0, 1850.0, 20.0), n_z=21, top=2600.0)
    return Scenario("w3", hm, wf,
                    start=AirplaneState(200.0, 600.0, 1700.0, 0.0),
                    goal=AirplaneState(2200.0, 600.0, 1700.0, 0.0),
                    bounds=((0.0, 0.0, 1500.0), (2400.0, 1200.0, 2400.0)),
                    params={"wind_speed": 6.0, "z_flip": 1850.0},
                    metadata={"reconstructed": True,
                              "layout": "synthetic alpine valley; tailwind above the flip altitude"})


def _ridge_gale() -> Scenario:
    hm = ridge_terrain()
    wf = _synthetic_field(hm, _gale(hm, 20.0, 40.0, 0.5), n_z=21, top=700.0)
    return Scenario("ridge-gale", hm, wf,
                    start=AirplaneState(150.0, 500.0, 150.0, 0.0),
                    goal=AirplaneState(1850.0, 500.0, 150.0, 0.0),
                    bounds=((0.0, 0.0, 0.0), (2000.0, 1000.0, 500.0)),
                    params={"gale_speed": 20.0, "gale_layer": 40.0, "ridge_height": 200.0},
                    metadata={"reconstructed": True,
                              "layout": "gale in a thin layer over the upper half of the ridge"})


SCENARIOS = {
    "valley": _valley,
    "ramp": _ramp,
    "hemisphere": _hemisphere,
    "empty": _empty,
    "w0": lambda speed=4.5: _bands_scenario("w0", speed),
    "w1": lambda speed=6.0: _bands_scenario("w1", speed),
    "w2": _w2,
    "w3": _w3,
    "ridge-gale": _ridge_gale,
}


def make_scenario(name: str, **kw) -> Scenario:
    """Build a named scenario; keyword arguments override generator parameters."""
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}") from None
    return factory(**kw)


# ---------------------------------------------------------------------------
# Oracles and metrics


def hemisphere_analytic(pos, u_inf: float = 1.0, radius: float = 0.25) -> np.ndarray:
    """Potential flow past a sphere of ``radius`` at the origin, free stream ``u_inf`` along +x.

    By symmetry this is also the flow over a hemisphere sitting on the
    ``z = 0`` wall. Accepts (3,) or (n, 3) positions outside the body.
    """
    p = np.asarray(pos, dtype=float)
    one = p.ndim == 1
    p = np.atleast_2d(p)
    r = np.linalg.norm(p, axis=1)
    if np.any(r < radius * (1.0 - 1e-9)):
        raise ValueError("position inside the body")
    x, y, z = p.T
    k = 1.5 * u_inf * radius ** 3 / r ** 5
    out = np.column_stack([u_inf * (1.0 + 0.5 * radius ** 3 / r ** 3) - k * x * x, -k * x * y, -k * x * z])
    return out[0] if one else out


def hemisphere_errors(sc: Scenario, rim_cells: float = 1.0, rim_layers: int = 2) -> dict:
    """Node-wise speed-vector error of a hemisphere run against :func:`hemisphere_analytic`.

    Nodes in the lowest ``rim_layers`` layers within ``rim_cells`` cells of
    the rim (where the terrain has a slope discontinuity) are excluded.
    """
    wf = sc.field
    g = wf.grid
    R = sc.params["radius"]
    P = g.node_positions()
    err = np.linalg.norm(wf.vectors.reshape(-1, 3) - hemisphere_analytic(P, sc.params["u_inf"], R), axis=1)
    err = err.reshape(g.shape)
    X, Y = np.meshgrid(g.x, g.y)
    near_rim = np.abs(np.hypot(X, Y) - R) <= rim_cells * g.dx + 1e-12
    excluded = np.zeros(g.shape, dtype=bool)
    excluded[:rim_layers] = near_rim[None]
    kept = err[~excluded]
    return {"median": float(np.median(kept)), "max": float(kept.max()),
            "max_all": float(err.max()), "excluded": int(excluded.sum()), "n": int(err.size)}


def line_mean_speed(wf: WindField, x: float, halfwidth: float, z: float, n: int = 41) -> float:
    """Mean wind speed along the cross-valley line ``y in [-halfwidth, halfwidth]`` at (x, z)."""
    y = np.linspace(-halfwidth, halfwidth, n)
    P = np.column_stack([np.full(n, x), y, np.full(n, z)])
    return float(np.linalg.norm(wf.sample(P), axis=1).mean())


def valley_speeds(sc: Scenario, z: float = 40.0) -> dict:
    """Inflow and center mean speeds on a horizontal slice ``z`` m above the valley floor."""
    m = sc.metadata
    v_in = line_mean_speed(sc.field, m["inflow_x"], m["inflow_halfwidth"], z)
    v_c = line_mean_speed(sc.field, m["center_x"], m["center_halfwidth"], z)
    return {"inflow": v_in, "center": v_c, "ratio": v_c / v_in}


def plane_mean_speed(wf: WindField, x: float) -> float:
    """Mean node speed over the grid column plane nearest to ``x``."""
    i = int(np.argmin(np.abs(wf.grid.x - x)))
    return float(np.linalg.norm(wf.vectors[:, :, i], axis=-1).mean())


def ramp_properties(sc: Scenario) -> dict:
    """Inflow/outflow means, location of the fastest interior node and vertical decay of |w|."""
    wf = sc.field
    g = wf.grid
    speed = np.linalg.norm(wf.vectors, axis=-1)
    inner = speed[:-1, 1:-1, 1:-1]  # away from the Dirichlet faces
    k, j, i = np.unravel_index(int(inner.argmax()), inner.shape)
    x_max = float(g.x[i + 1])
    w = np.abs(wf.vectors[..., 2])
    top_q = float(w[g.z >= 0.75 * g.top].mean())
    bottom_q = float(w[g.z <= 0.25 * g.top].mean())
    return {"inflow": plane_mean_speed(wf, sc.metadata["inflow_x"]),
            "outflow": plane_mean_speed(wf, sc.metadata["outflow_x"]),
            "x_max_speed": x_max, "z_max_speed": float(g.z[k, j + 1, i + 1]),
            "crest_offset_cells": abs(x_max - sc.metadata["crest_x"]) / g.dx,
            "w_top_quarter": top_q, "w_bottom_quarter": bottom_q, "w_decay": top_q / bottom_q}


@dataclass(frozen=True)
class ErrorReport:
    """Normalized wind errors per level and their root-mean-square aggregates."""

    levels: np.ndarray
    e_hor: np.ndarray
    e_ver: np.ndarray
    rmse_hor: float
    rmse_ver: float
    kind: str = "adjusted"

    @property
    def total(self) -> float:
        return self.rmse_hor + self.rmse_ver

    def to_dict(self) -> dict:
        return {"kind": self.kind, "levels": self.levels.tolist(), "e_hor": self.e_hor.tolist(),
                "e_ver": self.e_ver.tolist(), "rmse_hor": self.rmse_hor, "rmse_ver": self.rmse_ver,
                "sum": self.total}


def wind_errors(predicted: WindProfile, measured: WindProfile, v_air: float = 9.0,
                w_sr: float = 3.0, w_cr: float = 1.5, kind: str = "adjusted") -> ErrorReport:
    """Horizontal error scaled by airspeed and signed vertical error scaled by sink or climb rate.

    A prediction below the measurement divides by the sink rate ``w_sr``,
    one above it by the climb rate ``w_cr``.
    """
    lp, lm = predicted.levels, measured.levels
    if lp.shape != lm.shape or not np.allclose(lp[:, 0], lm[:, 0]):
        raise ValueError("predicted and measured profiles must share altitude levels")
    d = lp[:, 1:] - lm[:, 1:]
    e_hor = np.hypot(d[:, 0], d[:, 1]) / v_air
    e_ver = np.where(d[:, 2] < 0, d[:, 2] / w_sr, d[:, 2] / w_cr)
    rmse = lambda e: float(np.sqrt(np.mean(e ** 2)))  # noqa: E731
    return ErrorReport(lp[:, 0].copy(), e_hor, e_ver, rmse(e_hor), rmse(e_ver), kind)


def heuristic_quality(sc: Scenario, objective: str, n: int = 10_000, seed: int = 0) -> dict:
    """Compare the informed-sampling heuristic with the true start-through-state cost.

    States are drawn uniformly from the scenario bounds. The ratio of
    heuristic to true cost is averaged over the states whose wind-aware legs
    converge; states with an unreachable leg are only counted.
    """
    pb = sc.problem(objective)
    rng = np.random.default_rng(seed)
    lo, hi = pb.lo, pb.hi
    Q = np.column_stack([rng.uniform(lo, hi, size=(n, 3)), rng.uniform(-math.pi, math.pi, n)])
    h = heuristic_many(Q, pb)
    c = np.array([true_cost_via(q, pb) for q in Q])
    ok = np.isfinite(c)
    ratio = h[ok] / c[ok]
    return {"scenario": sc.name, "objective": objective, "samples": n,
            "evaluated": int(ok.sum()), "unreachable": int((~ok).sum()),
            "violations": int((h[ok] > c[ok] * (1 + 1e-9)).sum()),
            "mean_quality": float(ratio.mean()) if ratio.size else math.nan,
            "min_quality": float(ratio.min()) if ratio.size else math.nan}


# ---------------------------------------------------------------------------
# Benchmark harness

BENCHMARK_SCHEMA = 1


@dataclass(frozen=True)
class PlannerConfig:
    """One planner setup in a benchmark; ``knobs`` go to :class:`PlanProblem`."""

    name: str
    objective: str = "shortest"
    knobs: dict = field(default_factory=dict)
    bbox_factor: float = 1.0

    def to_dict(self) -> dict:
        return {"name": self.name, "objective": self.objective, "knobs": dict(self.knobs),
                "bbox_factor": self.bbox_factor}


def _run_one(sc: Scenario, cfg: PlannerConfig, seed: int, budget: dict) -> dict:
    sc = sc.with_bbox(sc.bbox.side * cfg.bbox_factor) if cfg.bbox_factor != 1.0 else sc
    pb = sc.problem(cfg.objective, seed=seed, **{**budget, **cfg.knobs})
    res = plan(pb)
    if res.solved:
        sim = simulate(res.states, sc.field, sc.terrain, pb.d_icc, sc.bbox, sc.aircraft, pb.wind_iter)
        verdict = sim.to_dict()
    else:
        verdict = {"feasible": False, "flight_time": None, "min_clearance": None,
                   "reason": "no solution"}
    return {"seed": seed, "plan": res.to_dict(), "simulation": verdict,
            "timing": res.timing}


def _quartiles(values) -> list | None:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    return None if v.size == 0 else [float(q) for q in np.percentile(v, [25, 50, 75])]


def summarize_runs(runs: list, reference_cost: float | None = None) -> dict:
    """Aggregate per-seed runs; the result does not depend on run order."""
    runs = sorted(runs, key=lambda r: r["seed"])
    n = len(runs)
    solved = [r for r in runs if r["plan"]["solved"]]
    feasible = [r for r in runs if r["simulation"]["feasible"]]
    reasons: dict = {}
    for r in runs:
        if not r["simulation"]["feasible"]:
            key = r["simulation"]["reason"]
            reasons[key] = reasons.get(key, 0) + 1
    out = {
        "runs": n,
        "solved": len(solved),
        "feasible": len(feasible),
        "feasibility": len(feasible) / n if n else math.nan,
        "cost_quartiles": _quartiles(r["plan"]["cost"] for r in solved),
        "simulated_time_quartiles": _quartiles(r["simulation"]["flight_time"] for r in feasible),
        "iterations_median": float(np.median([r["plan"]["iterations"] for r in runs])) if n else None,
        "first_solution_iteration_quartiles": _quartiles(
            r["plan"]["first_solution_iteration"] for r in solved),
        "failures": dict(sorted(reasons.items())),
    }
    if reference_cost is not None and solved:
        out["reference_cost"] = reference_cost
        out["normalized_cost_quartiles"] = _quartiles(r["plan"]["cost"] / reference_cost for r in solved)
    return out


def run_benchmark(sc: Scenario, configs, seeds=20, max_iterations: int | None = DEFAULT_ITERATIONS,
                  max_seconds: float | None = None, reference_iterations: int | None = None,
                  jobs: int = 1, include_timing: bool = False) -> dict:
    """Plan every config for every seed, simulate the results and aggregate.

    ``seeds`` is a count or an explicit list. With ``reference_iterations``
    each config also gets one long run (seed 0) whose cost normalizes the
    others. Wall-clock figures only appear with ``include_timing``, which
    keeps iteration-budget results byte-identical across reruns.
    """
    seeds = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
    configs = [c if isinstance(c, PlannerConfig) else PlannerConfig(**c) for c in configs]
    budget = {"max_iterations": max_iterations, "max_seconds": max_seconds}
    jobs_list = [(sc, cfg, seed, budget) for cfg in configs for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, *zip(*jobs_list)))
    else:
        results = [_run_one(*j) for j in jobs_list]
    out_configs = []
    for ci, cfg in enumerate(configs):
        runs = results[ci * len(seeds):(ci + 1) * len(seeds)]
        ref = None
        if reference_iterations:
            ref_run = _run_one(sc, cfg, 0, {"max_iterations": reference_iterations, "max_seconds": None})
            ref = ref_run["plan"]["cost"]
        if not include_timing:
            runs = [{k: v for k, v in r.items() if k != "timing"} for r in runs]
        out_configs.append({**cfg.to_dict(), "runs": runs, "summary": summarize_runs(runs, ref)})
    return {"schema": BENCHMARK_SCHEMA, "scenario": sc.to_dict(), "budget": budget,
            "seeds": seeds, "configs": out_configs}


def bbox_sweep(sc: Scenario, factors=(1, 2, 3), objective: str = "shortest", **kw) -> dict:
    """Benchmark one objective across bounding-box multipliers."""
    configs = [PlannerConfig(f"{objective}-bbox{f:g}x", objective, bbox_factor=float(f))
               for f in factors]
    return run_benchmark(sc, configs, **kw)


RUN_COLUMNS = ("config", "seed", "solved", "cost", "iterations", "tree_size",
               "first_solution_iteration", "feasible", "flight_time", "min_clearance", "reason")
TRACE_COLUMNS = ("config", "seed", "iteration", "cost")


def write_csv(benchmark: dict, directory) -> tuple:
    """Write ``runs.csv`` and ``traces.csv`` for plotting; returns their paths."""
    os.makedirs(directory, exist_ok=True)
    runs_path = os.path.join(directory, "runs.csv")
    traces_path = os.path.join(directory, "traces.csv")
    with open(runs_path, "w", newline="") as fr, open(traces_path, "w", newline="") as ft:
        wr, wt = csv.writer(fr), csv.writer(ft)
        wr.writerow(RUN_COLUMNS)
        wt.writerow(TRACE_COLUMNS)
        for cfg in benchmark["configs"]:
            for r in cfg["runs"]:
                pl, sim = r["plan"], r["simulation"]
                wr.writerow([cfg["name"], r["seed"], pl["solved"], pl["cost"], pl["iterations"],
                             pl["tree_size"], pl["first_solution_iteration"], sim["feasible"],
                             sim["flight_time"], sim["min_clearance"], sim["reason"]])
                for it, c in pl["trace"]:
                    wt.writerow([cfg["name"], r["seed"], it, c])
    return runs_path, traces_path
