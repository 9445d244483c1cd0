"""Ground-relative Dubins airplane paths in a spatially varying wind field.

The air-relative path is aimed at a virtual goal that is shifted against the
accumulated wind drift; the drift is integrated with forward Euler along
the air path. This repeats until the drifted endpoint lands on the real
goal or the iteration limit is hit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dubins import AircraftParams, AirplanePath, AirplaneState, dubins_airplane
from .terrain import BoundingBox, HeightMap, check_fractions, states_valid
from .wind_grid import WindField


@dataclass(frozen=True)
class WindIterParams:
    """Iteration limit, position tolerance [m] and maximum Euler step (fraction of the flight)."""

    max_iter: int = 12
    tol: float = 1.0
    dt_max: float = 0.05
    heading_tol: float | None = None  # radians; None checks position only

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not 0 < self.dt_max <= 1:
            raise ValueError(f"dt_max must lie in (0, 1], got {self.dt_max}")


def euler_grid(dt_max: float) -> np.ndarray:
    """Step points ``0, dt, 2 dt, ..., 1`` with the last step shortened to end at 1."""
    n = math.ceil(1.0 / dt_max - 1e-9)
    t = np.minimum(np.arange(n + 1) * dt_max, 1.0)
    t[-1] = 1.0
    return t


def drift_samples(air: AirplanePath, wf: WindField | None, v_air: float,
                  dt_max: float = 0.05) -> tuple:
    """Cumulative drift at every Euler step point.

    Returns ``(t, drift)`` with ``drift[k]`` the displacement accumulated up
    to fraction ``t[k]``. Each step samples the wind at the drifted ground
    position and advances the drift by ``wind * dt * T`` where ``T`` is the
    flight time of the whole path.
    """
    t = euler_grid(dt_max)
    drift = np.zeros((t.size, 3))
    if wf is None or air.length == 0.0:
        return t, drift
    T = air.length / v_air
    # scalar interpolation beats the vectorized one for a couple of dozen points
    interp = air.interpolate
    sample = wf.sample_one
    tl = t.tolist()
    dx = dy = dz = 0.0
    out = [(0.0, 0.0, 0.0)]
    for k in range(len(tl) - 1):
        x, y, z, _ = interp(tl[k])
        wx, wy, wz = sample(x + dx, y + dy, z + dz)
        h = (tl[k + 1] - tl[k]) * T
        dx += wx * h
        dy += wy * h
        dz += wz * h
        out.append((dx, dy, dz))
    return t, np.array(out)


def wind_drift(air: AirplanePath, wf: WindField | None, params: AircraftParams,
               iter_params: WindIterParams | None = None) -> np.ndarray:
    """Total drift (3,) accumulated while flying ``air`` through ``wf``."""
    ip = iter_params or WindIterParams()
    return drift_samples(air, wf, params.v_air, ip.dt_max)[1][-1]


class GroundPath:
    """An air path together with the wind drift accumulated along it.

    Ground states are air states plus the drift, linearly interpolated
    between Euler step points. Headings stay air-relative.
    """

    __slots__ = ("air", "goal", "t", "drift", "duration", "converged", "iterations", "residual")

    def __init__(self, air: AirplanePath, goal: AirplaneState, t: np.ndarray, drift: np.ndarray,
                 v_air: float, converged: bool, iterations: int, residual: float):
        self.air = air
        self.goal = goal
        self.t = t
        self.drift = drift
        self.duration = air.length / v_air
        self.converged = converged
        self.iterations = iterations
        self.residual = residual

    def __repr__(self):
        return (f"GroundPath(length={self.air.length:.3f}, duration={self.duration:.3f}, "
                f"iterations={self.iterations}, residual={self.residual:.3g})")

    @property
    def start(self) -> AirplaneState:
        return self.air.start

    @property
    def length(self) -> float:
        """Air-relative length; path fractions refer to it."""
        return self.air.length

    @property
    def end(self) -> AirplaneState:
        e = self.air.end
        d = self.drift[-1]
        return AirplaneState(e.x + d[0], e.y + d[1], e.z + d[2], e.psi)

    def drift_at(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        return np.column_stack([np.interp(ts, self.t, self.drift[:, c]) for c in range(3)])

    def states_at(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = self.air.states_at(ts)
        out[:, :3] += self.drift_at(ts)
        return out

    def interpolate(self, t: float) -> AirplaneState:
        return AirplaneState(*self.states_at([t])[0])

    def to_dict(self) -> dict:
        return {"air": self.air.to_dict(), "duration": self.duration, "converged": self.converged,
                "iterations": self.iterations, "residual": self.residual,
                "end": list(self.end)}


@dataclass(frozen=True)
class Failure:
    """No ground path reached the goal within the iteration limit."""

    iterations: int
    residual: float
    reason: str = "not converged"

    def __bool__(self):
        return False


def _residual(end, goal, ip: WindIterParams) -> float:
    d = math.dist(end[:3], goal[:3])
    if ip.heading_tol is not None:
        dpsi = abs((end[3] - goal[3] + math.pi) % (2 * math.pi) - math.pi)
        if dpsi > ip.heading_tol:
            return math.inf
    return d


def dubins_with_wind(q_start, q_goal, wf: WindField | None, params: AircraftParams,
                     iter_params: WindIterParams | None = None):
    """Air path whose wind-drifted end lands within ``tol`` of ``q_goal``.

    Returns a :class:`GroundPath` on success and a :class:`Failure`
    otherwise.
    """
    ip = iter_params or WindIterParams()
    start = AirplaneState(*q_start)
    goal = AirplaneState(*q_goal)
    virt = goal
    residual = math.inf
    for it in range(1, ip.max_iter + 1):
        air = dubins_airplane(start, virt, params)
        t, drift = drift_samples(air, wf, params.v_air, ip.dt_max)
        d = drift[-1]
        end = (virt.x + d[0], virt.y + d[1], virt.z + d[2], virt.psi)
        residual = _residual(end, goal, ip)
        if residual <= ip.tol:
            return GroundPath(air, goal, t, drift, params.v_air, True, it, residual)
        virt = AirplaneState(goal.x - d[0], goal.y - d[1], goal.z - d[2], goal.psi)
    return Failure(ip.max_iter, residual)


def success_rate_curve(iterations, max_iter: int = 12) -> list:
    """Fraction of instances converged within ``m`` iterations, for ``m = 1 .. max_iter``.

    ``iterations`` holds the iteration count of each converged instance and
    ``None`` for failures.
    """
    its = list(iterations)
    if not its:
        return [0.0] * max_iter
    n = len(its)
    return [sum(1 for i in its if i is not None and i <= m) / n for m in range(1, max_iter + 1)]


# ---------------------------------------------------------------------------
# Simulation of planned paths


@dataclass
class SimulationResult:
    feasible: bool
    flight_time: float
    min_clearance: float
    reason: str = ""
    edges: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"feasible": self.feasible,
                "flight_time": self.flight_time if math.isfinite(self.flight_time) else None,
                "min_clearance": self.min_clearance if math.isfinite(self.min_clearance) else None,
                "reason": self.reason}


def _waypoints(path) -> list:
    """Waypoint states from a motion, a list of motions or a list of states."""
    if isinstance(path, (GroundPath, AirplanePath)):
        path = [path]
    path = list(path)
    if not path:
        return []
    if isinstance(path[0], (GroundPath, AirplanePath)):
        pts = [AirplaneState(*path[0].start)]
        for m in path:
            pts.append(AirplaneState(*(m.goal if isinstance(m, GroundPath) else m.end)))
        return pts
    return [AirplaneState(*q) for q in path]


def clearance(hmap: HeightMap, pos: np.ndarray, bbox: BoundingBox) -> np.ndarray:
    """Vertical gap between the bounding-box bottom and the terrain plus margins under it.

    Negative values mean a collision; positions off the map get ``-inf``.
    """
    pos = np.atleast_2d(pos)
    inside = hmap.contains(pos[:, 0], pos[:, 1])
    i, j = hmap.cell_index(pos[:, 0], pos[:, 1])
    gap = pos[:, 2] - bbox.side / 2.0 - hmap.clearance_height()[j, i]
    return np.where(inside, gap, -np.inf)


def simulate(path, wf: WindField | None, hmap: HeightMap, d_icc: float, bbox: BoundingBox,
             params: AircraftParams, iter_params: WindIterParams | None = None) -> SimulationResult:
    """Fly a planned path through ``wf`` and report time, feasibility and clearance.

    The aircraft flies from waypoint to waypoint, each leg computed with
    :func:`dubins_with_wind` in the given field; a leg is infeasible when no
    ground path converges or when any of its states checked at ``d_icc``
    spacing collides with the terrain.
    """
    pts = _waypoints(path)
    total = 0.0
    min_gap = math.inf
    edges = []
    for a, b in zip(pts[:-1], pts[1:]):
        gp = dubins_with_wind(a, b, wf, params, iter_params)
        if not gp:
            return SimulationResult(False, math.inf, min_gap, "wind path not found", edges)
        ts = check_fractions(gp.length, d_icc)
        states = gp.states_at(ts)
        gaps = clearance(hmap, states, bbox)
        min_gap = min(min_gap, float(gaps.min()))
        total += gp.duration
        edges.append(gp)
        if not states_valid(hmap, states, bbox).all():
            return SimulationResult(False, total, min_gap, "terrain collision", edges)
    return SimulationResult(True, total, min_gap, "", edges)
