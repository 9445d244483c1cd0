"""RRT* and informed RRT* over Dubins airplane motions.

Two objectives are supported: ``shortest`` minimizes air-relative path
length and ignores wind; ``time`` minimizes flight time, building every
motion with the wind-aware construction of :mod:`windnav.dubins_wind`.

Runs are deterministic for a fixed seed when the budget is given in
iterations. Wall-clock figures are kept apart from the deterministic
result so result files can be compared byte for byte.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .dubins import (AircraftParams, AirplanePath, AirplaneState, airplane_length_many,
                     approx_distance_many, dubins_airplane)
from .dubins_wind import GroundPath, WindIterParams, dubins_with_wind
from .terrain import BoundingBox, HeightMap, motion_valid, preevaluate, states_valid
from .wind_grid import WindField

OBJECTIVES = ("shortest", "time")
MAX_REJECTIONS = 10_000
_PRUNE_SLACK = 1e-9


@dataclass
class PlanProblem:
    """Everything a planning query needs.

    ``bounds`` is ``((xmin, ymin, zmin), (xmax, ymax, zmax))``. At least one
    of ``max_iterations`` and ``max_seconds`` must be set. ``d_max`` defaults
    to a fifth of the horizontal diagonal of ``bounds``. With ``preevaluate``
    the terrain is replaced by its max-filtered version so each collision
    query reads one cell; obstacles grow by up to one cell.
    """

    start: AirplaneState
    goal: AirplaneState
    terrain: HeightMap
    bounds: tuple
    field: WindField | None = None
    aircraft: AircraftParams = dc_field(default_factory=AircraftParams)
    objective: str = "shortest"
    bbox: BoundingBox = dc_field(default_factory=BoundingBox)
    max_iterations: int | None = None
    max_seconds: float | None = None
    d_max: float | None = None
    d_icc: float = 10.0
    k_rrg: float = 2.0 * math.e
    goal_bias: float = 0.05
    dz_shift_k: float = 5.0
    obstacle_aware: bool = True
    informed: bool = True
    custom_knn: bool = True
    two_way_knn: bool = True
    preevaluate: bool = False
    wind_iter: WindIterParams = dc_field(default_factory=WindIterParams)
    seed: int = 0

    def __post_init__(self):
        self.start = AirplaneState(*map(float, self.start)).normalized()
        self.goal = AirplaneState(*map(float, self.goal)).normalized()
        lo, hi = (np.asarray(b, dtype=float) for b in self.bounds)
        if lo.shape != (3,) or hi.shape != (3,) or not np.all(hi > lo):
            raise ValueError(f"bounds must be ((xmin, ymin, zmin), (xmax, ymax, zmax)), got {self.bounds}")
        self.bounds = (tuple(lo), tuple(hi))
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.max_iterations is None and self.max_seconds is None:
            raise ValueError("a budget in iterations or seconds is required")
        if self.d_max is None:
            self.d_max = 0.2 * float(np.hypot(hi[0] - lo[0], hi[1] - lo[1]))
        if not self.d_max > 0:
            raise ValueError(f"d_max must be positive, got {self.d_max}")
        if not self.d_icc > 0:
            raise ValueError(f"d_icc must be positive, got {self.d_icc}")
        if not 0 <= self.goal_bias < 1:
            raise ValueError(f"goal_bias must lie in [0, 1), got {self.goal_bias}")
        if self.preevaluate and not self.terrain.preevaluated:
            self.terrain = preevaluate(self.terrain, self.bbox)
        for name, q in (("start", self.start), ("goal", self.goal)):
            if not states_valid(self.terrain, np.array([q[:3]]), self.bbox)[0]:
                raise ValueError(f"{name} state {tuple(q)} is in collision or off the map")

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.bounds[0])

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.bounds[1])

    @property
    def wind_max(self) -> np.ndarray:
        """Per-axis maximum absolute wind component, zero without a field."""
        return np.zeros(3) if self.field is None else self.field.max_components


# ---------------------------------------------------------------------------
# Heuristics


def _leg_time(a: np.ndarray, b: np.ndarray, params: AircraftParams, wind_max: np.ndarray,
              tol: float) -> np.ndarray:
    """Lower bound on the flight time of one wind-aware leg.

    Straight-line distance over the airspeed plus the largest wind the
    per-axis maxima allow along the leg. Climb limits are deliberately left
    out so that zero wind reduces to distance over airspeed.
    """
    v_air = params.v_air
    diff = b[..., :3] - a[..., :3]
    d = np.sqrt(np.einsum("...i,...i->...", diff, diff))
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(d[..., None] > 0, diff / np.where(d > 0, d, 1.0)[..., None], 0.0)
    v_proj = np.abs(unit) @ wind_max
    speed = np.maximum(v_air + v_proj, 0.01 * v_air)
    # the wind-aware construction may stop up to ``tol`` short of its target
    return np.maximum(d - tol, 0.0) / speed


def heuristic_length_many(Q, problem: PlanProblem) -> np.ndarray:
    """Admissible start-through-``q``-to-goal length bound for an (n, 3+) array of states."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    s = np.asarray(problem.start, dtype=float)
    g = np.asarray(problem.goal, dtype=float)
    return approx_distance_many(s, Q, problem.aircraft) + approx_distance_many(Q, g, problem.aircraft)


def heuristic_length(q, problem: PlanProblem) -> float:
    return float(heuristic_length_many(np.asarray(q, dtype=float)[None, :], problem)[0])


def heuristic_time_many(Q, problem: PlanProblem) -> np.ndarray:
    """Admissible start-through-``q``-to-goal flight time bound [s].

    Each leg divides its straight-line distance by the airspeed plus the
    largest wind the per-axis maxima allow along that leg's direction.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    s = np.asarray(problem.start, dtype=float)
    g = np.asarray(problem.goal, dtype=float)
    ac, wm, tol = problem.aircraft, problem.wind_max, problem.wind_iter.tol
    return _leg_time(s, Q, ac, wm, tol) + _leg_time(Q, g, ac, wm, tol)


def heuristic_time(q, problem: PlanProblem) -> float:
    return float(heuristic_time_many(np.asarray(q, dtype=float)[None, :], problem)[0])


def heuristic_many(Q, problem: PlanProblem) -> np.ndarray:
    if problem.objective == "time":
        return heuristic_time_many(Q, problem)
    return heuristic_length_many(Q, problem)


# ---------------------------------------------------------------------------
# Nearest neighbors


def _k_smallest(values: np.ndarray, ids: np.ndarray, k: int) -> tuple:
    """The ``k`` smallest values with ties broken by id; returns (ids, values)."""
    order = np.lexsort((ids, values))[:k]
    return ids[order], values[order]


def knn_exhaustive(states: np.ndarray, q, k: int, params: AircraftParams,
                   direction: str = "from_tree") -> tuple:
    """Reference k-nearest under the true Dubins airplane distance.

    ``from_tree`` measures ``d(v, q)`` (motions into ``q``), ``to_tree``
    measures ``d(q, v)``.
    """
    states = np.atleast_2d(states)
    q = np.asarray(q, dtype=float)
    if direction == "from_tree":
        d = airplane_length_many(states, q, params)
    elif direction == "to_tree":
        d = airplane_length_many(q, states, params)
    else:
        raise ValueError(f"direction must be 'from_tree' or 'to_tree', got {direction!r}")
    k = min(max(k, 1), len(states))
    return _k_smallest(d, np.arange(len(states)), k)


def knn_bounded(states: np.ndarray, q, k: int, params: AircraftParams,
                direction: str = "from_tree", stats: dict | None = None) -> tuple:
    """Exact k-nearest that evaluates true distances only where the lower bound allows.

    Vertices are sorted by the cheap lower bound. The k-th smallest lower
    bound plus the maximum bound slack caps the true k-th distance, so only
    vertices whose lower bound lies under that threshold can be among the
    k nearest.
    """
    states = np.atleast_2d(states)
    n = len(states)
    k = min(max(k, 1), n)
    q = np.asarray(q, dtype=float)
    if direction == "from_tree":
        lb = approx_distance_many(states, q, params)
    elif direction == "to_tree":
        lb = approx_distance_many(q, states, params)
    else:
        raise ValueError(f"direction must be 'from_tree' or 'to_tree', got {direction!r}")
    kth = np.partition(lb, k - 1)[k - 1]
    cand = np.flatnonzero(lb <= kth + params.nn_slack)
    if direction == "from_tree":
        d = airplane_length_many(states[cand], q, params)
    else:
        d = airplane_length_many(q, states[cand], params)
    if stats is not None:
        stats["evaluated"] = stats.get("evaluated", 0) + len(cand)
    return _k_smallest(d, cand, k)


def k_for(n: int, k_rrg: float) -> int:
    """Neighbor count ``ceil(k_rrg ln n)`` clamped to [1, n]."""
    if n <= 1:
        return 1
    return int(min(max(math.ceil(k_rrg * math.log(n)), 1), n))


# ---------------------------------------------------------------------------
# Sampling


def informed_box(problem: PlanProblem, c_best: float) -> tuple:
    """Axis-aligned box around every state whose heuristic can be at most ``c_best``.

    Any such state lies in the prolate spheroid with foci start and goal
    whose major axis is ``c_best`` times the largest possible ground speed
    (one for the length objective).
    """
    s = np.asarray(problem.start[:3])
    g = np.asarray(problem.goal[:3])
    if problem.objective == "time":
        v = problem.aircraft.v_air
        major = (c_best + 2 * problem.wind_iter.tol / v) * (v + float(np.linalg.norm(problem.wind_max)))
    else:
        major = c_best
    a = major / 2.0
    dist = float(np.linalg.norm(g - s))
    b2 = max(a * a - dist * dist / 4.0, 0.0)
    u = (g - s) / dist if dist > 0 else np.zeros(3)
    half = np.sqrt(a * a * u * u + b2 * (1.0 - u * u))
    mid = (s + g) / 2.0
    return np.maximum(mid - half, problem.lo), np.minimum(mid + half, problem.hi)


def sample(problem: PlanProblem, c_best: float, rng: np.random.Generator) -> AirplaneState | None:
    """Draw one state; ``None`` when rejection sampling runs out of attempts.

    Uniform over the bounds until a solution exists; afterwards, with
    ``informed`` set, restricted to states whose heuristic does not exceed
    ``c_best``. Obstacle-aware sampling lifts states out of the terrain in
    steps of ``dz_shift_k * d_icc`` and, for the length objective, keeps
    samples above the lower of start and goal altitude.
    """
    lo, hi = problem.lo, problem.hi
    informed = problem.informed and math.isfinite(c_best)
    if informed:
        lo, hi = informed_box(problem, c_best)
        if np.any(hi < lo):
            return None
    z_floor = min(problem.start.z, problem.goal.z)
    shift = problem.dz_shift_k * problem.d_icc
    for _ in range(MAX_REJECTIONS):
        x, y, z = rng.uniform(lo, hi)
        psi = rng.uniform(-math.pi, math.pi)
        if problem.obstacle_aware:
            if problem.objective == "shortest" and z < z_floor:
                z = rng.uniform(max(z_floor, lo[2]), hi[2]) if hi[2] > z_floor else z_floor
            while z <= hi[2] and not states_valid(problem.terrain, np.array([[x, y, z]]), problem.bbox)[0]:
                z += shift
            if z > hi[2]:
                continue
        q = (x, y, z, psi)
        if informed and heuristic_many(np.array([q]), problem)[0] > c_best:
            continue
        return AirplaneState(x, y, z, psi)
    return None


# ---------------------------------------------------------------------------
# Tree


class MotionTree:
    """Vertices with cost-to-come, single parents and the motion from each parent."""

    def __init__(self, capacity: int = 1024):
        self.states = np.empty((capacity, 4))
        self.cost = np.empty(capacity)
        self.parent = np.empty(capacity, dtype=np.int64)
        self.alive = np.zeros(capacity, dtype=bool)
        self.children: list = []
        self.motions: list = []
        self.edge_cost: list = []
        self.n = 0

    def _grow(self):
        cap = 2 * len(self.cost)
        for name in ("states", "cost", "parent", "alive"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    def add(self, q, parent: int, cost: float, motion, edge_cost: float) -> int:
        if self.n == len(self.cost):
            self._grow()
        i = self.n
        self.states[i] = q
        self.cost[i] = cost
        self.parent[i] = parent
        self.alive[i] = True
        self.children.append([])
        self.motions.append(motion)
        self.edge_cost.append(edge_cost)
        if parent >= 0:
            self.children[parent].append(i)
        self.n += 1
        return i

    @property
    def size(self) -> int:
        return int(self.alive[: self.n].sum())

    def alive_ids(self) -> np.ndarray:
        return np.flatnonzero(self.alive[: self.n])

    def reparent(self, i: int, new_parent: int, motion, edge_cost: float) -> None:
        old = self.parent[i]
        self.children[old].remove(i)
        self.children[new_parent].append(i)
        self.parent[i] = new_parent
        self.motions[i] = motion
        self.edge_cost[i] = edge_cost
        delta = self.cost[new_parent] + edge_cost - self.cost[i]
        stack = [i]
        while stack:
            v = stack.pop()
            self.cost[v] += delta
            stack.extend(self.children[v])

    def remove_subtree(self, i: int) -> int:
        p = self.parent[i]
        if p >= 0:
            self.children[p].remove(i)
        stack, removed = [i], 0
        while stack:
            v = stack.pop()
            self.alive[v] = False
            removed += 1
            stack.extend(self.children[v])
            self.children[v] = []
        return removed

    def path_to(self, i: int) -> list:
        ids = []
        while i >= 0:
            ids.append(i)
            i = int(self.parent[i])
        return ids[::-1]

    def recomputed_cost(self, i: int) -> float:
        """Cost-to-come summed along the parent chain (consistency check)."""
        return float(sum(self.edge_cost[v] for v in self.path_to(i)[1:]))


# ---------------------------------------------------------------------------
# Result


@dataclass
class PlanResult:
    """Outcome of one planning query.

    ``trace`` lists ``(iteration, cost)`` at every solution improvement.
    ``timing`` holds wall-clock figures and is left out of :meth:`to_json`
    unless requested.
    """

    objective: str
    seed: int
    states: list
    motions: list
    cost: float
    iterations: int
    tree_size: int
    first_solution_iteration: int | None
    trace: list
    stats: dict
    timing: dict = dc_field(default_factory=dict)

    @property
    def solved(self) -> bool:
        return bool(self.states)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "objective": self.objective,
            "seed": self.seed,
            "solved": self.solved,
            "cost": self.cost if self.solved else None,
            "iterations": self.iterations,
            "tree_size": self.tree_size,
            "first_solution_iteration": self.first_solution_iteration,
            "trace": [[int(i), float(c)] for i, c in self.trace],
            "path": [[float(v) for v in q] for q in self.states],
            "motions": [_motion_summary(m) for m in self.motions],
            "stats": self.stats,
        }
        if include_timing:
            out["timing"] = self.timing
        return out

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=1)


def _motion_summary(m) -> dict:
    if isinstance(m, GroundPath):
        return {"air_length": m.air.length, "duration": m.duration, "word": m.air.word,
                "case": m.air.case, "iterations": m.iterations}
    return {"air_length": m.length, "word": m.word, "case": m.case}


# ---------------------------------------------------------------------------
# Planner


class _Planner:
    def __init__(self, problem: PlanProblem):
        self.p = problem
        self.rng = np.random.default_rng(problem.seed)
        self.tree = MotionTree()
        self.tree.add(problem.start, -1, 0.0, None, 0.0)
        self.goal_idx: int | None = None
        self.c_best = math.inf
        self.time_obj = problem.objective == "time"
        self.stats = {"sampling_failures": 0, "steer_invalid": 0, "no_parent": 0,
                      "motions_built": 0, "motions_invalid": 0, "pruned": 0, "rewires": 0,
                      "knn_evaluated": 0}

    # -- motions ----------------------------------------------------------

    def motion(self, a, b):
        """Motion from ``a`` to ``b`` and its cost, or (None, inf) if invalid."""
        p = self.p
        self.stats["motions_built"] += 1
        if self.time_obj:
            m = dubins_with_wind(a, b, p.field, p.aircraft, p.wind_iter)
            if not m:
                self.stats["motions_invalid"] += 1
                return None, math.inf
            cost = m.duration
        else:
            m = dubins_airplane(a, b, p.aircraft)
            cost = m.length
        if not motion_valid(p.terrain, m, p.d_icc, p.bbox):
            self.stats["motions_invalid"] += 1
            return None, math.inf
        return m, cost

    def edge_lower_bounds(self, ids: np.ndarray, q, air_d: np.ndarray, into_q: bool) -> np.ndarray:
        """Cheap lower bounds on edge costs between tree vertices ``ids`` and ``q``."""
        if not self.time_obj:
            return air_d
        st = self.tree.states[ids]
        qa = np.asarray(q, dtype=float)
        p = self.p
        if into_q:
            return _leg_time(st, qa, p.aircraft, p.wind_max, p.wind_iter.tol)
        return _leg_time(qa, st, p.aircraft, p.wind_max, p.wind_iter.tol)

    # -- neighbors --------------------------------------------------------

    def neighbors(self, q, direction: str) -> tuple:
        ids = self.tree.alive_ids()
        states = self.tree.states[ids]
        k = k_for(len(ids) + 1, self.p.k_rrg)
        if self.p.custom_knn and not self.time_obj:
            st = {}
            loc, d = knn_bounded(states, q, k, self.p.aircraft, direction, st)
            self.stats["knn_evaluated"] += st["evaluated"]
        else:
            loc, d = knn_exhaustive(states, q, k, self.p.aircraft, direction)
        return ids[loc], d

    def nearest(self, q) -> int:
        ids = self.tree.alive_ids()
        d = airplane_length_many(self.tree.states[ids], np.asarray(q, dtype=float), self.p.aircraft)
        return int(ids[int(np.argmin(d))])

    # -- steps ------------------------------------------------------------

    def choose_parent(self, q, ids, air_d):
        """Best valid parent among ``ids``; candidates are tried in lower-bound order."""
        tree = self.tree
        lb = tree.cost[ids] + self.edge_lower_bounds(ids, q, air_d, into_q=True)
        order = np.lexsort((ids, lb))
        best = (None, math.inf, None, math.inf)
        for o in order:
            if lb[o] >= best[1]:
                break
            v = int(ids[o])
            m, c = self.motion(tree.states[v], q)
            if m is not None and tree.cost[v] + c < best[1]:
                best = (v, tree.cost[v] + c, m, c)
        return best

    def rewire(self, new: int, ids, air_d) -> None:
        tree = self.tree
        q = tree.states[new]
        lb = self.edge_lower_bounds(ids, q, air_d, into_q=False)
        for v, bound in zip(ids.tolist(), lb.tolist()):
            if v == new or v == tree.parent[new] or v == 0:
                continue
            if tree.cost[new] + bound >= tree.cost[v]:
                continue
            if self._is_ancestor(v, new):
                continue
            m, c = self.motion(q, tree.states[v])
            if m is not None and tree.cost[new] + c < tree.cost[v]:
                tree.reparent(v, new, m, c)
                self.stats["rewires"] += 1

    def _is_ancestor(self, a: int, b: int) -> bool:
        while b >= 0:
            if b == a:
                return True
            b = int(self.tree.parent[b])
        return False

    def improve_goal(self) -> None:
        """Try to give the existing goal vertex a cheaper parent."""
        tree = self.tree
        g = self.goal_idx
        ids, d = self.neighbors(self.p.goal, "from_tree")
        keep = np.array([not self._is_ancestor(g, int(v)) for v in ids], dtype=bool)
        ids, d = ids[keep], d[keep]
        if len(ids) == 0:
            return
        v, total, m, c = self.choose_parent(self.p.goal, ids, d)
        if v is not None and total < tree.cost[g] and v != tree.parent[g]:
            tree.reparent(g, v, m, c)

    def prune(self) -> None:
        tree = self.tree
        ids = tree.alive_ids()
        h = heuristic_many(tree.states[ids], self.p)
        bad = ids[h > self.c_best * (1 + _PRUNE_SLACK) + _PRUNE_SLACK]
        for v in bad.tolist():
            if tree.alive[v] and v != 0:
                self.stats["pruned"] += tree.remove_subtree(v)

    # -- main loop --------------------------------------------------------

    def run(self) -> PlanResult:
        p = self.p
        tree = self.tree
        t0 = time.perf_counter()
        trace, trace_t = [], []
        first_it = first_t = None
        it = 0
        while True:
            if p.max_iterations is not None and it >= p.max_iterations:
                break
            if p.max_seconds is not None and time.perf_counter() - t0 >= p.max_seconds:
                break
            it += 1
            goal_sample = self.rng.random() < p.goal_bias
            if goal_sample:
                q_rand = p.goal
            else:
                q_rand = sample(p, self.c_best, self.rng)
                if q_rand is None:
                    self.stats["sampling_failures"] += 1
                    continue
            near = self.nearest(q_rand)
            air = dubins_airplane(tree.states[near], q_rand, p.aircraft)
            if air.length > p.d_max:
                q_new = air.interpolate(p.d_max / air.length)
                is_goal = False
            else:
                q_new = AirplaneState(*q_rand)
                is_goal = goal_sample
            if is_goal and self.goal_idx is not None:
                self.improve_goal()
            else:
                if not states_valid(p.terrain, np.array([q_new[:3]]), p.bbox)[0]:
                    self.stats["steer_invalid"] += 1
                    continue
                ids, d = self.neighbors(q_new, "from_tree")
                if near not in ids:
                    ids = np.append(ids, near)
                    d = np.append(d, air.length)
                v, total, m, c = self.choose_parent(q_new, ids, d)
                if v is None:
                    self.stats["no_parent"] += 1
                    continue
                new = tree.add(q_new, v, total, m, c)
                if is_goal:
                    self.goal_idx = new
                if p.two_way_knn:
                    ids, d = self.neighbors(q_new, "to_tree")
                else:
                    # one-way search: rewire over the connection set
                    d = airplane_length_many(np.asarray(q_new, dtype=float), tree.states[ids],
                                             p.aircraft)
                self.rewire(new, ids, d)
            if self.goal_idx is not None and tree.cost[self.goal_idx] < self.c_best:
                self.c_best = float(tree.cost[self.goal_idx])
                trace.append((it, self.c_best))
                trace_t.append(time.perf_counter() - t0)
                if first_it is None:
                    first_it, first_t = it, trace_t[-1]
                if p.informed:
                    self.prune()
        elapsed = time.perf_counter() - t0
        if self.goal_idx is not None:
            ids = tree.path_to(self.goal_idx)
            states = [AirplaneState(*tree.states[i]) for i in ids]
            motions = [tree.motions[i] for i in ids[1:]]
            cost = float(tree.cost[self.goal_idx])
        else:
            states, motions, cost = [], [], math.inf
        timing = {"elapsed": elapsed, "first_solution_time": first_t,
                  "trace_times": trace_t}
        return PlanResult(p.objective, p.seed, states, motions, cost, it, tree.size, first_it,
                          trace, dict(self.stats), timing)


def plan(problem: PlanProblem) -> PlanResult:
    """Run RRT* (informed when ``problem.informed``) until the budget is spent."""
    return _Planner(problem).run()


def edge_cost(motion, objective: str) -> float:
    """Length [m] for the shortest objective, flight time [s] for the time objective."""
    if objective == "time":
        if not isinstance(motion, GroundPath):
            raise TypeError("time objective costs need a GroundPath")
        return motion.duration
    if objective == "shortest":
        return motion.air.length if isinstance(motion, GroundPath) else motion.length
    raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")


def true_cost_via(q, problem: PlanProblem) -> float:
    """Cost of the direct start-to-``q``-to-goal motion pair under the problem's objective.

    Collisions are ignored; an unreachable leg in wind gives ``inf``.
    """
    if problem.objective == "time":
        total = 0.0
        for a, b in ((problem.start, q), (q, problem.goal)):
            m = dubins_with_wind(a, b, problem.field, problem.aircraft, problem.wind_iter)
            if not m:
                return math.inf
            total += m.duration
        return total
    return float(airplane_length_many(np.array([problem.start, q]), np.array([q, problem.goal]),
                                      problem.aircraft).sum())
