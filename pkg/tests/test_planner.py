"""RRT* planner: heuristics, nearest neighbors, sampling, tree bookkeeping and full runs."""

import math

import numpy as np
import pytest
from scipy import stats

from windnav.bench import flat_terrain, make_scenario
from windnav.dubins import AircraftParams, airplane_length_many, dubins_airplane
from windnav.dubins_wind import dubins_with_wind
from windnav.planner import (MotionTree, PlanProblem, _Planner, edge_cost, heuristic_length,
                             heuristic_many, heuristic_time, informed_box, k_for, knn_bounded,
                             knn_exhaustive, plan, sample, true_cost_via)
from windnav.wind_grid import build_grid, uniform_field

P = AircraftParams()
HM = flat_terrain(1500.0, 1000.0, 50.0)
BOUNDS = ((0.0, 0.0, 0.0), (1500.0, 1000.0, 300.0))
START, GOAL = (250.0, 500.0, 100.0, 0.0), (1250.0, 500.0, 100.0, 0.0)
EMPTY = make_scenario("empty")
W0 = make_scenario("w0")


def problem(**kw):
    kw.setdefault("max_iterations", 50)
    args = {"start": START, "goal": GOAL, "terrain": HM, "bounds": BOUNDS, **kw}
    return PlanProblem(**args)


def wind_problem(wind, **kw):
    field = uniform_field(build_grid(HM, n_z=2, top=500.0), wind)
    return problem(field=field, objective="time", **kw)


def random_states(n, seed):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(0, 1500, n), rng.uniform(0, 1000, n),
                            rng.uniform(20, 300, n), rng.uniform(-math.pi, math.pi, n)])


class TestProblem:
    def test_defaults(self):
        pb = problem()
        assert pb.d_max == pytest.approx(0.2 * math.hypot(1500, 1000))
        assert pb.d_icc == 10.0 and pb.k_rrg == pytest.approx(2 * math.e)
        assert pb.wind_max.tolist() == [0.0, 0.0, 0.0]

    @pytest.mark.parametrize("kw", [
        {"objective": "fastest"},
        {"max_iterations": None},
        {"bounds": ((0, 0, 0), (0, 1000, 300))},
        {"d_max": 0.0},
        {"d_icc": -1.0},
        {"goal_bias": 1.0},
        {"start": (250.0, 500.0, 5.0, 0.0)},
        {"goal": (5000.0, 500.0, 100.0, 0.0)},
    ])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            problem(**kw)

    def test_preevaluate_replaces_terrain(self):
        pb = problem(preevaluate=True)
        assert pb.terrain.preevaluated and not HM.preevaluated


class TestHeuristics:
    def test_state_on_segment_gives_straight_distance(self):
        pb = problem()
        assert heuristic_length((700.0, 500.0, 100.0, 2.0), pb) == pytest.approx(1000.0)

    def test_climb_limited_leg(self):
        pb = problem()
        q = (250.0, 500.0, 200.0, 0.0)
        # straight up from the start is climb-limited; the long descent is not
        assert heuristic_length(q, pb) == pytest.approx(
            100.0 / math.sin(0.15) + math.hypot(1000.0, 100.0))

    def test_zero_wind_time_is_distance_over_airspeed(self):
        pb = wind_problem((0.0, 0.0, 0.0))
        q = (700.0, 800.0, 150.0, 0.0)
        d1 = math.dist(START[:3], q[:3])
        d2 = math.dist(q[:3], GOAL[:3])
        assert heuristic_time(q, pb) == pytest.approx((d1 - 1.0 + d2 - 1.0) / P.v_air)

    def test_uniform_tailwind_time(self):
        pb = wind_problem((4.0, 0.0, 0.0))
        # both legs along +x at ground speed 13, each shortened by the 1 m tolerance
        assert heuristic_time((750.0, 500.0, 100.0, 0.0), pb) == pytest.approx(998.0 / 13.0)

    def test_dispatch_follows_objective(self):
        Q = random_states(20, 0)
        np.testing.assert_array_equal(heuristic_many(Q, problem()),
                                      [heuristic_length(q, problem()) for q in Q])
        pb = wind_problem((2.0, 1.0, 0.0))
        np.testing.assert_array_equal(heuristic_many(Q, pb), [heuristic_time(q, pb) for q in Q])

    def test_length_heuristic_is_admissible(self):
        pb = problem()
        for q in random_states(300, 1):
            assert heuristic_length(q, pb) <= true_cost_via(q, pb) + 1e-9

    def test_time_heuristic_is_admissible_in_uniform_wind(self):
        pb = wind_problem((3.0, -2.0, 0.0))
        for q in random_states(60, 2):
            c = true_cost_via(q, pb)
            if math.isfinite(c):
                assert heuristic_time(q, pb) <= c + 1e-9

    def test_time_heuristic_is_admissible_in_sheared_bands(self):
        pb = W0.problem("time")
        rng = np.random.default_rng(3)
        lo, hi = pb.lo, pb.hi
        for _ in range(40):
            q = (*rng.uniform(lo, hi), rng.uniform(-math.pi, math.pi))
            c = true_cost_via(q, pb)
            if math.isfinite(c):
                assert heuristic_many(np.array([q]), pb)[0] <= c + 1e-9


class TestEdgeCost:
    def test_length_objective(self):
        m = dubins_airplane((0, 0, 100, 0), (900, 0, 100, 0), P)
        assert edge_cost(m, "shortest") == pytest.approx(900.0)

    def test_time_objective(self):
        wf = uniform_field(build_grid(HM, n_z=2, top=500.0), (0.0, 0.0, 0.0))
        gp = dubins_with_wind((0, 0, 100, 0), (900, 0, 100, 0), wf, P)
        assert edge_cost(gp, "time") == pytest.approx(100.0)
        assert edge_cost(gp, "shortest") == pytest.approx(900.0)

    def test_time_needs_ground_path(self):
        m = dubins_airplane((0, 0, 100, 0), (900, 0, 100, 0), P)
        with pytest.raises(TypeError):
            edge_cost(m, "time")
        with pytest.raises(ValueError):
            edge_cost(m, "fastest")


class TestNearestNeighbors:
    @pytest.mark.parametrize("direction", ["from_tree", "to_tree"])
    def test_bounded_matches_exhaustive(self, direction):
        states = random_states(400, 4)
        for q in random_states(30, 5):
            for k in (1, 5, 16):
                ids_e, d_e = knn_exhaustive(states, q, k, P, direction)
                ids_b, d_b = knn_bounded(states, q, k, P, direction)
                np.testing.assert_array_equal(ids_b, ids_e)
                np.testing.assert_allclose(d_b, d_e)

    def test_exhaustive_is_sorted_true_distance(self):
        states = random_states(100, 6)
        q = random_states(1, 7)[0]
        ids, d = knn_exhaustive(states, q, 10, P)
        full = airplane_length_many(states, q, P)
        assert np.all(np.diff(d) >= 0)
        np.testing.assert_allclose(d, np.sort(full)[:10])
        np.testing.assert_allclose(full[ids], d)

    def test_directions_differ(self):
        states = random_states(200, 8)
        q = random_states(1, 9)[0]
        _, d_in = knn_exhaustive(states, q, 200, P, "from_tree")
        _, d_out = knn_exhaustive(states, q, 200, P, "to_tree")
        assert not np.allclose(d_in, d_out)

    def test_bounded_prunes_candidates(self):
        states = random_states(2000, 10)
        st = {}
        knn_bounded(states, random_states(1, 11)[0], 5, P, stats=st)
        assert 5 <= st["evaluated"] < 2000

    def test_k_clamped(self):
        states = random_states(3, 12)
        assert len(knn_exhaustive(states, states[0], 10, P)[0]) == 3
        assert len(knn_bounded(states, states[0], 0, P)[0]) == 1
        with pytest.raises(ValueError):
            knn_exhaustive(states, states[0], 1, P, "sideways")

    def test_k_for(self):
        assert k_for(1, 2 * math.e) == 1
        assert k_for(2, 2 * math.e) == 2
        assert k_for(100, 2 * math.e) == math.ceil(2 * math.e * math.log(100))


class TestSampling:
    def test_uniform_before_solution(self):
        pb = problem(obstacle_aware=False)
        rng = np.random.default_rng(13)
        Z = np.array([sample(pb, math.inf, rng).z for _ in range(4000)])
        assert Z.min() >= 0 and Z.max() <= 300
        counts, _ = np.histogram(Z, bins=10, range=(0, 300))
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_informed_samples_respect_cost(self):
        pb = problem()
        c_best = 1100.0
        lo, hi = informed_box(pb, c_best)
        assert np.all(lo >= pb.lo) and np.all(hi <= pb.hi)
        rng = np.random.default_rng(14)
        for _ in range(500):
            q = sample(pb, c_best, rng)
            assert heuristic_length(q, pb) <= c_best
            assert np.all(np.asarray(q[:3]) >= lo) and np.all(np.asarray(q[:3]) <= hi)

    def test_informed_box_contains_the_ellipsoid(self):
        pb = problem(obstacle_aware=False)
        c_best = 1200.0
        lo, hi = informed_box(pb, c_best)
        rng = np.random.default_rng(15)
        Q = np.column_stack([rng.uniform(pb.lo, pb.hi, (20000, 3)), np.zeros(20000)])
        inside = heuristic_many(Q, pb) <= c_best
        assert inside.sum() > 100
        assert np.all(Q[inside, :3] >= lo - 1e-9) and np.all(Q[inside, :3] <= hi + 1e-9)

    def test_obstacle_aware_keeps_length_samples_above_endpoints(self):
        pb = problem()
        rng = np.random.default_rng(16)
        assert all(sample(pb, math.inf, rng).z >= 100.0 for _ in range(300))

    def test_empty_informed_set(self):
        pb = problem()
        assert sample(pb, 10.0, np.random.default_rng(0)) is None


class TestMotionTree:
    def test_reparent_propagates_cost(self):
        t = MotionTree(capacity=2)
        t.add((0, 0, 0, 0), -1, 0.0, None, 0.0)
        a = t.add((1, 0, 0, 0), 0, 10.0, None, 10.0)
        b = t.add((2, 0, 0, 0), a, 15.0, None, 5.0)
        c = t.add((3, 0, 0, 0), b, 18.0, None, 3.0)
        d = t.add((4, 0, 0, 0), 0, 4.0, None, 4.0)
        t.reparent(b, d, None, 2.0)
        assert t.cost[b] == 6.0 and t.cost[c] == 9.0
        assert all(t.cost[i] == pytest.approx(t.recomputed_cost(i)) for i in t.alive_ids())
        assert t.path_to(c) == [0, d, b, c]

    def test_remove_subtree(self):
        t = MotionTree()
        t.add((0, 0, 0, 0), -1, 0.0, None, 0.0)
        a = t.add((1, 0, 0, 0), 0, 1.0, None, 1.0)
        t.add((2, 0, 0, 0), a, 2.0, None, 1.0)
        t.add((3, 0, 0, 0), 0, 1.0, None, 1.0)
        assert t.remove_subtree(a) == 2
        assert t.size == 2 and t.alive_ids().tolist() == [0, 3]


def run_planner(pb):
    planner = _Planner(pb)
    return planner, planner.run()


class TestPlan:
    def test_empty_map_reaches_near_optimum(self):
        res = plan(EMPTY.problem(max_iterations=300, seed=1))
        assert res.solved
        assert 1000.0 - 1e-6 <= res.cost <= 1050.0

    def test_tree_costs_are_consistent(self):
        for objective, sc in (("shortest", EMPTY), ("time", W0)):
            planner, res = run_planner(sc.problem(objective, max_iterations=60, seed=2))
            tree = planner.tree
            for i in tree.alive_ids()[1:]:
                assert tree.cost[i] == pytest.approx(tree.recomputed_cost(i), rel=1e-9)
                m = tree.motions[i]
                end = m.end if objective == "shortest" else m.air.end
                if objective == "shortest":
                    assert math.dist(end[:3], tree.states[i][:3]) < 1e-6
                p = tree.parent[i]
                assert tree.alive[p]

    def test_path_matches_cost(self):
        res = plan(EMPTY.problem(max_iterations=150, seed=3))
        assert res.cost == pytest.approx(sum(m.length for m in res.motions))
        assert tuple(res.states[0]) == tuple(EMPTY.start)
        assert tuple(res.states[-1]) == tuple(EMPTY.goal)

    def test_trace_is_anytime(self):
        res = plan(EMPTY.problem(max_iterations=300, seed=4))
        its = [i for i, _ in res.trace]
        costs = [c for _, c in res.trace]
        assert its == sorted(its) and len(set(its)) == len(its)
        assert all(a > b for a, b in zip(costs, costs[1:]))
        assert costs[-1] == res.cost and res.first_solution_iteration == its[0]

    def test_deterministic_for_seed(self):
        a = plan(EMPTY.problem(max_iterations=120, seed=5)).to_json()
        b = plan(EMPTY.problem(max_iterations=120, seed=5)).to_json()
        c = plan(EMPTY.problem(max_iterations=120, seed=6)).to_json()
        assert a == b and a != c
        assert "timing" not in a

    def test_deterministic_time_objective(self):
        a = plan(W0.problem("time", max_iterations=40, seed=7)).to_json()
        b = plan(W0.problem("time", max_iterations=40, seed=7)).to_json()
        assert a == b

    def test_knobs_do_not_break_solutions(self):
        for kw in ({"two_way_knn": False}, {"custom_knn": False}, {"preevaluate": True},
                   {"informed": False}, {"obstacle_aware": False}):
            res = plan(EMPTY.problem(max_iterations=150, seed=8, **kw))
            assert res.solved and res.cost >= 1000.0 - 1e-6

    def test_custom_knn_does_not_change_result(self):
        a = plan(EMPTY.problem(max_iterations=100, seed=9, custom_knn=True))
        b = plan(EMPTY.problem(max_iterations=100, seed=9, custom_knn=False))
        assert a.cost == b.cost and a.trace == b.trace

    def test_seconds_budget(self):
        res = plan(EMPTY.problem(max_iterations=None, max_seconds=0.3, seed=0))
        assert res.iterations > 0 and res.timing["elapsed"] < 1.5

    def test_unsolved_result(self):
        res = plan(EMPTY.problem(max_iterations=1, seed=0, goal_bias=0.0))
        assert not res.solved and res.cost == math.inf
        assert res.to_dict()["cost"] is None
