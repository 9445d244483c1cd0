"""Scenario generators, reference oracles, error metrics and the benchmark harness."""

import csv
import json
import math

import numpy as np
import pytest

from windnav.bench import (RUN_COLUMNS, SCENARIOS, TRACE_COLUMNS, PlannerConfig, bbox_sweep,
                           flat_terrain, hemisphere_analytic, heuristic_quality, make_scenario,
                           mountain_valley_terrain, ramp_terrain, ridge_terrain, run_benchmark,
                           summarize_runs, valley_terrain, wind_errors, write_csv)
from windnav.terrain import states_valid
from windnav.wind_grid import WindProfile

R = 0.25


def profile(rows):
    return WindProfile(0.0, 0.0, rows)


class TestTerrainGenerators:
    def test_valley_constriction(self):
        hm, halfwidth = valley_terrain()
        assert halfwidth.max() == pytest.approx(480.0)
        assert halfwidth.min() == pytest.approx(120.0)
        assert hm.max_height == pytest.approx(500.0)
        # floor is flat at the center column inside the constricted half-width
        j = hm.ny // 2
        assert hm.heights[j, hm.nx // 2] == 0.0

    def test_ramp_slope(self):
        hm = ramp_terrain()
        xc, _ = hm.cell_centers()
        row = hm.heights[0]
        on_ramp = (xc > -200) & (xc < 200)
        np.testing.assert_allclose(np.diff(row[on_ramp]) / hm.cell_size, 0.4)
        assert row[xc >= 200].min() == pytest.approx(160.0)
        assert row[xc <= -200].max() == 0.0

    def test_flat_and_ridge(self):
        hm = flat_terrain(1500.0, 1000.0, 50.0, height=3.0)
        assert (hm.nx, hm.ny) == (30, 20) and np.all(hm.heights == 3.0)
        ridge = ridge_terrain()
        assert np.all(ridge.heights == ridge.heights[0])
        assert ridge.max_height == pytest.approx(200.0, rel=1e-2)

    def test_mountain_valley_range(self):
        hm = mountain_valley_terrain()
        assert hm.heights.min() == pytest.approx(1550.0)
        assert hm.heights.max() <= 2100.0


class TestHemisphereOracle:
    def test_stagnation_point(self):
        np.testing.assert_allclose(hemisphere_analytic((-R, 0.0, 0.0)), 0.0, atol=1e-12)

    def test_apex_speed(self):
        np.testing.assert_allclose(hemisphere_analytic((0.0, 0.0, R)), (1.5, 0.0, 0.0))

    def test_far_field(self):
        np.testing.assert_allclose(hemisphere_analytic((100.0, 30.0, 50.0)), (1.0, 0.0, 0.0),
                                   atol=1e-6)

    def test_inside_raises(self):
        with pytest.raises(ValueError):
            hemisphere_analytic((0.0, 0.0, 0.1))

    def test_flow_is_tangent_to_the_body(self):
        rng = np.random.default_rng(0)
        n = rng.normal(size=(200, 3))
        n[:, 2] = np.abs(n[:, 2])
        n /= np.linalg.norm(n, axis=1)[:, None]
        v = hemisphere_analytic(R * n)
        np.testing.assert_allclose(np.einsum("ij,ij->i", v, n), 0.0, atol=1e-12)

    def test_divergence_free_and_wall_tangent(self):
        rng = np.random.default_rng(1)
        p = rng.uniform([-1, -1, 0.05], [1, 1, 1], (200, 3))
        p = p[np.linalg.norm(p, axis=1) > 0.35]
        h = 1e-5
        div = sum((hemisphere_analytic(p + h * e)[:, c] - hemisphere_analytic(p - h * e)[:, c]) / (2 * h)
                  for c, e in enumerate(np.eye(3)))
        np.testing.assert_allclose(div, 0.0, atol=1e-6)
        wall = np.column_stack([rng.uniform(0.3, 1, 50), rng.uniform(-1, 1, 50), np.zeros(50)])
        np.testing.assert_allclose(hemisphere_analytic(wall)[:, 2], 0.0, atol=1e-15)


class TestWindErrors:
    def test_worked_example(self):
        meas = profile([[0, 5, 0, 0], [100, 5, 0, 0]])
        pred = profile([[0, 9.5, 0, -1.5], [100, 5, 0, 0]])
        rep = wind_errors(pred, meas)
        assert rep.e_hor.tolist() == pytest.approx([0.5, 0.0])
        assert rep.e_ver.tolist() == pytest.approx([-0.5, 0.0])
        assert rep.rmse_hor == pytest.approx(math.sqrt(0.125))

    def test_climb_side_uses_climb_rate(self):
        meas = profile([[0, 0, 0, 0], [10, 0, 0, 0]])
        pred = profile([[0, 0, 0, 1.5], [10, 0, 0, 0]])
        assert wind_errors(pred, meas).e_ver[0] == pytest.approx(1.0)

    def test_identical_profiles(self):
        p = profile([[0, 3, 1, 0.5], [50, 4, -2, 0.2], [90, 1, 1, 1]])
        rep = wind_errors(p, p)
        assert rep.total == 0.0 and not rep.e_hor.any() and not rep.e_ver.any()

    def test_sum_is_total(self):
        rng = np.random.default_rng(2)
        z = np.arange(6) * 20.0
        meas = profile(np.column_stack([z, rng.normal(size=(6, 3))]))
        pred = profile(np.column_stack([z, rng.normal(size=(6, 3))]))
        d = wind_errors(pred, meas, kind="initial").to_dict()
        assert d["sum"] == pytest.approx(d["rmse_hor"] + d["rmse_ver"])
        assert d["kind"] == "initial" and json.loads(json.dumps(d)) == d

    def test_mismatched_levels(self):
        with pytest.raises(ValueError):
            wind_errors(profile([[0, 0, 0, 0], [10, 0, 0, 0]]), profile([[0, 0, 0, 0], [20, 0, 0, 0]]))


class TestScenarios:
    def test_all_named(self):
        assert set(SCENARIOS) == {"valley", "ramp", "hemisphere", "empty", "w0", "w1", "w2", "w3",
                                  "ridge-gale"}

    def test_unknown_raises(self):
        with pytest.raises(ValueError, match="unknown scenario"):
            make_scenario("canyon")

    @pytest.mark.parametrize("name", ["empty", "w0", "w1", "w2", "w3", "ridge-gale"])
    def test_planning_endpoints_are_valid(self, name):
        sc = make_scenario(name)
        pts = np.array([sc.start[:3], sc.goal[:3]])
        assert states_valid(sc.terrain, pts, sc.bbox).all()
        pb = sc.problem()
        assert np.all(pb.lo <= pts) and np.all(pts <= pb.hi)

    @pytest.mark.parametrize("name", ["w0", "w2", "ridge-gale"])
    def test_deterministic(self, name):
        a, b = make_scenario(name), make_scenario(name)
        np.testing.assert_array_equal(a.field.vectors, b.field.vectors)
        np.testing.assert_array_equal(a.terrain.heights, b.terrain.heights)
        assert a.to_dict() == b.to_dict()

    def test_band_speeds(self):
        assert make_scenario("w0").params["wind_speed"] == 4.5
        assert make_scenario("w1").params["wind_speed"] == 6.0
        sc = make_scenario("w0", speed=2.0)
        assert np.abs(sc.field.vectors[..., 0]).max() == pytest.approx(2.0, rel=1e-3)

    def test_downscaling_scenarios_keep_result(self):
        sc = make_scenario("ramp")
        assert sc.downscaled is not None and sc.metadata["alpha"] == pytest.approx(0.16)
        with pytest.raises(ValueError):
            sc.problem()

    def test_with_bbox_keeps_endpoints(self):
        sc = make_scenario("empty")
        big = sc.with_bbox(60.0)
        assert big.bbox.side == 60.0 and big.start == sc.start and sc.bbox.side != 60.0


class TestHeuristicQuality:
    def test_length_on_empty_map(self):
        q = heuristic_quality(make_scenario("empty"), "shortest", n=500)
        assert q["violations"] == 0 and q["evaluated"] == 500
        assert 0.5 < q["mean_quality"] <= 1.0

    def test_time_in_wind_reports_unreachable(self):
        q = heuristic_quality(make_scenario("w1"), "time", n=60)
        assert q["violations"] == 0
        assert q["evaluated"] + q["unreachable"] == 60


def fake_run(seed, cost, feasible, reason=""):
    return {"seed": seed,
            "plan": {"solved": cost is not None, "cost": cost, "iterations": 10,
                     "first_solution_iteration": 3 if cost is not None else None},
            "simulation": {"feasible": feasible, "flight_time": cost and cost / 9.0,
                           "reason": reason}}


class TestHarness:
    def test_summary_counts(self):
        runs = [fake_run(0, 1000.0, True), fake_run(1, 1100.0, False, "terrain collision"),
                fake_run(2, None, False, "no solution"), fake_run(3, 1200.0, True)]
        s = summarize_runs(runs, reference_cost=1000.0)
        assert (s["runs"], s["solved"], s["feasible"]) == (4, 3, 2)
        assert s["feasibility"] == 0.5
        assert s["cost_quartiles"] == pytest.approx([1050.0, 1100.0, 1150.0])
        assert s["failures"] == {"no solution": 1, "terrain collision": 1}
        assert s["normalized_cost_quartiles"][1] == pytest.approx(1.1)

    def test_summary_ignores_order(self):
        runs = [fake_run(i, 1000.0 + i, i % 2 == 0) for i in range(5)]
        assert summarize_runs(runs) == summarize_runs(runs[::-1])

    def test_run_and_csv(self, tmp_path):
        sc = make_scenario("empty")
        cfgs = [PlannerConfig("rrt*", knobs={"informed": False}), PlannerConfig("informed")]
        bench = run_benchmark(sc, cfgs, seeds=2, max_iterations=60)
        assert [c["name"] for c in bench["configs"]] == ["rrt*", "informed"]
        assert all("timing" not in r for c in bench["configs"] for r in c["runs"])
        runs_path, traces_path = write_csv(bench, tmp_path / "out")
        with open(runs_path) as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == RUN_COLUMNS and len(rows) == 5
        with open(traces_path) as f:
            trows = list(csv.reader(f))
        assert tuple(trows[0]) == TRACE_COLUMNS
        n_trace = sum(len(r["plan"]["trace"]) for c in bench["configs"] for r in c["runs"])
        assert len(trows) == 1 + n_trace

    def test_reproducible_json(self):
        sc = make_scenario("empty")
        cfg = [PlannerConfig("informed")]
        a = json.dumps(run_benchmark(sc, cfg, seeds=[3], max_iterations=50), sort_keys=True)
        b = json.dumps(run_benchmark(sc, cfg, seeds=[3], max_iterations=50), sort_keys=True)
        assert a == b

    def test_timing_on_request(self):
        bench = run_benchmark(make_scenario("empty"), [PlannerConfig("x")], seeds=1,
                              max_iterations=20, include_timing=True)
        assert "elapsed" in bench["configs"][0]["runs"][0]["timing"]

    def test_reference_run(self):
        bench = run_benchmark(make_scenario("empty"), [PlannerConfig("x")], seeds=1,
                              max_iterations=40, reference_iterations=80)
        s = bench["configs"][0]["summary"]
        assert s["reference_cost"] >= 1000.0 - 1e-6

    def test_bbox_sweep_configs(self):
        out = bbox_sweep(make_scenario("empty"), factors=(1, 2), seeds=1, max_iterations=20)
        assert [c["bbox_factor"] for c in out["configs"]] == [1.0, 2.0]
