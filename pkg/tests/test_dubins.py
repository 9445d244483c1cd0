"""Dubins car and Dubins airplane paths."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windnav import dubins
from windnav.dubins import (CASE_HIGH, CASE_LOW, CASE_MEDIUM, WORDS, AircraftParams, AirplaneState,
                            airplane_length, airplane_length_many, approx_distance,
                            approx_distance_many, dubins_airplane, dubins_car,
                            dubins_car_length_many, interpolate_naive, wrap_angle)

P = AircraftParams()
R = P.r_turn

coord = st.floats(-400, 400, allow_nan=False)
alt = st.floats(-200, 200, allow_nan=False)
heading = st.floats(-math.pi, math.pi, allow_nan=False, exclude_max=True)
states = st.tuples(coord, coord, alt, heading)


def random_pairs(n, seed=0, span=500.0, dz=300.0):
    rng = np.random.default_rng(seed)
    a = np.column_stack([rng.uniform(-span, span, (n, 2)), rng.uniform(-dz, dz, n),
                         rng.uniform(-math.pi, math.pi, n)])
    b = np.column_stack([rng.uniform(-span, span, (n, 2)), rng.uniform(-dz, dz, n),
                         rng.uniform(-math.pi, math.pi, n)])
    return a, b


def brute_force_car(q1, q2, r):
    """Minimum over every word that exists, without the long-path shortcut."""
    return dubins_car(q1, q2, r, words=WORDS).length


class TestAircraftParams:
    def test_defaults(self):
        assert (P.v_air, P.gamma_max, P.r_turn) == (9.0, 0.15, 25.0)

    @pytest.mark.parametrize("kw", [{"v_air": 0}, {"gamma_max": 0}, {"gamma_max": math.pi / 2},
                                    {"r_turn": -1}])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            AircraftParams(**kw)

    def test_radius_from_bank_angle(self):
        p = AircraftParams.from_bank_angle(9.0, 0.15, math.radians(30))
        assert p.r_turn == pytest.approx(81.0 / (math.tan(math.radians(30)) * 9.81))

    def test_state_heading_normalized(self):
        q = AirplaneState(0, 0, 0, 3 * math.pi).normalized()
        assert -math.pi <= q.psi < math.pi
        assert q.psi == pytest.approx(-math.pi)


class TestDubinsCar:
    def test_identical_states_have_zero_length(self):
        assert dubins_car((3, 4, 0.7), (3, 4, 0.7), R).length == pytest.approx(0.0, abs=1e-9)

    def test_aligned_collinear_is_straight(self):
        path = dubins_car((0, 0, 0), (10 * R, 0, 0), R)
        assert path.length == pytest.approx(10 * R)
        assert path.word in ("LSL", "RSR")

    def test_u_turn_in_place_needs_half_circle(self):
        # reversing heading with the goal one diameter to the left is a single left half turn
        path = dubins_car((0, 0, 0), (0, 2 * R, math.pi), R)
        assert path.length == pytest.approx(math.pi * R)

    def test_matches_brute_force_on_random_pairs(self):
        a, b = random_pairs(10_000, seed=1, span=6 * R)
        for q1, q2 in zip(a, b):
            got = dubins_car(q1[[0, 1, 3]], q2[[0, 1, 3]], R).length
            assert got == pytest.approx(brute_force_car(q1[[0, 1, 3]], q2[[0, 1, 3]], R),
                                        abs=1e-9 * R)

    def test_vectorized_matches_scalar(self):
        a, b = random_pairs(2000, seed=2, span=8 * R)
        many = dubins_car_length_many(a[:, 0], a[:, 1], a[:, 3], b[:, 0], b[:, 1], b[:, 3], R)
        one = [dubins_car(p[[0, 1, 3]], q[[0, 1, 3]], R).length for p, q in zip(a, b)]
        np.testing.assert_allclose(many, one, rtol=0, atol=1e-9)

    def test_asymmetric_pair_exists(self):
        q1, q2 = (0.0, 0.0, 0.0), (60.0, 0.0, math.pi / 2)
        assert dubins_car(q1, q2, R).length != pytest.approx(dubins_car(q2, q1, R).length)

    def test_mirror_pairs_are_symmetric(self):
        a, b = random_pairs(500, seed=9, span=5 * R)
        for (x1, y1, _, t1), (x2, y2, _, t2) in zip(a, b):
            ref = dubins_car((x1, y1, t1), (x2, y2, t2), R).length
            # reflection across the x axis swaps left and right turns
            refl = dubins_car((x1, -y1, -t1), (x2, -y2, -t2), R).length
            # flying the reversed path backwards
            back = dubins_car((x2, y2, t2 + math.pi), (x1, y1, t1 + math.pi), R).length
            assert refl == pytest.approx(ref, abs=1e-9)
            assert back == pytest.approx(ref, abs=1e-9)


class TestDubinsAirplane:
    def test_level_path_equals_car_path(self):
        q1, q2 = AirplaneState(0, 0, 50, 0.3), AirplaneState(300, -120, 50, 2.0)
        path = dubins_airplane(q1, q2, P)
        car = dubins_car((0, 0, 0.3), (300, -120, 2.0), R)
        assert path.case == CASE_LOW
        assert path.gamma == 0.0
        assert path.length == pytest.approx(car.length)

    def test_pure_climb_single_helix(self):
        h = 2 * math.pi * R * P.tan_gamma
        path = dubins_airplane((0, 0, 0, 0), (0, 0, h, 0), P)
        assert path.length == pytest.approx(2 * math.pi * R / math.cos(P.gamma_max))
        assert abs(path.gamma) == pytest.approx(P.gamma_max)

    def test_cases_and_climb_angle_bound(self):
        a, b = random_pairs(3000, seed=3)
        seen = set()
        for q1, q2 in zip(a, b):
            path = dubins_airplane(q1, q2, P)
            seen.add(path.case)
            assert abs(path.gamma) <= P.gamma_max + 1e-12
            assert len(path.segments) <= 6
        assert seen == {CASE_LOW, CASE_MEDIUM, CASE_HIGH}

    def test_helix_count_formula(self):
        q1, q2 = AirplaneState(0, 0, 0, 0), AirplaneState(100, 0, 400, 0)
        path = dubins_airplane(q1, q2, P)
        l_car = 100.0
        k = math.ceil((400 / P.tan_gamma - l_car) / (2 * math.pi * R))
        assert path.case == CASE_HIGH
        assert path.segments[0].kind == "H"
        assert path.segments[0].length == pytest.approx(2 * math.pi * R * k)

    def test_scalar_and_vector_lengths_agree(self):
        a, b = random_pairs(2000, seed=4)
        many = airplane_length_many(a, b, P)
        for q1, q2, m in zip(a, b, many):
            assert m == pytest.approx(dubins_airplane(q1, q2, P).length, abs=1e-9)
            assert m == pytest.approx(airplane_length(q1, q2, P), abs=1e-9)

    @settings(max_examples=300, deadline=None)
    @given(states, states)
    def test_end_state_reaches_goal(self, q1, q2):
        path = dubins_airplane(q1, q2, P)
        end = path.end
        assert math.dist(end[:3], q2[:3]) < 1e-6
        assert abs(wrap_angle(end.psi - q2[3])) < 1e-8

    @settings(max_examples=300, deadline=None)
    @given(states, states)
    def test_length_sandwich(self, q1, q2):
        d = dubins_airplane(q1, q2, P).length
        lo = approx_distance(q1, q2, P)
        assert lo - 1e-9 <= d <= lo + P.nn_slack + 1e-9

    def test_approx_distance_examples(self):
        assert approx_distance((0, 0, 0, 0), (100, 0, 0, 0), P) == pytest.approx(100.0)
        # climb-limited: 10 / sin(0.15) = 66.917
        assert approx_distance((0, 0, 0, 0), (1, 0, 10, 0), P) == pytest.approx(66.917, abs=1e-3)

    def test_approx_distance_vectorized(self):
        a, b = random_pairs(500, seed=5)
        many = approx_distance_many(a, b, P)
        np.testing.assert_allclose(many, [approx_distance(p, q, P) for p, q in zip(a, b)])


class TestInterpolation:
    def test_endpoints(self):
        q1, q2 = AirplaneState(10, 20, 30, 1.0), AirplaneState(-200, 340, 90, -2.5)
        path = dubins_airplane(q1, q2, P)
        assert path.interpolate(0.0) == q1.normalized()
        end = path.interpolate(1.0)
        assert math.dist(end[:3], q2[:3]) < 1e-6
        assert abs(wrap_angle(end.psi - q2.psi)) < 1e-8

    def test_straight_midpoint(self):
        path = dubins_airplane((0, 0, 0, 0), (400, 0, 20, 0), P)
        mid = path.interpolate(0.5)
        assert mid[:3] == pytest.approx((200.0, 0.0, 10.0))

    def test_cached_matches_naive(self):
        a, b = random_pairs(1000, seed=6)
        rng = np.random.default_rng(7)
        for q1, q2 in zip(a, b):
            path = dubins_airplane(q1, q2, P)
            t = float(rng.uniform())
            got, ref = path.interpolate(t), interpolate_naive(path, t)
            assert math.dist(got[:3], ref[:3]) < 1e-9
            assert abs(wrap_angle(got.psi - ref.psi)) < 1e-9

    def test_vectorized_matches_scalar(self):
        path = dubins_airplane((0, 0, 0, 0), (50, 80, 300, 2.0), P)
        ts = np.linspace(0, 1, 57)
        arr = path.states_at(ts)
        for t, row in zip(ts, arr):
            q = path.interpolate(t)
            assert row[:3] == pytest.approx(q[:3], abs=1e-9)
            assert abs(wrap_angle(row[3] - q.psi)) < 1e-9

    def test_cached_interpolation_skips_earlier_segments(self, monkeypatch):
        path = dubins_airplane((0, 0, 0, 0), (-30, 200, 250, 1.0), P)
        assert len(path.segments) >= 3
        path.segment_ends  # build the cache
        calls = []
        real = dubins._advance
        monkeypatch.setattr(dubins, "_advance", lambda *a: calls.append(1) or real(*a))
        path.interpolate(0.999)
        assert len(calls) == 1
        calls.clear()
        interpolate_naive(path, 0.999)
        assert len(calls) == len(path.segments)

    def test_finite_difference_tangent(self):
        a, b = random_pairs(200, seed=8)
        for q1, q2 in zip(a, b):
            path = dubins_airplane(q1, q2, P)
            if path.length < 1.0:
                continue
            h = 1e-5
            for t in (0.13, 0.41, 0.77):
                p0, p1 = path.interpolate(t - h), path.interpolate(t + h)
                d = np.subtract(p1[:3], p0[:3]) / (2 * h * path.length)
                heading_fd = math.atan2(d[1], d[0])
                mid = path.interpolate(t)
                assert abs(wrap_angle(heading_fd - mid.psi)) < 1e-3
                assert math.asin(np.clip(d[2] / np.linalg.norm(d), -1, 1)) == pytest.approx(
                    path.gamma, abs=1e-3)

    def test_sample_spacing(self):
        path = dubins_airplane((0, 0, 0, 0), (300, 100, 40, 1.0), P)
        pts = path.sample(7.0)
        steps = [math.dist(a[:3], b[:3]) for a, b in zip(pts, pts[1:])]
        assert max(steps) <= 7.0 + 1e-9
        assert pts[0] == path.start.normalized()

    def test_export_is_json(self):
        path = dubins_airplane((0, 0, 0, 0), (300, 100, 40, 1.0), P)
        d = json.loads(json.dumps(path.to_dict()))
        assert d["word"] == path.word
        assert d["segments"][-1]["end"] == pytest.approx(list(path.end))
