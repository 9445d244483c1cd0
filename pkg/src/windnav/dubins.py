"""Dubins car and Dubins airplane paths.

The airplane path is the planar Dubins car path between the projected
states, lifted to 3D with a constant flight path angle. When the planar
path is too short to reach the goal altitude at the maximum climb angle,
full turns are added: one extra turn on the first turn segment when a
single turn suffices (medium altitude, approximate), otherwise an integer
number of helix turns at the start (high altitude).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi
G = 9.81

# normalized turn angles closer than this to a full turn are snapped to zero
_FULL_TURN_SNAP = 1e-10

WORDS = ("LSL", "RSR", "LSR", "RSL", "RLR", "LRL")
CSC_WORDS = WORDS[:4]

_TURN_DIRECTION = {"L": 1, "R": -1, "S": 0}

CASE_LOW = "low"
CASE_MEDIUM = "medium-approx"
CASE_HIGH = "high"


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    w = (a + math.pi) % TWO_PI - math.pi
    # the modulo can round up to exactly 2pi for tiny negative inputs
    if w >= math.pi:
        w -= TWO_PI
    return w


def _mod2pi(a: float) -> float:
    m = a % TWO_PI
    if m > TWO_PI - _FULL_TURN_SNAP:
        return 0.0
    return m


def _mod2pi_arr(a: np.ndarray) -> np.ndarray:
    m = np.mod(a, TWO_PI)
    return np.where(m > TWO_PI - _FULL_TURN_SNAP, 0.0, m)


class AirplaneState(NamedTuple):
    """Position [m] and heading [rad] of the aircraft."""

    x: float
    y: float
    z: float
    psi: float

    def normalized(self) -> "AirplaneState":
        return AirplaneState(self.x, self.y, self.z, wrap_angle(self.psi))

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class AircraftParams:
    """Airspeed [m/s], maximum flight path angle [rad], minimum turn radius [m]."""

    v_air: float = 9.0
    gamma_max: float = 0.15
    r_turn: float = 25.0

    def __post_init__(self):
        if not self.v_air > 0:
            raise ValueError(f"v_air must be positive, got {self.v_air}")
        if not 0 < self.gamma_max < math.pi / 2:
            raise ValueError(f"gamma_max must be in (0, pi/2), got {self.gamma_max}")
        if not self.r_turn > 0:
            raise ValueError(f"r_turn must be positive, got {self.r_turn}")

    @classmethod
    def from_bank_angle(cls, v_air: float, gamma_max: float, phi_max: float) -> "AircraftParams":
        """Build parameters from the maximum bank angle instead of the turn radius."""
        return cls(v_air, gamma_max, v_air**2 / (math.tan(phi_max) * G))

    @property
    def tan_gamma(self) -> float:
        return math.tan(self.gamma_max)

    @property
    def sin_gamma(self) -> float:
        return math.sin(self.gamma_max)

    @property
    def nn_slack(self) -> float:
        """Upper bound on the gap between the Dubins length and the approximate distance."""
        return (4.0 * math.pi + 2.0) * self.r_turn / math.cos(self.gamma_max)


# ---------------------------------------------------------------------------
# Dubins car


class CarPath(NamedTuple):
    word: str
    lengths: tuple  # (t, p, q) arc lengths in meters
    r: float

    @property
    def length(self) -> float:
        return self.lengths[0] + self.lengths[1] + self.lengths[2]


def _word(word, d, alpha, beta, sa, sb, ca, cb, cab):
    """Normalized (t, p, q) for one maneuver type, or None if it does not exist."""
    # the same-side words are a sum of squares; hypot keeps tiny lengths exact
    if word == "LSL":
        tmp = math.atan2(cb - ca, d + sa - sb)
        return _mod2pi(tmp - alpha), math.hypot(d + sa - sb, cb - ca), _mod2pi(beta - tmp)
    if word == "RSR":
        tmp = math.atan2(ca - cb, d - sa + sb)
        return _mod2pi(alpha - tmp), math.hypot(d - sa + sb, ca - cb), _mod2pi(tmp - beta)
    if word == "LSR":
        p_sq = -2.0 + d * d + 2.0 * cab + 2.0 * d * (sa + sb)
        if p_sq < 0:
            return None
        p = math.sqrt(p_sq)
        tmp = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
        return _mod2pi(tmp - alpha), p, _mod2pi(tmp - beta)
    if word == "RSL":
        p_sq = -2.0 + d * d + 2.0 * cab - 2.0 * d * (sa + sb)
        if p_sq < 0:
            return None
        p = math.sqrt(p_sq)
        tmp = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
        return _mod2pi(alpha - tmp), p, _mod2pi(beta - tmp)
    if word == "RLR":
        c = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sa - sb)) / 8.0
        if abs(c) > 1.0:
            return None
        phi = math.atan2(ca - cb, d - sa + sb)
        p = TWO_PI - math.acos(c)  # in [pi, 2pi]; never snapped
        t = _mod2pi(alpha - phi + p / 2.0)
        return t, p, _mod2pi(alpha - beta - t + p)
    if word == "LRL":
        c = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sb - sa)) / 8.0
        if abs(c) > 1.0:
            return None
        phi = math.atan2(ca - cb, d + sa - sb)
        p = TWO_PI - math.acos(c)  # in [pi, 2pi]; never snapped
        t = _mod2pi(-alpha - phi + p / 2.0)
        return t, p, _mod2pi(beta - alpha - t + p)
    raise ValueError(f"unknown Dubins word {word!r}")


def _normalize_pair(x1, y1, th1, x2, y2, th2, r):
    dx, dy = x2 - x1, y2 - y1
    dist = math.hypot(dx, dy)
    # coincident positions: any reference direction works, the start heading
    # avoids the degenerate atan2(0, 0)
    phi = math.atan2(dy, dx) if dist > 1e-12 * r else th1
    return dist / r, (th1 - phi) % TWO_PI, (th2 - phi) % TWO_PI


def is_long_path(d: float, alpha: float, beta: float) -> bool:
    """True when no CCC word can exist, so the optimum is one of the CSC words.

    A CCC path needs its outer turning circles at most four radii apart.
    The test is exact: it never excludes a feasible CCC word.
    """
    sa, ca = math.sin(alpha), math.cos(alpha)
    sb, cb = math.sin(beta), math.cos(beta)
    left = (d - sb + sa) ** 2 + (cb - ca) ** 2
    right = (d + sb - sa) ** 2 + (ca - cb) ** 2
    return left > 16.0 and right > 16.0


def dubins_car(q1, q2, r: float, classify: bool = True, words=None) -> CarPath:
    """Shortest planar Dubins path between (x, y, heading) triples.

    With ``classify`` the long-path test restricts the search to the four
    CSC words. ``words`` forces a specific candidate set (used by tests).
    """
    x1, y1, th1 = q1[0], q1[1], q1[-1]
    x2, y2, th2 = q2[0], q2[1], q2[-1]
    d, alpha, beta = _normalize_pair(x1, y1, th1, x2, y2, th2, r)
    if words is None:
        words = CSC_WORDS if classify and is_long_path(d, alpha, beta) else WORDS
    sa, sb = math.sin(alpha), math.sin(beta)
    ca, cb = math.cos(alpha), math.cos(beta)
    cab = math.cos(alpha - beta)
    best, best_word, best_len = None, None, math.inf
    for w in words:
        tpq = _word(w, d, alpha, beta, sa, sb, ca, cb, cab)
        if tpq is None:
            continue
        total = tpq[0] + tpq[1] + tpq[2]
        if total < best_len:
            best, best_word, best_len = tpq, w, total
    if best is None:  # pragma: no cover - CSC words always cover long paths
        raise RuntimeError("no Dubins word exists for this configuration")
    return CarPath(best_word, (best[0] * r, best[1] * r, best[2] * r), r)


def dubins_car_length_many(x1, y1, th1, x2, y2, th2, r: float) -> np.ndarray:
    """Vectorized shortest Dubins car length over broadcast arrays."""
    x1, y1, th1, x2, y2, th2 = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (x1, y1, th1, x2, y2, th2))
    )
    dx, dy = x2 - x1, y2 - y1
    dist = np.hypot(dx, dy)
    phi = np.where(dist > 1e-12 * r, np.arctan2(dy, dx), th1)
    d = dist / r
    alpha = np.mod(th1 - phi, TWO_PI)
    beta = np.mod(th2 - phi, TWO_PI)
    sa, sb, ca, cb = np.sin(alpha), np.sin(beta), np.cos(alpha), np.cos(beta)
    cab = np.cos(alpha - beta)
    d2 = d * d
    best = np.full(d.shape, np.inf)

    with np.errstate(invalid="ignore"):
        # LSL
        tmp = np.arctan2(cb - ca, d + sa - sb)
        tot = _mod2pi_arr(tmp - alpha) + np.hypot(d + sa - sb, cb - ca) + _mod2pi_arr(beta - tmp)
        best = np.minimum(best, tot)
        # RSR
        tmp = np.arctan2(ca - cb, d - sa + sb)
        tot = _mod2pi_arr(alpha - tmp) + np.hypot(d - sa + sb, ca - cb) + _mod2pi_arr(tmp - beta)
        best = np.minimum(best, tot)
        # LSR
        p_sq = -2.0 + d2 + 2.0 * cab + 2.0 * d * (sa + sb)
        p = np.sqrt(p_sq)
        tmp = np.arctan2(-ca - cb, d + sa + sb) - np.arctan2(-2.0, p)
        tot = _mod2pi_arr(tmp - alpha) + p + _mod2pi_arr(tmp - beta)
        best = np.where(p_sq >= 0, np.minimum(best, tot), best)
        # RSL
        p_sq = -2.0 + d2 + 2.0 * cab - 2.0 * d * (sa + sb)
        p = np.sqrt(p_sq)
        tmp = np.arctan2(ca + cb, d - sa - sb) - np.arctan2(2.0, p)
        tot = _mod2pi_arr(alpha - tmp) + p + _mod2pi_arr(beta - tmp)
        best = np.where(p_sq >= 0, np.minimum(best, tot), best)
        # RLR
        c = (6.0 - d2 + 2.0 * cab + 2.0 * d * (sa - sb)) / 8.0
        ph = np.arctan2(ca - cb, d - sa + sb)
        p = TWO_PI - np.arccos(c)
        t = _mod2pi_arr(alpha - ph + p / 2.0)
        tot = t + p + _mod2pi_arr(alpha - beta - t + p)
        best = np.where(np.abs(c) <= 1.0, np.minimum(best, tot), best)
        # LRL
        c = (6.0 - d2 + 2.0 * cab + 2.0 * d * (sb - sa)) / 8.0
        ph = np.arctan2(ca - cb, d + sa - sb)
        p = TWO_PI - np.arccos(c)
        t = _mod2pi_arr(-alpha - ph + p / 2.0)
        tot = t + p + _mod2pi_arr(beta - alpha - t + p)
        best = np.where(np.abs(c) <= 1.0, np.minimum(best, tot), best)
    return best * r


# ---------------------------------------------------------------------------
# Dubins airplane


class Segment(NamedTuple):
    """One path segment. ``direction`` is +1 for left, -1 for right, 0 for straight."""

    kind: str  # "L", "R", "S" or "H" (helix)
    direction: int
    length: float  # horizontal length [m]


def _advance(x, y, z, psi, direction, s, r, tan_gamma):
    """Fly ``s`` horizontal meters along one segment from (x, y, z, psi)."""
    if direction == 0:
        return (x + s * math.cos(psi), y + s * math.sin(psi), z + s * tan_gamma, psi)
    psi2 = psi + direction * s / r
    return (
        x + direction * r * (math.sin(psi2) - math.sin(psi)),
        y - direction * r * (math.cos(psi2) - math.cos(psi)),
        z + s * tan_gamma,
        wrap_angle(psi2),
    )


def _climb_turns(l_car: float, dz: float, r: float, tan_gamma: float) -> int:
    """Number of extra full turns needed to reach ``dz`` at the maximum climb angle."""
    adz = abs(dz)
    if adz <= l_car * tan_gamma:
        return 0
    return max(1, math.ceil((adz / tan_gamma - l_car) / (TWO_PI * r)))


class AirplanePath:
    """A 3D Dubins airplane path with constant flight path angle.

    End states of all segments are computed once on first use, so
    interpolation only evaluates the segment containing the query point.
    """

    __slots__ = ("start", "segments", "r", "dz", "length_h", "length", "gamma",
                 "tan_gamma", "case", "word", "_ends", "_cum")

    def __init__(self, start: AirplaneState, segments, r: float, dz: float, case: str, word: str):
        self.start = AirplaneState(*start)
        self.segments = tuple(segments)
        self.r = r
        self.dz = dz
        self.length_h = sum(s.length for s in self.segments)
        self.length = math.hypot(self.length_h, dz)
        self.gamma = math.atan2(dz, self.length_h) if self.length_h > 0 else 0.0
        self.tan_gamma = dz / self.length_h if self.length_h > 0 else 0.0
        self.case = case
        self.word = word
        self._ends = None
        self._cum = None

    def __repr__(self):
        return (f"AirplanePath(word={self.word!r}, case={self.case!r}, "
                f"length={self.length:.3f}, gamma={self.gamma:.4f})")

    def _build_cache(self):
        ends, cum = [], []
        x, y, z, psi = self.start
        acc = 0.0
        for seg in self.segments:
            x, y, z, psi = _advance(x, y, z, psi, seg.direction, seg.length, self.r, self.tan_gamma)
            acc += seg.length
            ends.append(AirplaneState(x, y, z, psi))
            cum.append(acc)
        self._ends = ends
        self._cum = cum

    @property
    def segment_ends(self) -> list:
        if self._ends is None:
            self._build_cache()
        return self._ends

    @property
    def end(self) -> AirplaneState:
        ends = self.segment_ends
        return ends[-1] if ends else self.start.normalized()

    def interpolate(self, t: float) -> AirplaneState:
        """State at fraction ``t`` in [0, 1] of the path length."""
        t = min(max(t, 0.0), 1.0)
        if self._ends is None:
            self._build_cache()
        if not self.segments:
            return self.start.normalized()
        s = t * self.length_h
        i = bisect_right(self._cum, s)
        if i >= len(self.segments):
            return self._ends[-1]
        if i == 0:
            base, s0 = self.start, 0.0
        else:
            base, s0 = self._ends[i - 1], self._cum[i - 1]
        seg = self.segments[i]
        return AirplaneState(*_advance(*base, seg.direction, s - s0, self.r, self.tan_gamma))

    def states_at(self, ts) -> np.ndarray:
        """Vectorized interpolation: (n, 4) array of states at fractions ``ts``."""
        ts = np.clip(np.asarray(ts, dtype=float), 0.0, 1.0)
        out = np.empty((ts.size, 4))
        if not self.segments:
            out[:] = tuple(self.start.normalized())
            return out
        if self._ends is None:
            self._build_cache()
        s = ts * self.length_h
        idx = np.minimum(np.searchsorted(self._cum, s, side="right"), len(self.segments) - 1)
        r, tg = self.r, self.tan_gamma
        for i, seg in enumerate(self.segments):
            m = idx == i
            if not m.any():
                continue
            base = self.start if i == 0 else self._ends[i - 1]
            ds = s[m] - (self._cum[i - 1] if i else 0.0)
            x, y, z, psi = base
            if seg.direction == 0:
                out[m, 0] = x + ds * math.cos(psi)
                out[m, 1] = y + ds * math.sin(psi)
                out[m, 3] = wrap_angle(psi)
            else:
                d = seg.direction
                psi2 = psi + d * ds / r
                out[m, 0] = x + d * r * (np.sin(psi2) - math.sin(psi))
                out[m, 1] = y - d * r * (np.cos(psi2) - math.cos(psi))
                out[m, 3] = np.mod(psi2 + math.pi, TWO_PI) - math.pi
            out[m, 2] = z + ds * tg
        return out

    def sample(self, spacing: float) -> list:
        """States spaced at most ``spacing`` meters apart along the 3D path, endpoints included."""
        n = max(1, math.ceil(self.length / spacing)) if self.length > 0 else 1
        return [self.interpolate(k / n) for k in range(n + 1)]

    def to_dict(self) -> dict:
        return {
            "word": self.word,
            "case": self.case,
            "gamma": self.gamma,
            "length": self.length,
            "segments": [
                {"kind": s.kind, "direction": s.direction, "length_h": s.length,
                 "end": list(e)}
                for s, e in zip(self.segments, self.segment_ends)
            ],
        }


def interpolate_naive(path: AirplanePath, t: float) -> AirplaneState:
    """Reference interpolation that re-integrates every preceding segment."""
    t = min(max(t, 0.0), 1.0)
    s = t * path.length_h
    state = tuple(path.start)
    if not path.segments:
        return path.start.normalized()
    for seg in path.segments:
        if s <= seg.length:
            return AirplaneState(*_advance(*state, seg.direction, s, path.r, path.tan_gamma))
        state = _advance(*state, seg.direction, seg.length, path.r, path.tan_gamma)
        s -= seg.length
    return AirplaneState(*state)


def dubins_airplane(q1, q2, params: AircraftParams) -> AirplanePath:
    """Dubins airplane path from ``q1`` to ``q2`` (each x, y, z, heading)."""
    r = params.r_turn
    car = dubins_car((q1[0], q1[1], q1[3]), (q2[0], q2[1], q2[3]), r)
    dz = q2[2] - q1[2]
    l_car = car.length
    k = _climb_turns(l_car, dz, r, params.tan_gamma)
    segs = [Segment(ch, _TURN_DIRECTION[ch], ln) for ch, ln in zip(car.word, car.lengths)]
    if k == 0:
        case = CASE_LOW
    elif k == 1 and abs(dz) < (l_car + TWO_PI * r) * params.tan_gamma:
        case = CASE_MEDIUM
        first = segs[0]
        segs[0] = Segment(first.kind, first.direction, first.length + TWO_PI * r)
    else:
        case = CASE_HIGH
        first = segs[0]
        segs.insert(0, Segment("H", first.direction, TWO_PI * r * k))
    # zero-length pieces carry no information and only cost interpolation work
    segs = [s for s in segs if s.length > 0.0]
    return AirplanePath(AirplaneState(*q1), segs, r, dz, case, car.word)


def airplane_length(q1, q2, params: AircraftParams) -> float:
    """Length of the Dubins airplane path without building the path object."""
    r = params.r_turn
    l_car = dubins_car((q1[0], q1[1], q1[3]), (q2[0], q2[1], q2[3]), r).length
    dz = q2[2] - q1[2]
    k = _climb_turns(l_car, dz, r, params.tan_gamma)
    return math.hypot(l_car + TWO_PI * r * k, dz)


def airplane_length_many(starts, goals, params: AircraftParams) -> np.ndarray:
    """Vectorized Dubins airplane lengths; ``starts`` and ``goals`` broadcast as (..., 4)."""
    starts = np.asarray(starts, dtype=float)
    goals = np.asarray(goals, dtype=float)
    r = params.r_turn
    tg = params.tan_gamma
    l_car = dubins_car_length_many(starts[..., 0], starts[..., 1], starts[..., 3],
                                   goals[..., 0], goals[..., 1], goals[..., 3], r)
    dz = goals[..., 2] - starts[..., 2]
    adz = np.abs(dz)
    k = np.where(adz <= l_car * tg, 0.0,
                 np.maximum(1.0, np.ceil((adz / tg - l_car) / (TWO_PI * r))))
    return np.hypot(l_car + TWO_PI * r * k, dz)


def approx_distance(q1, q2, params: AircraftParams) -> float:
    """Lower bound on the Dubins airplane length: max of Euclidean and climb-limited distance."""
    dx, dy, dz = q2[0] - q1[0], q2[1] - q1[1], q2[2] - q1[2]
    return max(math.sqrt(dx * dx + dy * dy + dz * dz), abs(dz) / params.sin_gamma)


def approx_distance_many(starts, goals, params: AircraftParams) -> np.ndarray:
    starts = np.asarray(starts, dtype=float)
    goals = np.asarray(goals, dtype=float)
    diff = goals[..., :3] - starts[..., :3]
    eucl = np.sqrt(np.einsum("...i,...i->...", diff, diff))
    return np.maximum(eucl, np.abs(diff[..., 2]) / params.sin_gamma)
