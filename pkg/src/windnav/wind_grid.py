"""Terrain-following grids, initial wind interpolation and wind sampling.

Node altitudes follow ``z = h + (top - h) * gamma(n)`` with a constant
domain top. Arrays indexed by node use the shape ``(nz, ny, nx)`` and the
flat node id ``(k * ny + j) * nx + i``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .terrain import HeightMap

log = logging.getLogger(__name__)

SPACING_KINDS = ("equidistant", "sqrt", "linear", "squared")
DEFAULT_TOP_FLOOR = 100.0

BINARY_MAGIC = b"WNDF"
BINARY_VERSION = 1
_BINARY_HEADER = struct.Struct("<4sIIII")  # magic, version, nx, ny, nz


def gamma(kind: str, n, n_z: int, h: float = 0.0, top: float = 1.0, h_max: float | None = None):
    """Vertical spacing fraction of layer ``n`` out of ``n_z``.

    ``equidistant`` keeps the absolute step of the tallest column
    (``(top - h_max) / (n_z - 1)``) in every column and lets the top layer
    absorb the remainder, so it depends on the column height ``h``.
    """
    if n_z < 2:
        raise ValueError(f"n_z must be at least 2, got {n_z}")
    n = np.asarray(n)
    if np.any((n < 0) | (n > n_z - 1)):
        raise ValueError(f"layer index out of range [0, {n_z - 1}]")
    s = n / (n_z - 1)
    if kind == "linear":
        out = s
    elif kind == "sqrt":
        out = np.sqrt(s)
    elif kind == "squared":
        out = s * s
    elif kind == "equidistant":
        h_max = h if h_max is None else h_max
        step = (top - h_max) / (n_z - 1)
        out = np.where(n == n_z - 1, 1.0, n * step / (top - h))
    else:
        raise ValueError(f"unknown spacing kind {kind!r}; expected one of {SPACING_KINDS}")
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class TerrainGrid:
    """Structured terrain-following grid with regular horizontal spacing."""

    x: np.ndarray  # (nx,) node coordinates
    y: np.ndarray  # (ny,)
    h: np.ndarray  # (ny, nx) terrain height at nodes
    top: float
    n_z: int
    spacing: str = "linear"
    domain_factor: float = 3.5
    z: np.ndarray = field(default=None, repr=False)  # (nz, ny, nx)

    def __post_init__(self):
        x, y, h = (np.asarray(a, dtype=float) for a in (self.x, self.y, self.h))
        if x.size < 2 or y.size < 2:
            raise ValueError("grid needs at least two nodes per horizontal axis")
        if h.shape != (y.size, x.size):
            raise ValueError(f"terrain shape {h.shape} does not match ({y.size}, {x.size})")
        if self.n_z < 2:
            raise ValueError(f"n_z must be at least 2, got {self.n_z}")
        if not self.top > h.max():
            raise ValueError(f"domain top {self.top} must exceed max terrain {h.max()}")
        dx, dy = np.diff(x), np.diff(y)
        if not (np.allclose(dx, dx[0]) and np.allclose(dy, dy[0]) and dx[0] > 0 and dy[0] > 0):
            raise ValueError("horizontal node spacing must be uniform and increasing")
        if self.z is None:
            n = np.arange(self.n_z)[:, None, None]
            g = gamma(self.spacing, n, self.n_z, h=h[None], top=self.top, h_max=h.max())
            z = h[None] + (self.top - h[None]) * np.broadcast_to(g, (self.n_z,) + h.shape)
        else:
            z = np.asarray(self.z, dtype=float)
        for name, arr in (("x", x), ("y", y), ("h", h), ("z", z)):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def nx(self) -> int:
        return self.x.size

    @property
    def ny(self) -> int:
        return self.y.size

    @property
    def shape(self) -> tuple:
        return (self.n_z, self.ny, self.nx)

    @property
    def n_nodes(self) -> int:
        return self.n_z * self.ny * self.nx

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def dy(self) -> float:
        return float(self.y[1] - self.y[0])

    def node_positions(self) -> np.ndarray:
        """(n_nodes, 3) node coordinates in flat node order."""
        X = np.broadcast_to(self.x[None, None, :], self.shape)
        Y = np.broadcast_to(self.y[None, :, None], self.shape)
        return np.stack([X.ravel(), Y.ravel(), self.z.ravel()], axis=1)

    def boundary_masks(self) -> tuple:
        """(dirichlet, terrain) boolean masks of shape (nz, ny, nx).

        Dirichlet nodes are the lateral faces and the top; terrain nodes are
        the bottom layer away from the lateral faces.
        """
        d = np.zeros(self.shape, dtype=bool)
        d[:, 0, :] = d[:, -1, :] = True
        d[:, :, 0] = d[:, :, -1] = True
        d[-1] = True
        t = np.zeros(self.shape, dtype=bool)
        t[0] = ~d[0]
        return d, t


def build_grid(dem: HeightMap, n_x: int | None = None, n_y: int | None = None, n_z: int = 11,
               spacing: str = "linear", domain_factor: float = 3.5, top: float | None = None,
               top_floor: float = DEFAULT_TOP_FLOOR) -> TerrainGrid:
    """Terrain-following grid over the DEM cell-center span.

    Nodes default to the DEM cell centers. The constant top is
    ``max(domain_factor * max_h, max_h + top_floor)`` unless given.
    """
    if n_z < 2:
        raise ValueError(f"n_z must be at least 2, got {n_z}")
    if not domain_factor > 1:
        raise ValueError(f"domain_factor must exceed 1, got {domain_factor}")
    if spacing not in SPACING_KINDS:
        raise ValueError(f"unknown spacing kind {spacing!r}")
    xc, yc = dem.cell_centers()
    x = xc if n_x is None else np.linspace(xc[0], xc[-1], n_x)
    y = yc if n_y is None else np.linspace(yc[0], yc[-1], n_y)
    X, Y = np.meshgrid(x, y)
    i, j = dem.cell_index(X, Y)
    h = dem.heights[j, i]
    h_max = float(h.max())
    if top is None:
        top = max(domain_factor * h_max, h_max + top_floor)
    return TerrainGrid(x, y, h, float(top), n_z, spacing, domain_factor)


# ---------------------------------------------------------------------------
# Profiles


@dataclass(frozen=True, eq=False)
class WindProfile:
    """Coarse vertical wind profile at one horizontal location.

    ``levels`` is an (m, 4) array of (z, u, v, w) with strictly increasing z.
    """

    x: float
    y: float
    levels: np.ndarray

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.ndim != 2 or lv.shape[1] != 4:
            raise ValueError("profile levels must be (z, u, v, w) rows")
        if lv.shape[0] < 2:
            raise ValueError("profile needs at least two levels")
        if not np.all(np.diff(lv[:, 0]) > 0):
            raise ValueError("profile altitudes must be strictly increasing")
        if not np.all(np.isfinite(lv)):
            raise ValueError("profile contains non-finite values")
        object.__setattr__(self, "levels", lv)

    def at(self, z) -> np.ndarray:
        """Wind at altitudes ``z``, clamped to the end levels outside the profile span."""
        z = np.asarray(z, dtype=float)
        lv = self.levels
        return np.stack([np.interp(z, lv[:, 0], lv[:, c]) for c in (1, 2, 3)], axis=-1)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y,
                "levels": [{"z": z, "u": u, "v": v, "w": w} for z, u, v, w in self.levels.tolist()]}


def uniform_profile(x: float, y: float, wind, z_lo: float = -1e4, z_hi: float = 1e5) -> WindProfile:
    u, v, w = wind
    return WindProfile(x, y, [[z_lo, u, v, w], [z_hi, u, v, w]])


def load_profiles(path) -> list:
    """Read a JSON array of ``{x, y, levels: [{z, u, v, w}, ...]}`` objects."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, list) or not data:
        raise ValueError("profile file must hold a non-empty JSON array")
    out = []
    for rec in data:
        try:
            levels = [[lv["z"], lv["u"], lv["v"], lv["w"]] for lv in rec["levels"]]
            out.append(WindProfile(float(rec["x"]), float(rec["y"]), levels))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed profile record: {exc}") from exc
    return out


def save_profiles(profiles, path) -> None:
    Path(path).write_text(json.dumps([p.to_dict() for p in profiles], indent=1, sort_keys=True))


def _regular_layout(px: np.ndarray, py: np.ndarray):
    """Return (xs, ys, index grid) if the profile locations form a full tensor grid."""
    xs, ys = np.unique(px), np.unique(py)
    if xs.size * ys.size != px.size:
        return None
    idx = np.full((ys.size, xs.size), -1)
    idx[np.searchsorted(ys, py), np.searchsorted(xs, px)] = np.arange(px.size)
    if np.any(idx < 0):
        return None
    return xs, ys, idx


def _axis_weights(coords: np.ndarray, q: np.ndarray):
    """Lower index and upper weight for linear interpolation along one axis, clamped."""
    if coords.size == 1:
        return np.zeros(q.shape, dtype=int), np.zeros(q.shape)
    k = np.clip(np.searchsorted(coords, q, side="right") - 1, 0, coords.size - 2)
    t = np.clip((q - coords[k]) / (coords[k + 1] - coords[k]), 0.0, 1.0)
    return k, t


def horizontal_weights(profiles, x: np.ndarray, y: np.ndarray) -> tuple:
    """(indices, weights) of shape (n, 4) mixing profiles at horizontal points.

    Profiles on a full tensor grid use bilinear weights; scattered sets use
    inverse-distance weighting (power 2) over the four nearest profiles.
    """
    px = np.array([p.x for p in profiles])
    py = np.array([p.y for p in profiles])
    n = x.size
    lay = _regular_layout(px, py)
    if lay is not None:
        xs, ys, idx = lay
        ki, ti = _axis_weights(xs, x)
        kj, tj = _axis_weights(ys, y)
        ki1 = np.minimum(ki + 1, xs.size - 1)
        kj1 = np.minimum(kj + 1, ys.size - 1)
        ids = np.stack([idx[kj, ki], idx[kj, ki1], idx[kj1, ki], idx[kj1, ki1]], axis=1)
        w = np.stack([(1 - ti) * (1 - tj), ti * (1 - tj), (1 - ti) * tj, ti * tj], axis=1)
        return ids, w
    m = min(4, px.size)
    d2 = (x[:, None] - px[None]) ** 2 + (y[:, None] - py[None]) ** 2
    ids = np.argsort(d2, axis=1, kind="stable")[:, :m]
    dd = np.take_along_axis(d2, ids, axis=1)
    with np.errstate(divide="ignore"):
        w = 1.0 / dd
    exact = dd[:, 0] == 0
    w[exact] = 0.0
    w[exact, 0] = 1.0
    w /= w.sum(axis=1, keepdims=True)
    if m < 4:
        ids = np.pad(ids, ((0, 0), (0, 4 - m)))
        w = np.pad(w, ((0, 0), (0, 4 - m)))
    return ids, w


# ---------------------------------------------------------------------------
# Wind fields


@dataclass(eq=False)
class WindField:
    """Wind vectors at every node of a terrain-following grid.

    ``vectors`` has shape (nz, ny, nx, 3). Adjusted fields may carry the
    potential they were built from.
    """

    grid: TerrainGrid
    vectors: np.ndarray
    kind: str = "initial"
    potential: np.ndarray | None = None
    alpha: float | None = None
    initial: "WindField | None" = field(default=None, repr=False)
    out_of_extent: str = "zero"
    _warned: bool = field(default=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.shape != self.grid.shape + (3,):
            raise ValueError(f"vector array shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("wind field contains non-finite vectors")
        if self.kind not in ("initial", "adjusted", "synthetic"):
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.out_of_extent not in ("zero", "error"):
            raise ValueError("out_of_extent must be 'zero' or 'error'")
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        self.vectors = v
        self._max_components = np.abs(v).reshape(-1, 3).max(axis=0)
        g = self.grid
        # plain-Python copies for the scalar sampler used in drift integration
        self._zcols = g.z.transpose(1, 2, 0).tolist()  # [j][i][k]
        self._vcols = v.transpose(1, 2, 0, 3).tolist()  # [j][i][k][c]
        self._x0, self._y0 = float(g.x[0]), float(g.y[0])
        self._dx, self._dy = g.dx, g.dy
        self._nx1, self._ny1, self._nz = g.nx - 1, g.ny - 1, g.n_z
        self._hrows = g.h.tolist()
        self._top = float(g.top)
        # When every column uses the same layer fractions, blended layer heights
        # are h + s_k (top - h) and the layer search becomes a bisection.
        depth = g.top - g.h
        frac = (g.z - g.h[None]) / np.where(depth > 0, depth, 1.0)[None]
        shared = frac[:, 0, 0]
        if np.all(depth > 0) and np.allclose(frac, shared[:, None, None], rtol=0.0, atol=1e-12):
            self._fractions = shared.tolist()
        else:
            self._fractions = None

    @property
    def max_components(self) -> np.ndarray:
        """Per-axis maximum absolute wind component over all nodes."""
        return self._max_components.copy()

    def _outside(self, x, y):
        g = self.grid
        eps = 1e-9 * max(abs(g.x[-1]), abs(g.y[-1]), 1.0)
        return (x < g.x[0] - eps) | (x > g.x[-1] + eps) | (y < g.y[0] - eps) | (y > g.y[-1] + eps)

    def _handle_outside(self, count):
        if self.out_of_extent == "error":
            raise ValueError("wind sample outside the grid extent")
        if not self._warned:
            log.warning("wind sampled outside the grid extent; returning zero wind (%d points)", count)
            self._warned = True

    def sample(self, pos) -> np.ndarray:
        """Vectorized wind at (n, 3) positions; returns (n, 3)."""
        pos = np.atleast_2d(np.asarray(pos, dtype=float))
        g = self.grid
        x, y, z = pos[:, 0], pos[:, 1], pos[:, 2]
        out = np.zeros((pos.shape[0], 3))
        outside = self._outside(x, y)
        if outside.any():
            self._handle_outside(int(outside.sum()))
        ok = ~outside
        if not ok.any():
            return out
        x, y, z = x[ok], y[ok], z[ok]
        i = np.clip(np.floor((x - g.x[0]) / g.dx).astype(np.int64), 0, g.nx - 2)
        j = np.clip(np.floor((y - g.y[0]) / g.dy).astype(np.int64), 0, g.ny - 2)
        tx = np.clip((x - g.x[i]) / g.dx, 0.0, 1.0)
        ty = np.clip((y - g.y[j]) / g.dy, 0.0, 1.0)
        w00, w10 = (1 - tx) * (1 - ty), tx * (1 - ty)
        w01, w11 = (1 - tx) * ty, tx * ty
        zc = g.z  # (nz, ny, nx)
        layers = (w00 * zc[:, j, i] + w10 * zc[:, j, i + 1] + w01 * zc[:, j + 1, i]
                  + w11 * zc[:, j + 1, i + 1])  # (nz, n)
        k = (layers <= z[None]).sum(axis=0) - 1
        k = np.clip(k, 0, g.n_z - 2)
        cols = np.arange(z.size)
        z_lo, z_hi = layers[k, cols], layers[k + 1, cols]
        tz = np.clip((z - z_lo) / (z_hi - z_lo), 0.0, 1.0)[:, None]
        V = self.vectors
        def corner(kk):
            return (w00[:, None] * V[kk, j, i] + w10[:, None] * V[kk, j, i + 1]
                    + w01[:, None] * V[kk, j + 1, i] + w11[:, None] * V[kk, j + 1, i + 1])
        out[ok] = (1 - tz) * corner(k) + tz * corner(k + 1)
        return out

    def sample_one(self, x: float, y: float, z: float) -> tuple:
        """Scalar wind lookup in plain Python, matching :meth:`sample`."""
        fx = (x - self._x0) / self._dx
        fy = (y - self._y0) / self._dy
        nx1, ny1 = self._nx1, self._ny1
        if fx < -1e-9 or fy < -1e-9 or fx > nx1 + 1e-9 or fy > ny1 + 1e-9:
            self._handle_outside(1)
            return (0.0, 0.0, 0.0)
        i = int(fx)
        i = 0 if i < 0 else (nx1 - 1 if i > nx1 - 1 else i)
        j = int(fy)
        j = 0 if j < 0 else (ny1 - 1 if j > ny1 - 1 else j)
        tx = fx - i
        tx = 0.0 if tx < 0.0 else (1.0 if tx > 1.0 else tx)
        ty = fy - j
        ty = 0.0 if ty < 0.0 else (1.0 if ty > 1.0 else ty)
        w00, w10, w01, w11 = (1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty
        nz = self._nz
        fr = self._fractions
        if fr is not None:
            h0, h1 = self._hrows[j], self._hrows[j + 1]
            hb = w00 * h0[i] + w10 * h0[i + 1] + w01 * h1[i] + w11 * h1[i + 1]
            s = (z - hb) / (self._top - hb)
            k = bisect_right(fr, s, 1, nz - 1) - 1
            tz = (s - fr[k]) / (fr[k + 1] - fr[k])
        else:
            zr0, zr1 = self._zcols[j], self._zcols[j + 1]
            c00, c10, c01, c11 = zr0[i], zr0[i + 1], zr1[i], zr1[i + 1]
            k = 0
            z_lo = w00 * c00[0] + w10 * c10[0] + w01 * c01[0] + w11 * c11[0]
            z_hi = w00 * c00[1] + w10 * c10[1] + w01 * c01[1] + w11 * c11[1]
            while k < nz - 2 and z >= z_hi:
                k += 1
                z_lo = z_hi
                z_hi = w00 * c00[k + 1] + w10 * c10[k + 1] + w01 * c01[k + 1] + w11 * c11[k + 1]
            tz = (z - z_lo) / (z_hi - z_lo)
        tz = 0.0 if tz < 0.0 else (1.0 if tz > 1.0 else tz)
        vr0, vr1 = self._vcols[j], self._vcols[j + 1]
        a00, a10, a01, a11 = vr0[i], vr0[i + 1], vr1[i], vr1[i + 1]
        lo00, lo10, lo01, lo11 = a00[k], a10[k], a01[k], a11[k]
        hi00, hi10, hi01, hi11 = a00[k + 1], a10[k + 1], a01[k + 1], a11[k + 1]
        sz = 1.0 - tz
        return (
            sz * (w00 * lo00[0] + w10 * lo10[0] + w01 * lo01[0] + w11 * lo11[0])
            + tz * (w00 * hi00[0] + w10 * hi10[0] + w01 * hi01[0] + w11 * hi11[0]),
            sz * (w00 * lo00[1] + w10 * lo10[1] + w01 * lo01[1] + w11 * lo11[1])
            + tz * (w00 * hi00[1] + w10 * hi10[1] + w01 * hi01[1] + w11 * hi11[1]),
            sz * (w00 * lo00[2] + w10 * lo10[2] + w01 * lo01[2] + w11 * lo11[2])
            + tz * (w00 * hi00[2] + w10 * hi10[2] + w01 * hi01[2] + w11 * hi11[2]),
        )


def interpolate_initial(profiles, grid: TerrainGrid) -> WindField:
    """Initial field: vertical interpolation of each profile, then horizontal mixing."""
    profiles = list(profiles)
    if not profiles:
        raise ValueError("at least one wind profile is required")
    X = np.broadcast_to(grid.x[None, :], (grid.ny, grid.nx)).ravel()
    Y = np.broadcast_to(grid.y[:, None], (grid.ny, grid.nx)).ravel()
    ids, w = horizontal_weights(profiles, X, Y)
    zcol = grid.z.reshape(grid.n_z, -1)  # (nz, ncol)
    out = np.zeros((grid.n_z, X.size, 3))
    for p_idx, prof in enumerate(profiles):
        wp = (w * (ids == p_idx)).sum(axis=1)  # (ncol,)
        if not wp.any():
            continue
        out += wp[None, :, None] * prof.at(zcol)
    return WindField(grid, out.reshape(grid.shape + (3,)), kind="initial")


def uniform_field(grid: TerrainGrid, wind, kind: str = "synthetic") -> WindField:
    v = np.broadcast_to(np.asarray(wind, dtype=float), grid.shape + (3,))
    return WindField(grid, v.copy(), kind=kind)


def field_from_function(grid: TerrainGrid, fn, kind: str = "synthetic") -> WindField:
    """Field whose node vectors are ``fn(positions)`` for (n, 3) node positions."""
    v = np.asarray(fn(grid.node_positions()), dtype=float).reshape(grid.shape + (3,))
    return WindField(grid, v, kind=kind)


def sample_wind(wf: WindField, pos) -> np.ndarray:
    """Wind at one position (3,) or many positions (n, 3)."""
    pos = np.asarray(pos, dtype=float)
    out = wf.sample(pos.reshape(-1, 3))
    return out[0] if pos.ndim == 1 else out


# ---------------------------------------------------------------------------
# Export


def save_field(wf: WindField, path) -> None:
    """Write ``x,y,z,u,v,w`` rows (``.csv``) or the binary layout (any other suffix).

    Binary layout: little-endian header ``4s I I I I`` (magic ``WNDF``,
    version, nx, ny, nz) followed by ``nx*ny*nz`` records of six float32
    values (x, y, z, u, v, w) in flat node order.
    """
    path = Path(path)
    g = wf.grid
    data = np.concatenate([g.node_positions(), wf.vectors.reshape(-1, 3)], axis=1)
    if path.suffix.lower() == ".csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "z", "u", "v", "w"])
            for row in data:
                w.writerow([repr(float(v)) for v in row])
        return
    with path.open("wb") as fh:
        fh.write(_BINARY_HEADER.pack(BINARY_MAGIC, BINARY_VERSION, g.nx, g.ny, g.n_z))
        fh.write(data.astype("<f4").tobytes())


def load_field(path, kind: str = "adjusted") -> WindField:
    """Read a field written by :func:`save_field`; the grid is rebuilt from the node coordinates."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
        nx, ny = xs.size, ys.size
        nz = data.shape[0] // (nx * ny)
    else:
        raw = path.read_bytes()
        magic, version, nx, ny, nz = _BINARY_HEADER.unpack_from(raw)
        if magic != BINARY_MAGIC or version != BINARY_VERSION:
            raise ValueError(f"{path} is not a wind field file")
        data = np.frombuffer(raw, dtype="<f4", offset=_BINARY_HEADER.size).astype(float)
        data = data.reshape(-1, 6)
    if data.shape[0] != nx * ny * nz:
        raise ValueError("field file node count does not form a complete grid")
    d = data.reshape(nz, ny, nx, 6)
    z = d[..., 2]
    x = d[0, 0, :, 0]
    y = d[0, :, 0, 1]
    grid = TerrainGrid(x, y, z[0], float(z[-1].max()), nz, "linear", 3.5, z=z)
    return WindField(grid, d[..., 3:], kind=kind)
