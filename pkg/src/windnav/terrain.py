"""2.5D terrain maps and bounding-box collision checks.

Heights are stored per cell, row-major with shape ``(ny, nx)``: row ``j``
covers ``y0 + j*r <= y < y0 + (j+1)*r`` and column ``i`` the same in x.
Lookups are piecewise constant. A point on a shared cell edge belongs to
the cell with the lower index.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter

log = logging.getLogger(__name__)


class TerrainFormatError(ValueError):
    """Raised when a DEM file cannot be parsed into a complete height grid."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned cube of side ``side`` meters centered on the aircraft."""

    side: float = 30.0

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError(f"bounding box side must be positive, got {self.side}")


@dataclass(frozen=True, eq=False)
class HeightMap:
    """Terrain altitude grid that doubles as the obstacle set.

    Space below ``height + safety_margin + virtual_margin`` is occupied.
    ``virtual_margin`` is only nonzero on pre-evaluated maps.
    """

    origin: tuple
    cell_size: float
    heights: np.ndarray
    safety_margin: float = 0.0
    preevaluated: bool = False
    virtual_margin: float = 0.0
    source: "HeightMap | None" = field(default=None, repr=False)

    def __post_init__(self):
        h = np.array(self.heights, dtype=float)
        if h.ndim != 2 or h.shape[0] < 2 or h.shape[1] < 2:
            raise ValueError(f"height grid must be at least 2x2, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("height grid contains non-finite values")
        if not self.cell_size > 0:
            raise ValueError(f"cell size must be positive, got {self.cell_size}")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def nx(self) -> int:
        return self.heights.shape[1]

    @property
    def ny(self) -> int:
        return self.heights.shape[0]

    @property
    def extent(self) -> tuple:
        """(xmin, xmax, ymin, ymax) of the covered area."""
        x0, y0 = self.origin
        return (x0, x0 + self.nx * self.cell_size, y0, y0 + self.ny * self.cell_size)

    @property
    def max_height(self) -> float:
        return float(self.heights.max())

    def cell_centers(self) -> tuple:
        x0, y0 = self.origin
        r = self.cell_size
        return x0 + (np.arange(self.nx) + 0.5) * r, y0 + (np.arange(self.ny) + 0.5) * r

    def contains(self, x, y):
        xmin, xmax, ymin, ymax = self.extent
        return (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)

    def _index(self, v, v0, n):
        # lower index wins on shared edges: ceil(.) - 1, clamped into range
        k = np.ceil((np.asarray(v, dtype=float) - v0) / self.cell_size).astype(np.int64) - 1
        return np.clip(k, 0, n - 1)

    def cell_index(self, x, y) -> tuple:
        """(i, j) of the cell containing (x, y) under the lower-index tie-break."""
        return self._index(x, self.origin[0], self.nx), self._index(y, self.origin[1], self.ny)

    def clearance_height(self) -> np.ndarray:
        return self.heights + (self.safety_margin + self.virtual_margin)


def terrain_height(hmap: HeightMap, x, y):
    """Height of the cell containing (x, y); raises for out-of-extent queries."""
    if not np.all(hmap.contains(np.asarray(x), np.asarray(y))):
        raise ValueError(f"query ({x}, {y}) outside map extent {hmap.extent}")
    i, j = hmap.cell_index(x, y)
    out = hmap.heights[j, i]
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# I/O


def load_dem(path, format: str | None = None, safety_margin: float = 0.0) -> HeightMap:
    """Read an ESRI ASCII grid (``.asc``) or a CSV of ``x,y,z`` cell centers."""
    path = Path(path)
    if format is None:
        format = "csv_xyz" if path.suffix.lower() == ".csv" else "esri_ascii_grid"
    try:
        text = path.read_text()
    except OSError as exc:
        raise TerrainFormatError(f"cannot read DEM {path}: {exc}") from exc
    if format == "esri_ascii_grid":
        return _parse_esri(text, safety_margin)
    if format == "csv_xyz":
        return _parse_csv(text, safety_margin)
    raise ValueError(f"unknown DEM format {format!r}")


def _parse_esri(text: str, safety_margin: float) -> HeightMap:
    lines = text.splitlines()
    header = {}
    k = 0
    while k < len(lines):
        parts = lines[k].split()
        if not parts:
            k += 1
            continue
        try:
            float(parts[0])
            break
        except ValueError:
            if len(parts) != 2:
                raise TerrainFormatError(f"malformed header line {lines[k]!r}")
            header[parts[0].lower()] = parts[1]
            k += 1
    try:
        ncols, nrows = int(header["ncols"]), int(header["nrows"])
        cell = float(header["cellsize"])
    except (KeyError, ValueError) as exc:
        raise TerrainFormatError(f"missing or invalid ESRI header field: {exc}") from exc
    if "xllcorner" in header:
        x0, y0 = float(header["xllcorner"]), float(header["yllcorner"])
    elif "xllcenter" in header:
        x0, y0 = float(header["xllcenter"]) - cell / 2, float(header["yllcenter"]) - cell / 2
    else:
        raise TerrainFormatError("ESRI header lacks xllcorner/xllcenter")
    nodata = float(header["nodata_value"]) if "nodata_value" in header else None
    rows = []
    for line in lines[k:]:
        parts = line.split()
        if not parts:
            continue
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise TerrainFormatError(f"non-numeric grid value in line {line!r}") from exc
    if len(rows) != nrows or any(len(r) != ncols for r in rows):
        raise TerrainFormatError(f"grid is not {nrows}x{ncols}")
    h = np.array(rows)[::-1]  # file lists the northernmost row first
    if nodata is not None and np.any(h == nodata):
        raise TerrainFormatError("grid contains NODATA cells")
    if not np.all(np.isfinite(h)):
        raise TerrainFormatError("grid contains NaN or infinite heights")
    return HeightMap((x0, y0), cell, h, safety_margin=safety_margin)


def _parse_csv(text: str, safety_margin: float) -> HeightMap:
    rows = []
    for rec in csv.reader(text.splitlines()):
        if not rec or not "".join(rec).strip():
            continue
        try:
            rows.append([float(v) for v in rec])
        except ValueError:
            if rows:
                raise TerrainFormatError(f"non-numeric CSV row {rec!r}")
            continue  # header line
        if len(rows[-1]) != 3:
            raise TerrainFormatError(f"expected x,y,z triples, got {rec!r}")
    if not rows:
        raise TerrainFormatError("CSV contains no data rows")
    a = np.array(rows)
    xs, ys = np.unique(a[:, 0]), np.unique(a[:, 1])
    if len(xs) < 2 or len(ys) < 2:
        raise TerrainFormatError("CSV grid needs at least 2x2 points")
    dx, dy = np.diff(xs), np.diff(ys)
    cell = dx[0]
    if not (np.allclose(dx, cell, rtol=1e-9, atol=1e-9) and np.allclose(dy, cell, rtol=1e-9, atol=1e-9)):
        raise TerrainFormatError("CSV grid spacing is not uniform and square")
    if len(a) != len(xs) * len(ys):
        raise TerrainFormatError("CSV grid is not complete and rectangular")
    i = np.rint((a[:, 0] - xs[0]) / cell).astype(int)
    j = np.rint((a[:, 1] - ys[0]) / cell).astype(int)
    h = np.full((len(ys), len(xs)), np.nan)
    h[j, i] = a[:, 2]
    if not np.all(np.isfinite(h)):
        raise TerrainFormatError("CSV grid has duplicate points, holes or NaN heights")
    return HeightMap((xs[0] - cell / 2, ys[0] - cell / 2), float(cell), h, safety_margin=safety_margin)


def save_dem(hmap: HeightMap, path) -> None:
    """Write a map as ESRI ASCII (``.asc``) or CSV (``.csv``), chosen by suffix."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        xc, yc = hmap.cell_centers()
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "z"])
            for j in range(hmap.ny):
                for i in range(hmap.nx):
                    w.writerow([repr(float(xc[i])), repr(float(yc[j])), repr(float(hmap.heights[j, i]))])
        return
    lines = [
        f"ncols {hmap.nx}",
        f"nrows {hmap.ny}",
        f"xllcorner {hmap.origin[0]!r}",
        f"yllcorner {hmap.origin[1]!r}",
        f"cellsize {hmap.cell_size!r}",
    ]
    for row in hmap.heights[::-1]:
        lines.append(" ".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Map transforms


def resample(hmap: HeightMap, cell_size: float) -> HeightMap:
    """Conservatively resample to ``cell_size``: each new cell takes the max of overlapped source cells.

    The result covers at least the source extent and keeps a reference to
    the source map.
    """
    if math.isclose(cell_size, hmap.cell_size):
        return hmap
    xmin, xmax, ymin, ymax = hmap.extent
    nx = max(2, math.ceil((xmax - xmin) / cell_size - 1e-9))
    ny = max(2, math.ceil((ymax - ymin) / cell_size - 1e-9))
    r = hmap.cell_size
    out = np.empty((ny, nx))
    for j in range(ny):
        lo = ymin + j * cell_size
        j0 = min(int(math.floor((lo - ymin) / r + 1e-9)), hmap.ny - 1)
        j1 = min(int(math.ceil((lo + cell_size - ymin) / r - 1e-9)), hmap.ny)
        rows = hmap.heights[j0:max(j1, j0 + 1)]
        for i in range(nx):
            lo_x = xmin + i * cell_size
            i0 = min(int(math.floor((lo_x - xmin) / r + 1e-9)), hmap.nx - 1)
            i1 = min(int(math.ceil((lo_x + cell_size - xmin) / r - 1e-9)), hmap.nx)
            out[j, i] = rows[:, i0:max(i1, i0 + 1)].max()
    return HeightMap(hmap.origin, cell_size, out, safety_margin=hmap.safety_margin,
                     source=hmap.source or hmap)


def preevaluate(hmap: HeightMap, bbox: BoundingBox, virtual_margin: float = 0.0) -> HeightMap:
    """Max-filter the map so a single-cell lookup covers the whole box footprint.

    Each output cell holds the maximum over all source cells that overlap
    the square of side ``cell_size + bbox.side`` centered on the cell.
    Always apply to an original map; chaining inflates obstacles twice.
    """
    if hmap.preevaluated:
        raise ValueError("map is already pre-evaluated; apply to the source map instead")
    reach = max(0, math.ceil(1.0 + bbox.side / (2.0 * hmap.cell_size) - 1e-12) - 1)
    size = 2 * reach + 1
    # 'nearest' padding repeats edge cells, so the max equals the window clamped to the extent
    h = maximum_filter(np.asarray(hmap.heights), size=size, mode="nearest")
    return replace(hmap, heights=h, preevaluated=True, virtual_margin=virtual_margin, source=hmap)


# ---------------------------------------------------------------------------
# Validity checks


def states_valid(hmap: HeightMap, pos: np.ndarray, bbox: BoundingBox) -> np.ndarray:
    """Vectorized :func:`state_valid` over an (n, 3+) array of positions."""
    pos = np.atleast_2d(np.asarray(pos, dtype=float))
    x, y, z = pos[:, 0], pos[:, 1], pos[:, 2]
    inside = hmap.contains(x, y) & np.isfinite(z)
    half = bbox.side / 2.0
    bottom = z - half
    lim = hmap.clearance_height()
    if hmap.preevaluated:
        i, j = hmap.cell_index(x, y)
        return inside & (bottom >= lim[j, i])
    # cells overlapping the footprint with positive area
    x0, y0 = hmap.origin
    r = hmap.cell_size
    i_lo = np.clip(np.floor((x - half - x0) / r).astype(np.int64), 0, hmap.nx - 1)
    i_hi = np.clip(np.ceil((x + half - x0) / r).astype(np.int64) - 1, 0, hmap.nx - 1)
    j_lo = np.clip(np.floor((y - half - y0) / r).astype(np.int64), 0, hmap.ny - 1)
    j_hi = np.clip(np.ceil((y + half - y0) / r).astype(np.int64) - 1, 0, hmap.ny - 1)
    span = int(max((i_hi - i_lo).max(initial=0), (j_hi - j_lo).max(initial=0)))
    top = np.full(x.shape, -np.inf)
    for di in range(span + 1):
        ii = np.minimum(i_lo + di, i_hi)
        for dj in range(span + 1):
            jj = np.minimum(j_lo + dj, j_hi)
            top = np.maximum(top, lim[jj, ii])
    return inside & (bottom >= top)


def state_valid(hmap: HeightMap, pos, bbox: BoundingBox) -> bool:
    """True iff the box bottom plus margins clears the terrain under its footprint.

    Out-of-extent positions are invalid (treated as obstacle space).
    """
    return bool(states_valid(hmap, np.asarray(pos[:3], dtype=float)[None, :], bbox)[0])


def check_fractions(length: float, d_icc: float) -> np.ndarray:
    """Path fractions checked for a motion: a fixed arc-length grid of step ``d_icc`` plus the endpoint.

    The grid for ``d_icc / m`` (integer m) contains the grid for ``d_icc``,
    which makes the verdict monotone in the resolution.
    """
    if not d_icc > 0:
        raise ValueError(f"d_icc must be positive, got {d_icc}")
    if length <= 0:
        return np.array([0.0, 1.0])
    n = int(math.floor(length / d_icc + 1e-9))
    s = np.arange(n + 1) * d_icc
    t = s / length
    if t[-1] < 1.0:
        t = np.append(t, 1.0)
    return t


def motion_valid(hmap: HeightMap, path, d_icc: float, bbox: BoundingBox) -> bool:
    """Check every state of ``path`` at arc-length steps of at most ``d_icc``.

    ``path`` needs a ``length`` attribute and a vectorized ``states_at``
    method, as provided by air and ground paths.
    """
    ts = check_fractions(path.length, d_icc)
    return bool(states_valid(hmap, path.states_at(ts), bbox).all())
