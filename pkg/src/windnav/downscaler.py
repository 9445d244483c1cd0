"""Mass-consistent wind downscaling on a terrain-following hexahedral grid.

The adjusted field is ``u = u_i + diag(1, 1, alpha) grad(lam)`` where the
potential ``lam`` solves the weak problem

    integral (S^-1 grad lam) . grad F dV = -integral u_i . grad F dV

for all test functions ``F`` vanishing on the lateral faces and the top.
The terrain is a natural boundary, which enforces no flow through it in
the weak sense. Discretization uses trilinear elements with 2x2x2 Gauss
quadrature.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator

from .terrain import HeightMap
from .validation import check_positions
from .wind_grid import TerrainGrid, WindField, build_grid, interpolate_initial

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 1e-4

# local node a = di + 2*dj + 4*dk
_CORNERS = np.array([(di, dj, dk) for dk, dj, di in itertools.product((0, 1), repeat=3)])
_GP = 0.5 + np.array([-0.5, 0.5]) / math.sqrt(3.0)
_GAUSS = np.array([(gx, gy, gz) for gz, gy, gx in itertools.product(_GP, repeat=3)])
_GAUSS_W = np.full(8, 1.0 / 8.0)


def _reference_shape():
    """Shape values (g, a) and reference gradients (g, a, 3) on the unit cube."""
    c = _CORNERS[None, :, :]
    p = _GAUSS[:, None, :]
    f = np.where(c == 1, p, 1.0 - p)  # (g, a, 3) per-axis factors
    df = np.where(c == 1, 1.0, -1.0)
    N = f.prod(axis=2)
    dN = np.empty(f.shape)
    dN[..., 0] = df[..., 0] * f[..., 1] * f[..., 2]
    dN[..., 1] = f[..., 0] * df[..., 1] * f[..., 2]
    dN[..., 2] = f[..., 0] * f[..., 1] * df[..., 2]
    return N, np.broadcast_to(dN, f.shape).copy()


_N_REF, _DN_REF = _reference_shape()


@dataclass(frozen=True)
class Stability:
    """Ratio of horizontal to vertical adjustment weights, ``alpha = (alpha_h / alpha_v)**2``."""

    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")

    @classmethod
    def from_weights(cls, alpha_h: float, alpha_v: float) -> "Stability":
        return cls((alpha_h / alpha_v) ** 2)

    @classmethod
    def from_errors(cls, sigma_h: float, sigma_v: float) -> "Stability":
        """Weights defined as ``alpha_i**2 = 1 / sigma_i**2``."""
        return cls((sigma_v / sigma_h) ** 2)

    @property
    def weights(self) -> np.ndarray:
        return np.array([1.0, 1.0, self.alpha])


@dataclass(eq=False)
class ElementData:
    """Per-element geometry at the Gauss points."""

    conn: np.ndarray  # (E, 8) node ids
    grad: np.ndarray  # (E, 8g, 8a, 3) physical shape gradients
    wdet: np.ndarray  # (E, 8g) quadrature weight times Jacobian determinant
    n_nodes: int

    @property
    def volumes(self) -> np.ndarray:
        return self.wdet.sum(axis=1)

    def lumped_mass(self) -> np.ndarray:
        """Integral of each basis function."""
        m = np.einsum("eg,ga->ea", self.wdet, _N_REF)
        return np.bincount(self.conn.ravel(), weights=m.ravel(), minlength=self.n_nodes)


def element_data(grid: TerrainGrid) -> ElementData:
    """Connectivity, physical gradients and weights for every hexahedral cell.

    Raises ``ValueError`` naming the first cell with a non-positive Jacobian.
    """
    nz, ny, nx = grid.shape
    k, j, i = np.meshgrid(np.arange(nz - 1), np.arange(ny - 1), np.arange(nx - 1), indexing="ij")
    k, j, i = k.ravel(), j.ravel(), i.ravel()
    conn = np.stack([((k + dk) * ny + (j + dj)) * nx + (i + di) for di, dj, dk in _CORNERS], axis=1)
    z_e = grid.z.ravel()[conn]  # (E, 8)
    dzr = np.einsum("ea,gan->egn", z_e, _DN_REF)  # dz/dxi_n at Gauss points
    zx, zy, zz = dzr[..., 0], dzr[..., 1], dzr[..., 2]
    # dz/dzeta blends the four corner column heights bilinearly, so it is
    # positive throughout the cell iff all four are positive
    bad = np.nonzero((z_e[:, 4:] - z_e[:, :4] <= 0).any(axis=1))[0]
    if bad.size:
        e = bad[0]
        raise ValueError(f"degenerate cell (k={k[e]}, j={j[e]}, i={i[e]}): non-positive Jacobian")
    dx, dy = grid.dx, grid.dy
    dNz = _DN_REF[None, :, :, 2] / zz[..., None]
    grad = np.empty((conn.shape[0], 8, 8, 3))
    grad[..., 2] = dNz
    grad[..., 0] = (_DN_REF[None, :, :, 0] - zx[..., None] * dNz) / dx
    grad[..., 1] = (_DN_REF[None, :, :, 1] - zy[..., None] * dNz) / dy
    wdet = _GAUSS_W[None, :] * dx * dy * zz
    return ElementData(conn, grad, wdet, grid.n_nodes)


def element_matrices(ed: ElementData, alpha: float) -> np.ndarray:
    """Element stiffness matrices (E, 8, 8) for weights diag(1, 1, alpha)."""
    s = np.array([1.0, 1.0, alpha])
    return np.einsum("egai,i,egbi,eg->eab", ed.grad, s, ed.grad, ed.wdet, optimize=True)


def _gauss_values(vectors: np.ndarray, ed: ElementData) -> np.ndarray:
    """Trilinear interpolant of nodal vectors at the Gauss points, (E, 8g, 3)."""
    return np.einsum("ga,eac->egc", _N_REF, vectors.reshape(-1, 3)[ed.conn])


def _gauss_gradient(scalar: np.ndarray, ed: ElementData) -> np.ndarray:
    return np.einsum("egai,ea->egi", ed.grad, scalar.ravel()[ed.conn])


def weak_flux_residual(u_gauss: np.ndarray, ed: ElementData) -> np.ndarray:
    """Per-node ``-integral u . grad(phi_i)`` for a field given at the Gauss points."""
    r = -np.einsum("egc,egac,eg->ea", u_gauss, ed.grad, ed.wdet, optimize=True)
    return np.bincount(ed.conn.ravel(), weights=r.ravel(), minlength=ed.n_nodes)


@dataclass(eq=False)
class LinearSystem:
    """Discrete system restricted to the free (non-Dirichlet) nodes."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray  # flat ids of free nodes
    grid: TerrainGrid
    alpha: float
    elements: ElementData = field(repr=False)
    full_matrix: sp.csr_matrix = field(repr=False)
    full_rhs: np.ndarray = field(repr=False)


def assemble(grid: TerrainGrid, u_i: WindField, stab: Stability) -> LinearSystem:
    """Assemble the symmetric positive definite system for the potential."""
    if u_i.grid.shape != grid.shape:
        raise ValueError("wind field and grid dimensions differ")
    ed = element_data(grid)
    K = element_matrices(ed, stab.alpha)
    rows = np.repeat(ed.conn, 8, axis=1).ravel()
    cols = np.tile(ed.conn, (1, 8)).ravel()
    n = grid.n_nodes
    A = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    b = weak_flux_residual(_gauss_values(u_i.vectors, ed), ed)
    dirichlet, _ = grid.boundary_masks()
    free = np.nonzero(~dirichlet.ravel())[0]
    A_ff = A[free][:, free].tocsr()
    return LinearSystem(A_ff, b[free], free, grid, stab.alpha, ed, A, b)


@dataclass
class SolveReport:
    iterations: int
    residual: float  # relative residual ||b - A x|| / ||b||
    seconds: float
    converged: bool
    preconditioner: str = "jacobi"

    def to_dict(self) -> dict:
        return {"iters": self.iterations, "residual": self.residual, "seconds": self.seconds,
                "converged": self.converged, "preconditioner": self.preconditioner}


@dataclass(eq=False)
class PotentialField:
    """Potential at every grid node; exactly zero on the Dirichlet nodes."""

    values: np.ndarray  # (nz, ny, nx)
    dirichlet: np.ndarray
    terrain: np.ndarray


def default_max_iter(n_free: int) -> int:
    return int(min(20000, max(1, math.ceil(10.0 * math.sqrt(n_free)))))


def incomplete_cholesky(A: sp.csr_matrix) -> sp.csr_matrix:
    """Zero-fill incomplete Cholesky factor ``L`` (lower, CSR) with ``A ~ L L^T``."""
    L = sp.tril(A, format="csr")
    L.sort_indices()
    n = A.shape[0]
    indptr, ind = L.indptr, L.indices
    val = L.data.astype(float).copy()
    rows = [dict(zip(ind[indptr[i]:indptr[i + 1]].tolist(), range(indptr[i], indptr[i + 1])))
            for i in range(n)]
    for i in range(n):
        ri = rows[i]
        for p in range(indptr[i], indptr[i + 1]):
            j = ind[p]
            acc = val[p]
            rj = rows[j]
            for k, pk in ri.items():
                if k < j:
                    q = rj.get(k)
                    if q is not None:
                        acc -= val[pk] * val[q]
            if j < i:
                val[p] = acc / val[indptr[j + 1] - 1]
            else:
                # breakdown guard: fall back to the original diagonal entry
                val[p] = math.sqrt(acc) if acc > 0 else math.sqrt(A[i, i])
    return sp.csr_matrix((val, ind, indptr), shape=A.shape)


PRECONDITIONERS = ("jacobi", "ic0", "none")


def _preconditioner(A: sp.csr_matrix, kind: str):
    if kind == "jacobi":
        inv = 1.0 / A.diagonal()
        return lambda r: inv * r
    if kind == "ic0":
        L = incomplete_cholesky(A)
        Lt = L.T.tocsr()

        def apply(r):
            y = spla.spsolve_triangular(L, r, lower=True)
            return spla.spsolve_triangular(Lt, y, lower=False)
        return apply
    if kind == "none":
        return lambda r: r
    raise ValueError(f"unknown preconditioner {kind!r}; expected one of {PRECONDITIONERS}")


def pcg(A, b, tol=1e-8, max_iter=1000, precond=None) -> tuple:
    """Preconditioned conjugate gradients from a zero start.

    Returns (x, iterations, relative residual). The residual is recomputed
    from scratch at the end, so it certifies the returned solution.
    """
    n = b.size
    x = np.zeros(n)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x, 0, 0.0
    M = precond or (lambda v: v)
    r = b.copy()
    z = M(r)
    p = z.copy()
    rz = float(r @ z)
    it = 0
    target = tol * bnorm
    while it < max_iter:
        Ap = A @ p
        a = rz / float(p @ Ap)
        x += a * p
        r -= a * Ap
        it += 1
        if np.linalg.norm(r) <= target:
            # guard against drift of the recursive residual
            r = b - A @ x
            if np.linalg.norm(r) <= target:
                break
        z = M(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = float(np.linalg.norm(b - A @ x)) / bnorm
    return x, it, res


def solve_potential(system: LinearSystem, tol: float = 1e-8, max_iter: int | None = None,
                    preconditioner: str = "jacobi") -> tuple:
    """Solve for the potential; returns (PotentialField, SolveReport)."""
    if max_iter is None:
        max_iter = default_max_iter(system.free.size)
    t0 = time.perf_counter()
    M = _preconditioner(system.matrix, preconditioner)
    x, it, res = pcg(system.matrix, system.rhs, tol, max_iter, M)
    seconds = time.perf_counter() - t0
    lam = np.zeros(system.grid.n_nodes)
    lam[system.free] = x
    dirichlet, terrain = system.grid.boundary_masks()
    report = SolveReport(it, res, seconds, res <= tol, preconditioner)
    if not report.converged:
        log.warning("potential solve did not converge: %d iterations, residual %.3e", it, res)
    return PotentialField(lam.reshape(system.grid.shape), dirichlet, terrain), report


def recover_gradient(values: np.ndarray, ed: ElementData, shape: tuple) -> np.ndarray:
    """Nodal gradient as the volume-weighted average of element-mean gradients."""
    g = _gauss_gradient(values, ed)  # (E, 8g, 3)
    integral = np.einsum("egi,eg->ei", g, ed.wdet)  # integral of grad over each cell
    vol = ed.volumes
    conn = ed.conn.ravel()
    n = ed.n_nodes
    num = np.stack([np.bincount(conn, weights=np.repeat(integral[:, c], 8), minlength=n)
                    for c in range(3)], axis=1)
    den = np.bincount(conn, weights=np.repeat(vol, 8), minlength=n)
    return (num / den[:, None]).reshape(shape + (3,))


def adjust(u_i: WindField, lam: PotentialField, stab: Stability, elements: ElementData | None = None) -> WindField:
    """Adjusted field ``u_i + diag(1, 1, alpha) grad(lam)`` at the nodes."""
    grid = u_i.grid
    ed = elements or element_data(grid)
    if not np.any(lam.values):
        vec = u_i.vectors.copy()
    else:
        vec = u_i.vectors + stab.weights * recover_gradient(lam.values, ed, grid.shape)
    return WindField(grid, vec, kind="adjusted", potential=lam.values, alpha=stab.alpha, initial=u_i)


# ---------------------------------------------------------------------------
# Diagnostics


def _gauss_field(wf: WindField, ed: ElementData) -> np.ndarray:
    """Field at the Gauss points; adjusted fields use the exact potential representation."""
    if wf.initial is not None and wf.potential is not None:
        u = _gauss_values(wf.initial.vectors, ed)
        return u + np.array([1.0, 1.0, wf.alpha]) * _gauss_gradient(wf.potential, ed)
    return _gauss_values(wf.vectors, ed)


@dataclass
class DivergenceReport:
    """Divergence diagnostics in 1/s.

    ``nodal`` is the Galerkin-consistent divergence at every non-Dirichlet
    node: ``-integral u . grad(phi_i) / integral phi_i``. At terrain nodes
    it includes the flux through the terrain. ``cell`` is the element-mean
    divergence of the trilinear interpolant of the nodal vectors.
    """

    nodal: np.ndarray
    cell: np.ndarray
    terrain_flux: float  # mean |u . n| over terrain faces, m/s

    @property
    def max(self) -> float:
        return float(np.abs(self.nodal).max(initial=0.0))

    @property
    def mean(self) -> float:
        return float(np.abs(self.nodal).mean()) if self.nodal.size else 0.0

    @property
    def cell_max(self) -> float:
        return float(np.abs(self.cell).max(initial=0.0))

    @property
    def cell_mean(self) -> float:
        return float(np.abs(self.cell).mean()) if self.cell.size else 0.0

    def to_dict(self) -> dict:
        return {"max": self.max, "mean": self.mean, "cell_max": self.cell_max,
                "cell_mean": self.cell_mean, "terrain_flux": self.terrain_flux}


def terrain_normal_flux(wf: WindField) -> np.ndarray:
    """|u . n| at the center of every terrain face, using the nodal vectors."""
    g = wf.grid
    h = g.h
    v = wf.vectors[0]
    hx = 0.5 * ((h[:-1, 1:] - h[:-1, :-1]) + (h[1:, 1:] - h[1:, :-1])) / g.dx
    hy = 0.5 * ((h[1:, :-1] - h[:-1, :-1]) + (h[1:, 1:] - h[:-1, 1:])) / g.dy
    n = np.stack([-hx, -hy, np.ones_like(hx)], axis=-1)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    uc = 0.25 * (v[:-1, :-1] + v[:-1, 1:] + v[1:, :-1] + v[1:, 1:])
    return np.abs((uc * n).sum(axis=-1))


def divergence(wf: WindField, elements: ElementData | None = None) -> DivergenceReport:
    """Divergence diagnostics for any field on a terrain-following grid."""
    grid = wf.grid
    ed = elements or element_data(grid)
    u_g = _gauss_field(wf, ed)
    resid = weak_flux_residual(u_g, ed)
    dirichlet, _ = grid.boundary_masks()
    free = ~dirichlet.ravel()
    nodal = resid[free] / ed.lumped_mass()[free]
    div_g = np.einsum("eac,egac->eg", wf.vectors.reshape(-1, 3)[ed.conn], ed.grad)
    cell = (div_g * ed.wdet).sum(axis=1) / ed.volumes
    return DivergenceReport(nodal, cell, float(terrain_normal_flux(wf).mean()))


def cross_section_flux(wf: WindField, elements: ElementData | None = None) -> np.ndarray:
    """Volume flux in +x through each cell layer between node columns i and i+1.

    Computed as ``integral u_x dV / dx`` over the layer, which equals the
    weak flux through a full vertical plane in that layer.
    """
    grid = wf.grid
    ed = elements or element_data(grid)
    ux = (_gauss_field(wf, ed)[..., 0] * ed.wdet).sum(axis=1)
    i_e = np.tile(np.arange(grid.nx - 1), (grid.n_z - 1) * (grid.ny - 1))
    return np.bincount(i_e, weights=ux, minlength=grid.nx - 1) / grid.dx


@dataclass(eq=False)
class DownscaleResult:
    field: WindField
    initial: WindField
    report: SolveReport
    divergence: DivergenceReport
    initial_divergence: DivergenceReport
    diagnostics: dict


def downscale(dem: HeightMap, profiles, alpha: float = DEFAULT_ALPHA, n_z: int = 11,
              spacing: str = "linear", domain_factor: float = 3.5, tol: float = 1e-8,
              max_iter: int | None = None, preconditioner: str = "jacobi",
              top: float | None = None, grid: TerrainGrid | None = None) -> DownscaleResult:
    """Grid construction, initial interpolation, solve, adjustment and diagnostics."""
    stab = Stability(alpha)
    if grid is None:
        grid = build_grid(dem, n_z=n_z, spacing=spacing, domain_factor=domain_factor, top=top)
    u_i = interpolate_initial(profiles, grid)
    system = assemble(grid, u_i, stab)
    lam, report = solve_potential(system, tol=tol, max_iter=max_iter, preconditioner=preconditioner)
    u = adjust(u_i, lam, stab, system.elements)
    div = divergence(u, system.elements)
    div0 = divergence(u_i, system.elements)
    diag = {
        "alpha": alpha,
        "grid": {"nx": grid.nx, "ny": grid.ny, "nz": grid.n_z, "spacing": grid.spacing,
                 "top": grid.top},
        "solver": report.to_dict(),
        "divergence": div.to_dict(),
        "initial_divergence": div0.to_dict(),
        "cross_section_flux": cross_section_flux(u, system.elements).tolist(),
    }
    return DownscaleResult(u, u_i, report, div, div0, diag)


class MassConsistentDownscaler(BaseEstimator):
    """Estimator wrapper: ``fit`` runs the downscaling, ``predict`` samples the adjusted field.

    ``fit`` takes a :class:`HeightMap` and a list of wind profiles; ``predict``
    takes an (n, 3) array of positions and returns (n, 3) wind vectors.
    """

    def __init__(self, alpha=DEFAULT_ALPHA, n_z=11, spacing="linear", domain_factor=3.5,
                 tol=1e-8, max_iter=None, preconditioner="jacobi", top=None):
        self.alpha = alpha
        self.n_z = n_z
        self.spacing = spacing
        self.domain_factor = domain_factor
        self.tol = tol
        self.max_iter = max_iter
        self.preconditioner = preconditioner
        self.top = top

    def fit(self, dem: HeightMap, profiles):
        res = downscale(dem, profiles, alpha=self.alpha, n_z=self.n_z, spacing=self.spacing,
                        domain_factor=self.domain_factor, tol=self.tol, max_iter=self.max_iter,
                        preconditioner=self.preconditioner, top=self.top)
        self.grid_ = res.field.grid
        self.initial_field_ = res.initial
        self.field_ = res.field
        self.report_ = res.report
        self.diagnostics_ = res.diagnostics
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "field_"):
            raise RuntimeError("call fit before predict")
        return self.field_.sample(check_positions(X))
