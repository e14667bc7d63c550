"""P1/P2 Lagrange assembly of the eddy-current block operators.

The scalar potential A_z satisfies ``kappa dA/dt - div(nu grad A) = J``.
Splitting the free DOFs into conductor (C) and non-conductor (N) sets gives

    [M_c 0; 0 0] d/dt [a_c; a_n] + [K_c(a_c) K_cn; K_cn^T K_n] [a_c; a_n] = [0; j]

where only K_c depends on the field through the steel reluctivity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .material import NU0, BHCurve, BrauerCurve
from .mesh import Mesh, RegionTag

# Reference triangle (0,0),(1,0),(0,1); weights sum to its area 1/2.
_Q2_POINTS = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
_Q2_WEIGHTS = np.full(3, 1 / 6)


def _dunavant4():
    a1, w1 = 0.44594849091596488632, 0.22338158967801146570
    a2, w2 = 0.09157621350977074346, 0.10995174365532186764
    bary = []
    weights = []
    for a, w in ((a1, w1), (a2, w2)):
        b = 1 - 2 * a
        for lam in ((a, a, b), (a, b, a), (b, a, a)):
            bary.append(lam)
            weights.append(w)
    bary = np.array(bary)
    return bary[:, 1:], 0.5 * np.array(weights)


_Q4_POINTS, _Q4_WEIGHTS = _dunavant4()


def quadrature(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Reference-triangle rule exact for polynomials of the given degree (<= 4)."""
    if degree <= 2:
        return _Q2_POINTS, _Q2_WEIGHTS
    if degree <= 4:
        return _Q4_POINTS, _Q4_WEIGHTS
    raise ValueError(f"no quadrature rule of degree {degree}")


def shape_functions(order: int, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values (nq, nloc) and reference gradients (nq, nloc, 2) at reference points.

    P2 local ordering: vertices 0, 1, 2 then edge midpoints 01, 12, 20.
    """
    xi, eta = pts[:, 0], pts[:, 1]
    lam = np.stack([1 - xi - eta, xi, eta], axis=1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    nq = len(pts)
    if order == 1:
        return lam, np.broadcast_to(dlam, (nq, 3, 2)).copy()
    if order != 2:
        raise ValueError(f"unsupported element order {order}")
    vals = np.empty((nq, 6))
    grads = np.empty((nq, 6, 2))
    for i in range(3):
        vals[:, i] = lam[:, i] * (2 * lam[:, i] - 1)
        grads[:, i] = (4 * lam[:, i] - 1)[:, None] * dlam[i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        vals[:, 3 + k] = 4 * lam[:, i] * lam[:, j]
        grads[:, 3 + k] = 4 * (lam[:, i][:, None] * dlam[j] + lam[:, j][:, None] * dlam[i])
    return vals, grads


class FESpace:
    """Continuous Lagrange space of order 1 or 2 on a triangle mesh."""

    def __init__(self, mesh: Mesh, order: int):
        if order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {order}")
        self.mesh = mesh
        self.order = order
        nv = mesh.n_vertices
        if order == 1:
            self.cell_dofs = mesh.triangles
            self.n_dofs = nv
        else:
            self.cell_dofs = np.hstack([mesh.triangles, nv + mesh.triangle_edges])
            self.n_dofs = nv + len(mesh.edges)
        self.n_local = self.cell_dofs.shape[1]
        p = mesh.vertices[mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
        self.det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        small = np.flatnonzero(np.abs(self.det) <= 1e-14 * np.max(np.abs(self.det), initial=1.0))
        if small.size:
            raise ValueError(f"triangle {int(small[0])} is degenerate (zero area)")
        self.inv_jac_t = np.linalg.inv(jac).transpose(0, 2, 1)
        self._origin = p[:, 0]
        self._jac = jac

    @cached_property
    def dof_coordinates(self) -> np.ndarray:
        m = self.mesh
        if self.order == 1:
            return m.vertices
        mids = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        return np.vstack([m.vertices, mids])

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        m = self.mesh
        if self.order == 1:
            return m.boundary_vertices
        return np.concatenate([m.boundary_vertices, m.n_vertices + m.boundary_edges])

    def physical_gradients(self, ref_grads: np.ndarray, cells=slice(None)) -> np.ndarray:
        """(ne, nq, nloc, 2) gradients in physical coordinates."""
        return np.einsum("eab,qib->eqia", self.inv_jac_t[cells], ref_grads)

    def physical_points(self, pts: np.ndarray, cells=slice(None)) -> np.ndarray:
        return self._origin[cells][:, None, :] + np.einsum("eab,qb->eqa", self._jac[cells], pts)

    def assemble_bilinear(self, local: np.ndarray, cells: np.ndarray, shape=None) -> sp.csr_matrix:
        """Sum element matrices ``local`` (ne, nloc, nloc) for the listed cells."""
        dofs = self.cell_dofs[cells]
        rows = np.repeat(dofs, self.n_local, axis=1).ravel()
        cols = np.tile(dofs, (1, self.n_local)).ravel()
        n = self.n_dofs
        return sp.csr_matrix((local.ravel(), (rows, cols)), shape=shape or (n, n))

    def element_mass(self, coef: np.ndarray, cells: np.ndarray) -> np.ndarray:
        pts, w = quadrature(2 * self.order)
        vals, _ = shape_functions(self.order, pts)
        scale = np.abs(self.det[cells]) * coef
        return scale[:, None, None] * np.einsum("q,qi,qj->ij", w, vals, vals)[None]

    def unit_stiffness_samples(self, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample-point stiffness contributions with nu = 1.

        Returns (ne, ns, nloc, nloc) matrices and the reference sample points;
        P1 uses the centroid only, P2 the degree-4 rule.
        """
        if self.order == 1:
            pts, w = np.array([[1 / 3, 1 / 3]]), np.array([0.5])
        else:
            pts, w = quadrature(4)
        _, dref = shape_functions(self.order, pts)
        g = self.physical_gradients(dref, cells)
        mats = np.einsum("q,eqia,eqja->eqij", w, g, g) * np.abs(self.det[cells])[:, None, None, None]
        return mats, pts

    def element_stiffness(self, nu: np.ndarray, cells: np.ndarray) -> np.ndarray:
        mats, _ = self.unit_stiffness_samples(cells)
        nu = np.asarray(nu, dtype=float)
        if nu.ndim == 1:
            nu = np.broadcast_to(nu[:, None], mats.shape[:2])
        return np.einsum("eq,eqij->eij", nu, mats)

    def load_vector(self, f: Callable[[np.ndarray, np.ndarray], np.ndarray], cells=None) -> np.ndarray:
        cells = np.arange(self.mesh.n_triangles) if cells is None else cells
        pts, w = quadrature(4)
        vals, _ = shape_functions(self.order, pts)
        xy = self.physical_points(pts, cells)
        fq = f(xy[..., 0], xy[..., 1])
        local = np.einsum("eq,q,qi->ei", fq, w, vals) * np.abs(self.det[cells])[:, None]
        return np.bincount(self.cell_dofs[cells].ravel(), weights=local.ravel(), minlength=self.n_dofs)

    def gradient_at(self, u: np.ndarray, ref_pt=(1 / 3, 1 / 3), cells=slice(None)) -> np.ndarray:
        _, dref = shape_functions(self.order, np.array([ref_pt]))
        g = self.physical_gradients(dref, cells)[:, 0]  # (ne, nloc, 2)
        return np.einsum("ei,eia->ea", u[self.cell_dofs[cells]], g)

    def l2_error(self, u: np.ndarray, exact: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        pts, w = quadrature(4)
        vals, _ = shape_functions(self.order, pts)
        uh = np.einsum("ei,qi->eq", u[self.cell_dofs], vals)
        xy = self.physical_points(pts)
        err = (uh - exact(xy[..., 0], xy[..., 1])) ** 2
        return float(np.sqrt(np.sum(err * w[None] * np.abs(self.det)[:, None])))


@dataclass(frozen=True)
class Materials:
    """Region properties: only the conductor is conductive and nonlinear."""

    conductor: BHCurve = field(default_factory=BrauerCurve)
    kappa: float = 7.505e6
    nu_air: float = NU0
    turns: int = 162

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("conductor conductivity must be positive")

    def conductivity(self, tag: RegionTag) -> float:
        return self.kappa if tag == RegionTag.CONDUCTOR else 0.0


@dataclass(frozen=True)
class DofPartition:
    order: int
    n_dofs: int
    conductor: np.ndarray  # global ids, sorted
    nonconductor: np.ndarray
    dirichlet: np.ndarray

    def scatter(self, a_c: np.ndarray, a_n: np.ndarray) -> np.ndarray:
        full = np.zeros(self.n_dofs)
        full[self.conductor] = a_c
        full[self.nonconductor] = a_n
        return full


class _PatternAssembler:
    """Re-sums a fixed list of COO contributions into a fixed CSR pattern."""

    def __init__(self, rows: np.ndarray, cols: np.ndarray, n: int):
        keys = rows.astype(np.int64) * n + cols
        ukeys, self.slot = np.unique(keys, return_inverse=True)
        self.indices = (ukeys % n).astype(np.int32)
        urows = ukeys // n
        self.indptr = np.searchsorted(urows, np.arange(n + 1)).astype(np.int32)
        self.n = n
        self.nnz = len(ukeys)

    def __call__(self, values: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.slot, weights=values, minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n))


class BlockSystem:
    """Assembled block operators; ``stiffness_c`` rebuilds K_c for a given a_c."""

    def __init__(self, mesh: Mesh, order: int, materials: Materials, gauge: str = "dirichlet"):
        if gauge not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown gauge {gauge!r}")
        self.mesh = mesh
        self.order = order
        self.materials = materials
        self.gauge = gauge
        space = self.space = FESpace(mesh, order)
        regions = mesh.regions
        cond_cells = np.flatnonzero(regions == int(RegionTag.CONDUCTOR))
        other_cells = np.flatnonzero(regions != int(RegionTag.CONDUCTOR))
        self.conductor_cells = cond_cells

        dirichlet = space.boundary_dofs if gauge == "dirichlet" else np.array([], dtype=np.int64)
        is_dir = np.zeros(space.n_dofs, dtype=bool)
        is_dir[dirichlet] = True
        in_c = np.zeros(space.n_dofs, dtype=bool)
        in_c[space.cell_dofs[cond_cells].ravel()] = True
        in_c &= ~is_dir
        c_ids = np.flatnonzero(in_c)
        n_ids = np.flatnonzero(~in_c & ~is_dir)
        self.partition = DofPartition(order, space.n_dofs, c_ids, n_ids, np.flatnonzero(is_dir))

        # constant stiffness from air and coil cells
        k_other = space.assemble_bilinear(
            space.element_stiffness(np.full(len(other_cells), materials.nu_air), other_cells), other_cells)
        self.K_n = k_other[n_ids][:, n_ids].tocsr()
        self.K_cn = k_other[c_ids][:, n_ids].tocsr()
        kc_other = k_other[c_ids][:, c_ids].tocoo()

        mass = space.assemble_bilinear(space.element_mass(np.full(len(cond_cells), materials.kappa), cond_cells),
                                       cond_cells)
        self.M_c = mass[c_ids][:, c_ids].tocsr()

        # conductor-cell stiffness samples for fast reassembly
        local_c = np.full(space.n_dofs, -1, dtype=np.int64)
        local_c[c_ids] = np.arange(len(c_ids))
        cdofs = local_c[space.cell_dofs[cond_cells]]
        if np.any(cdofs < 0):
            raise ValueError("conductor cell touches a Dirichlet DOF; the plate must lie strictly inside the box")
        self._cond_local_dofs = cdofs
        self._unit_mats, self._sample_pts = space.unit_stiffness_samples(cond_cells)
        _, dref = shape_functions(order, self._sample_pts)
        self._sample_grads = space.physical_gradients(dref, cond_cells)  # (ne, ns, nloc, 2)
        nl = space.n_local
        rows = np.concatenate([kc_other.row, np.repeat(cdofs, nl, axis=1).ravel()])
        cols = np.concatenate([kc_other.col, np.tile(cdofs, (1, nl)).ravel()])
        self._kc_pattern = _PatternAssembler(rows, cols, len(c_ids))
        self._kc_const = kc_other.data

        self.j_unit = self._unit_source()[n_ids]
        if gauge == "neumann":
            self._check_compatibility()
        self.K_c = self.stiffness_c(np.zeros(len(c_ids)))

    @property
    def n_c(self) -> int:
        return len(self.partition.conductor)

    @property
    def n_n(self) -> int:
        return len(self.partition.nonconductor)

    @property
    def is_linear(self) -> bool:
        return self.materials.conductor.is_linear

    def _unit_source(self) -> np.ndarray:
        """Load vector for 1 A source current through the coil turns."""
        mesh = self.mesh
        out = np.zeros(self.space.n_dofs)
        for tag, sign in ((RegionTag.COIL_PLUS, 1.0), (RegionTag.COIL_MINUS, -1.0)):
            cells = np.flatnonzero(mesh.regions == int(tag))
            if cells.size == 0:
                continue
            density = sign * self.materials.turns / mesh.region_area(tag)
            out += self.space.load_vector(lambda x, y: np.full_like(x, density), cells)
        return out

    def _check_compatibility(self) -> None:
        ones = np.ones(self.n_n)
        if np.linalg.norm(self.K_n @ ones) <= 1e-10 * abs(self.K_n).sum() / max(self.n_n, 1):
            total = abs(self.j_unit.sum())
            if total > 1e-10 * np.abs(self.j_unit).sum():
                raise ValueError(f"source is not compatible with the singular K_n (net load {total:.3e})")

    def sample_flux(self, a_c: np.ndarray) -> np.ndarray:
        """|B| = |grad A_z| at the reluctivity sample points of conductor cells."""
        u = a_c[self._cond_local_dofs]
        g = np.einsum("ei,esia->esa", u, self._sample_grads)
        return np.hypot(g[..., 0], g[..., 1])

    def stiffness_c(self, a_c: np.ndarray) -> sp.csr_matrix:
        a_c = np.asarray(a_c, dtype=float)
        if a_c.shape != (self.n_c,):
            raise ValueError(f"a_c has shape {a_c.shape}, expected ({self.n_c},)")
        curve = self.materials.conductor
        if curve.is_linear:
            nu = np.full(self._unit_mats.shape[:2], curve.nu_value)
        else:
            nu = curve.nu(self.sample_flux(a_c))
        local = np.einsum("es,esij->eij", nu, self._unit_mats)
        return self._kc_pattern(np.concatenate([self._kc_const, local.ravel()]))

    def full_matrix(self, kc: sp.spmatrix | None = None, mass_scale: float = 0.0) -> sp.csr_matrix:
        """[[mass_scale*M_c + K_c, K_cn], [K_cn^T, K_n]] in (C, N) block order."""
        kc = self.K_c if kc is None else kc
        top = kc + mass_scale * self.M_c if mass_scale else kc
        return sp.bmat([[top, self.K_cn], [self.K_cn.T, self.K_n]], format="csr")

    def export_matrix_market(self, directory: str | Path) -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        out = []
        for name in ("M_c", "K_c", "K_cn", "K_n"):
            p = d / f"{name}.mtx"
            scipy.io.mmwrite(p, getattr(self, name))
            out.append(p)
        p = d / "j_unit.mtx"
        scipy.io.mmwrite(p, self.j_unit.reshape(-1, 1))
        out.append(p)
        return out


def assemble(mesh: Mesh, order: int = 1, materials: Materials | None = None, state="linear",
             gauge: str = "dirichlet") -> BlockSystem:
    """Build all block operators; ``state`` (an a_c vector) selects the K_c linearization point."""
    system = BlockSystem(mesh, order, materials or Materials(), gauge)
    if not (isinstance(state, str) and state == "linear"):
        system.K_c = system.stiffness_c(state)
    return system


def compute_B(mesh: Mesh, full_state: np.ndarray, order: int = 1, space: FESpace | None = None) -> np.ndarray:
    """Per-element (Bx, By) at the centroid, B = (dA/dy, -dA/dx)."""
    space = space or FESpace(mesh, order)
    full_state = np.asarray(full_state, dtype=float)
    if full_state.shape != (space.n_dofs,):
        raise ValueError(f"state has {full_state.shape} entries, expected {space.n_dofs}")
    g = space.gradient_at(full_state)
    return np.column_stack([g[:, 1], -g[:, 0]])


def probe_mask(mesh: Mesh, probe) -> np.ndarray:
    c = mesh.centroids
    if isinstance(probe, RegionTag):
        mask = mesh.regions == int(probe)
    else:
        x0, y0, x1, y1 = probe
        mask = (c[:, 0] >= x0) & (c[:, 0] <= x1) & (c[:, 1] >= y0) & (c[:, 1] <= y1)
    if not mask.any():
        raise ValueError(f"probe {probe!r} contains no element centroid")
    return mask


def probe_average_from_B(mesh: Mesh, B: np.ndarray, probe) -> float:
    mask = probe_mask(mesh, probe)
    w = mesh.areas[mask]
    return float(np.dot(w, np.hypot(B[mask, 0], B[mask, 1])) / w.sum())


def probe_average(mesh: Mesh, full_state: np.ndarray, probe, order: int = 1) -> float:
    """Area-weighted mean |B| over elements whose centroid lies in ``probe``."""
    return probe_average_from_B(mesh, compute_B(mesh, full_state, order), probe)
