"""Structured 2D triangulations of the benchmark cross-section.

The domain is an axis-aligned air box containing a conductive plate and two
coil rectangles. Grid lines are placed on every rectangle edge so that each
triangle lies in exactly one region; each grid cell is split into two
counterclockwise triangles.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

Rect = tuple[float, float, float, float]  # (xmin, ymin, xmax, ymax)


class RegionTag(enum.IntEnum):
    AIR = 0
    CONDUCTOR = 1
    COIL_PLUS = 2
    COIL_MINUS = 3


class GeometryError(ValueError):
    pass


def _check_rect(name: str, r: Rect) -> None:
    if not (r[2] > r[0] and r[3] > r[1]):
        raise GeometryError(f"{name}: degenerate rectangle {r}")


def _inside(inner: Rect, outer: Rect, strict: bool) -> bool:
    if strict:
        return inner[0] > outer[0] and inner[1] > outer[1] and inner[2] < outer[2] and inner[3] < outer[3]
    return inner[0] >= outer[0] and inner[1] >= outer[1] and inner[2] <= outer[2] and inner[3] <= outer[3]


def _overlap(a: Rect, b: Rect) -> bool:
    # open interiors intersect; shared edges are fine
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


@dataclass(frozen=True)
class BenchmarkGeometry:
    """Rectangles (meters) of the benchmark cross-section.

    ``near_cell`` is the target cell size at resolution 1 between the
    features; intervals touching the air box are graded geometrically with
    ratio ``grading`` so that the far field stays cheap.
    """

    air_box: Rect = (-0.1, -0.1, 0.1, 0.1)
    plate: Rect | None = (-1.6e-3, -0.025, 1.6e-3, 0.025)
    coil_plus: Rect | None = (-16.6e-3, -0.025, -6.6e-3, 0.025)
    coil_minus: Rect | None = (6.6e-3, -0.025, 16.6e-3, 0.025)
    near_cell: float = 4.2e-3
    grading: float = 1.5

    def features(self) -> list[tuple[str, Rect]]:
        out = []
        for name in ("plate", "coil_plus", "coil_minus"):
            r = getattr(self, name)
            if r is not None:
                out.append((name, r))
        return out

    def validate(self) -> None:
        _check_rect("air_box", self.air_box)
        feats = self.features()
        for name, r in feats:
            _check_rect(name, r)
            strict = name == "plate"
            if not _inside(r, self.air_box, strict):
                raise GeometryError(f"{name} {r} is not inside air_box {self.air_box}")
        for i in range(len(feats)):
            for j in range(i + 1, len(feats)):
                (na, a), (nb, b) = feats[i], feats[j]
                if _overlap(a, b):
                    raise GeometryError(f"rectangles {na} and {nb} overlap")
        if self.near_cell <= 0 or self.grading < 1:
            raise GeometryError("near_cell must be positive and grading >= 1")

    @property
    def plate_short_side(self) -> float:
        if self.plate is None:
            raise GeometryError("geometry has no plate")
        return min(self.plate[2] - self.plate[0], self.plate[3] - self.plate[1])


FLAT_2D = BenchmarkGeometry()


def unit_square() -> BenchmarkGeometry:
    return BenchmarkGeometry(air_box=(0.0, 0.0, 1.0, 1.0), plate=None, coil_plus=None, coil_minus=None)


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3), counterclockwise
    regions: np.ndarray  # (nt,) RegionTag values
    boundary_vertices: np.ndarray = field(default=None)  # sorted vertex indices on the outer boundary

    def __post_init__(self):
        verts = np.ascontiguousarray(self.vertices, dtype=float)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        regs = np.ascontiguousarray(self.regions, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) array")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValueError("triangles must be an (m, 3) array")
        if regs.shape != (tris.shape[0],):
            raise ValueError("one region tag per triangle required")
        if tris.size and (tris.min() < 0 or tris.max() >= verts.shape[0]):
            raise ValueError("triangle references a missing vertex")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "regions", regs)
        areas = self.areas
        bad = np.flatnonzero(areas <= 0)
        if bad.size:
            raise ValueError(f"triangle {int(bad[0])} has non-positive signed area {areas[bad[0]]:.3e}")
        if self.boundary_vertices is None:
            object.__setattr__(self, "boundary_vertices", self._topological_boundary())
        else:
            object.__setattr__(self, "boundary_vertices", np.unique(np.asarray(self.boundary_vertices, dtype=np.int64)))
        for arr in (self.vertices, self.triangles, self.regions, self.boundary_vertices):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def _edge_data(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # local edge k joins local vertices (k, k+1)
        local = np.array([[0, 1], [1, 2], [2, 0]])
        pairs = self.triangles[:, local].reshape(-1, 2)
        key = np.sort(pairs, axis=1)
        edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs; used for P2 midpoint DOFs."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """(nt, 3) edge indices; local edge k is opposite local vertex k+2."""
        return self._edge_data[1]

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self._edge_data[2] == 1)

    def _topological_boundary(self) -> np.ndarray:
        edges, _, counts = self._edge_data
        return np.unique(edges[counts == 1].ravel())

    def region_mask(self, *tags: RegionTag) -> np.ndarray:
        return np.isin(self.regions, [int(t) for t in tags])

    def region_area(self, tag: RegionTag) -> float:
        return float(self.areas[self.regions == int(tag)].sum())


def _interval_points(a: float, b: float, n: int, fine_at: str | None, ratio: float) -> np.ndarray:
    """n cells on [a, b]; geometric grading towards ``fine_at`` ('a' or 'b')."""
    xi = np.linspace(0.0, 1.0, n + 1)
    if fine_at is None or ratio == 1.0:
        return a + (b - a) * xi
    g = ratio ** (n)  # total growth over the interval
    s = (np.power(g, xi) - 1.0) / (g - 1.0)
    if fine_at == "b":
        s = 1.0 - s[::-1]
    return a + (b - a) * s


def _axis_breaks(lo: float, hi: float, cuts: Sequence[float], near: float, grading: float, resolution: int) -> np.ndarray:
    breaks = sorted({lo, hi, *[c for c in cuts if lo < c < hi]})
    if len(breaks) == 2:
        return _interval_points(lo, hi, resolution, None, 1.0)
    pts = [np.array([lo])]
    for a, b in zip(breaks[:-1], breaks[1:]):
        length = b - a
        outer = None
        if a == lo:
            outer = "b"
        elif b == hi:
            outer = "a"
        if outer is None:
            base = max(1, math.ceil(length / near - 1e-9))
            seg = _interval_points(a, b, base * resolution, None, 1.0)
        else:
            base = 1
            while length * (grading - 1.0) / (grading**base - 1.0) > near and base < 1000:
                base += 1
            # refining in the graded coordinate keeps the hierarchy nested
            seg = _interval_points(a, b, base * resolution, outer, grading ** (1.0 / resolution))
        pts.append(seg[1:])
    return np.concatenate(pts)


def structured_mesh(xs: np.ndarray, ys: np.ndarray, tagger=None) -> Mesh:
    """Triangulate the tensor grid ``xs`` x ``ys`` with two triangles per cell."""
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v11 = idx[1:, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])
    c = verts[tris].mean(axis=1)
    regions = np.zeros(len(tris), dtype=np.int64) if tagger is None else tagger(c)
    return Mesh(verts, tris, regions)


def _tagger(geometry: BenchmarkGeometry):
    def tag(c: np.ndarray) -> np.ndarray:
        out = np.full(len(c), int(RegionTag.AIR), dtype=np.int64)
        for name, tagv in (("plate", RegionTag.CONDUCTOR), ("coil_plus", RegionTag.COIL_PLUS),
                           ("coil_minus", RegionTag.COIL_MINUS)):
            r = getattr(geometry, name)
            if r is None:
                continue
            inside = (c[:, 0] > r[0]) & (c[:, 0] < r[2]) & (c[:, 1] > r[1]) & (c[:, 1] < r[3])
            out[inside] = int(tagv)
        return out

    return tag


def generate_benchmark_mesh(resolution: int, geometry: BenchmarkGeometry = FLAT_2D) -> Mesh:
    """Conforming structured mesh; ``resolution`` scales the cell count of every grid interval."""
    if not isinstance(resolution, (int, np.integer)) or resolution < 1:
        raise ValueError(f"resolution must be a positive integer, got {resolution!r}")
    geometry.validate()
    box = geometry.air_box
    feats = [r for _, r in geometry.features()]
    near = geometry.near_cell
    if geometry.plate is not None:
        # the plate's short side always gets `resolution` cells
        near = max(near, geometry.plate_short_side)
    xs = _axis_breaks(box[0], box[2], [v for r in feats for v in (r[0], r[2])], near, geometry.grading, resolution)
    ys = _axis_breaks(box[1], box[3], [v for r in feats for v in (r[1], r[3])], near, geometry.grading, resolution)
    return structured_mesh(xs, ys, _tagger(geometry))


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four congruent children at its edge midpoints."""
    edges = mesh.edges
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    verts = np.vstack([mesh.vertices, mids])
    t = mesh.triangles
    e = mesh.triangle_edges + nv  # midpoint vertex ids of edges (01, 12, 20)
    m01, m12, m20 = e[:, 0], e[:, 1], e[:, 2]
    children = np.stack([
        np.column_stack([t[:, 0], m01, m20]),
        np.column_stack([m01, t[:, 1], m12]),
        np.column_stack([m20, m12, t[:, 2]]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)
    regions = np.repeat(mesh.regions, 4)
    return Mesh(verts, children, regions)


def write_vtk(path: str | Path, mesh: Mesh, point_data: dict[str, np.ndarray] | None = None,
              cell_data: dict[str, np.ndarray] | None = None, title: str = "mqsim mesh") -> None:
    """Legacy ASCII VTK unstructured grid with the region tag as cell scalar."""
    cells = {"region": mesh.regions}
    cells.update(cell_data or {})
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x:.10g} {y:.10g} 0" for x, y in mesh.vertices]
    nt = mesh.n_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines.append(f"CELL_DATA {nt}")
    for name, vals in cells.items():
        lines += _vtk_array(name, np.asarray(vals), nt)
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, vals in point_data.items():
            lines += _vtk_array(name, np.asarray(vals), mesh.n_vertices)
    Path(path).write_text("\n".join(lines) + "\n")


def _vtk_array(name: str, vals: np.ndarray, n: int) -> list[str]:
    if vals.shape[0] != n:
        raise ValueError(f"VTK array {name!r} has {vals.shape[0]} entries, expected {n}")
    if vals.ndim == 2:
        pad = np.zeros((n, 3))
        pad[:, : vals.shape[1]] = vals
        return [f"VECTORS {name} double"] + [f"{a:.10g} {b:.10g} {c:.10g}" for a, b, c in pad]
    kind = "int" if np.issubdtype(vals.dtype, np.integer) else "double"
    return [f"SCALARS {name} {kind} 1", "LOOKUP_TABLE default"] + [f"{v:.10g}" if kind == "double" else str(int(v)) for v in vals]
