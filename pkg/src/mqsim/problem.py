"""Assembles a benchmark simulation from its parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import BlockSystem, FESpace, Materials, assemble, compute_B, probe_mask
from .mesh import FLAT_2D, BenchmarkGeometry, Mesh, Rect, generate_benchmark_mesh
from .schur import DEFAULT_PCG_TOL, Excitation, SchurOdeOperator


def plate_slices(geometry: BenchmarkGeometry, n: int = 3) -> list[Rect]:
    """Split the plate into ``n`` equal slices along its long side, top first."""
    x0, y0, x1, y1 = geometry.plate
    if (y1 - y0) >= (x1 - x0):
        h = (y1 - y0) / n
        return [(x0, y1 - (k + 1) * h, x1, y1 - k * h) for k in range(n)]
    w = (x1 - x0) / n
    return [(x0 + k * w, y0, x0 + (k + 1) * w, y1) for k in range(n)]


@dataclass(frozen=True)
class ProblemSpec:
    geometry: BenchmarkGeometry = FLAT_2D
    resolution: int = 2
    order: int = 1
    materials: Materials = field(default_factory=Materials)
    excitation: Excitation = field(default_factory=Excitation)
    probes: tuple[Rect, ...] | None = None


class Problem:
    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.mesh: Mesh = generate_benchmark_mesh(spec.resolution, spec.geometry)
        self.system: BlockSystem = assemble(self.mesh, spec.order, spec.materials)
        self.probes = list(spec.probes) if spec.probes else plate_slices(spec.geometry)
        self._masks = [probe_mask(self.mesh, p) for p in self.probes]
        self._space: FESpace = self.system.space

    def operator(self, pcg_tol: float = DEFAULT_PCG_TOL, pod_size: int | None = 10) -> SchurOdeOperator:
        return SchurOdeOperator(self.system, self.spec.excitation, pcg_tol=pcg_tol, pod_size=pod_size)

    def flux(self, a_c: np.ndarray, a_n: np.ndarray) -> np.ndarray:
        full = self.system.partition.scatter(a_c, a_n)
        return compute_B(self.mesh, full, self.spec.order, self._space)

    def observe(self, t: float, a_c: np.ndarray, a_n: np.ndarray) -> tuple[float, ...]:
        B = self.flux(a_c, a_n)
        bmag = np.hypot(B[:, 0], B[:, 1])
        areas = self.mesh.areas
        return tuple(float(np.dot(areas[m], bmag[m]) / areas[m].sum()) for m in self._masks)


def trajectory_deviation(reference: np.ndarray, other: np.ndarray) -> float:
    """||B_ref - B||_inf / ||B_ref||_inf over all probes and matched output times."""
    reference = np.asarray(reference, dtype=float)
    other = np.asarray(other, dtype=float)
    if reference.shape != other.shape:
        raise ValueError(f"trajectories differ in shape: {reference.shape} vs {other.shape}")
    scale = np.max(np.abs(reference))
    diff = np.max(np.abs(reference - other)) if reference.size else 0.0
    return float(diff / scale) if scale > 0 else float(diff)
