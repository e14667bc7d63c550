import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mqsim.mesh import (FLAT_2D, BenchmarkGeometry, GeometryError, Mesh, RegionTag, generate_benchmark_mesh,
                        refine_uniform, structured_mesh, unit_square, write_vtk)


@pytest.fixture(scope="module")
def bench2():
    return generate_benchmark_mesh(2)


def _count_cells_inside(xs, ys, rect):
    cx = 0.5 * (xs[1:] + xs[:-1])
    cy = 0.5 * (ys[1:] + ys[:-1])
    nx = np.sum((cx > rect[0]) & (cx < rect[2]))
    ny = np.sum((cy > rect[1]) & (cy < rect[3]))
    return int(nx * ny)


def _grid_lines(mesh):
    return np.unique(mesh.vertices[:, 0]), np.unique(mesh.vertices[:, 1])


def test_unit_square_resolution_one():
    m = generate_benchmark_mesh(1, unit_square())
    assert m.n_triangles == 2
    assert np.all(m.regions == RegionTag.AIR)
    assert set(m.boundary_vertices) == {0, 1, 2, 3}


def test_plate_cells_are_conductor(bench2):
    xs, ys = _grid_lines(bench2)
    n_cells = _count_cells_inside(xs, ys, FLAT_2D.plate)
    assert np.sum(bench2.regions == RegionTag.CONDUCTOR) == 2 * n_cells
    # resolution counts cells across the plate's short side
    cx = 0.5 * (xs[1:] + xs[:-1])
    assert np.sum((cx > FLAT_2D.plate[0]) & (cx < FLAT_2D.plate[2])) == 2


def test_resolution_four_is_four_times_resolution_two(bench2):
    m4 = generate_benchmark_mesh(4)
    xs, ys = _grid_lines(bench2)
    expected = 2 * (len(xs) - 1) * (len(ys) - 1)  # enumeration of the res-2 grid
    assert bench2.n_triangles == expected
    assert m4.n_triangles == 4 * expected


def test_benchmark_sizes_are_stable():
    m1 = generate_benchmark_mesh(1)
    assert (m1.n_vertices, m1.n_triangles) == (600, 1104)


def test_areas_sum_to_box(bench2):
    box = FLAT_2D.air_box
    total = (box[2] - box[0]) * (box[3] - box[1])
    assert abs(bench2.areas.sum() - total) <= 1e-12 * total
    assert np.all(bench2.areas > 0)


def test_conductor_centroids_inside_plate(bench2):
    c = bench2.centroids[bench2.regions == RegionTag.CONDUCTOR]
    x0, y0, x1, y1 = FLAT_2D.plate
    assert np.all((c[:, 0] > x0) & (c[:, 0] < x1) & (c[:, 1] > y0) & (c[:, 1] < y1))


def test_region_areas_match_rectangles(bench2):
    def area(r):
        return (r[2] - r[0]) * (r[3] - r[1])
    assert bench2.region_area(RegionTag.CONDUCTOR) == pytest.approx(area(FLAT_2D.plate), rel=1e-12)
    assert bench2.region_area(RegionTag.COIL_PLUS) == pytest.approx(area(FLAT_2D.coil_plus), rel=1e-12)
    assert bench2.region_area(RegionTag.COIL_MINUS) == pytest.approx(area(FLAT_2D.coil_minus), rel=1e-12)


def test_outer_boundary_vertices_marked(bench2):
    box = FLAT_2D.air_box
    v = bench2.vertices
    on_box = np.flatnonzero(np.isclose(v[:, 0], box[0]) | np.isclose(v[:, 0], box[2])
                            | np.isclose(v[:, 1], box[1]) | np.isclose(v[:, 1], box[3]))
    assert np.array_equal(np.sort(on_box), bench2.boundary_vertices)


def test_shared_edges_are_consistent(bench2):
    # conforming mesh: every edge has one or two triangles, and interior edges
    # are traversed in opposite directions by their two neighbours
    local = np.array([[0, 1], [1, 2], [2, 0]])
    directed = bench2.triangles[:, local].reshape(-1, 2)
    as_set = {tuple(e) for e in directed}
    assert len(as_set) == len(directed)
    counts = np.bincount(bench2.triangle_edges.ravel())
    assert counts.max() <= 2
    boundary_edge_count = np.sum(counts == 1)
    assert boundary_edge_count == len(bench2.boundary_edges)


def test_refine_two_triangles_gives_eight():
    m = structured_mesh(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    r = refine_uniform(m)
    assert r.n_triangles == 8
    assert r.areas.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(r.areas, 1 / 8)


@given(nx=st.integers(1, 6), ny=st.integers(1, 6), n=st.integers(0, 2))
@settings(max_examples=25, deadline=None)
def test_refined_vertex_count_closed_form(nx, ny, n):
    m = structured_mesh(np.linspace(0, 1, nx + 1), np.linspace(0, 2, ny + 1))
    for _ in range(n):
        m = refine_uniform(m)
    assert m.n_vertices == (2**n * nx + 1) * (2**n * ny + 1)
    assert m.n_triangles == 4**n * 2 * nx * ny
    assert m.areas.sum() == pytest.approx(2.0, rel=1e-13)


def test_refine_inherits_regions_and_boundary():
    m = generate_benchmark_mesh(1)
    r = refine_uniform(m)
    assert np.array_equal(r.regions, np.repeat(m.regions, 4))
    box = FLAT_2D.air_box
    v = r.vertices
    on_box = np.isclose(v[:, 0], box[0]) | np.isclose(v[:, 0], box[2]) | np.isclose(v[:, 1], box[1]) \
        | np.isclose(v[:, 1], box[3])
    assert np.array_equal(np.flatnonzero(on_box), r.boundary_vertices)
    assert r.region_area(RegionTag.CONDUCTOR) == pytest.approx(m.region_area(RegionTag.CONDUCTOR), rel=1e-12)


def test_overlap_names_pair():
    geo = BenchmarkGeometry(coil_plus=(-5e-3, -0.025, 0.0, 0.025))
    with pytest.raises(GeometryError, match="plate and coil_plus"):
        generate_benchmark_mesh(1, geo)


def test_plate_must_be_strictly_inside():
    geo = BenchmarkGeometry(plate=(-0.1, -0.025, 0.0016, 0.025))
    with pytest.raises(GeometryError, match="plate"):
        generate_benchmark_mesh(1, geo)


@pytest.mark.parametrize("bad", [0, -1, 1.5])
def test_bad_resolution(bad):
    with pytest.raises(ValueError):
        generate_benchmark_mesh(bad)


def test_negative_area_rejected():
    with pytest.raises(ValueError, match="triangle 0"):
        Mesh(np.array([[0, 0], [1, 0], [0, 1.0]]), np.array([[0, 2, 1]]), np.array([0]))


def test_mesh_arrays_read_only(bench2):
    with pytest.raises(ValueError):
        bench2.vertices[0, 0] = 1.0


def test_vtk_dump(tmp_path):
    m = generate_benchmark_mesh(1, unit_square())
    p = tmp_path / "m.vtk"
    write_vtk(p, m, point_data={"a": np.arange(4.0)})
    text = p.read_text().splitlines()
    assert text[0] == "# vtk DataFile Version 3.0"
    assert "POINTS 4 double" in text
    assert "CELLS 2 8" in text
    assert "CELL_TYPES 2" in text
    assert "CELL_DATA 2" in text and "SCALARS region int 1" in text
    assert "POINT_DATA 4" in text
