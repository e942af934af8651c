import math

import numpy as np
import pytest

from obsfem import (
    BoundaryElement,
    CircularArc,
    MeshError,
    TriMesh,
    boundary_point,
    build_disk_mesh,
    build_square_mesh,
    mesh_quality,
    read_mesh_text,
    write_mesh_text,
)
from obsfem.mesh import triangle_areas, triangle_diameters


def quarter_arc_mesh():
    """Unit disk cut into four quadrant triangles with quarter-circle arcs."""
    verts = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [0.0, 0.0]])
    tris = np.array([[4, 0, 1], [4, 1, 2], [4, 2, 3], [4, 3, 0]])
    h = math.pi / 2
    boundary = [
        BoundaryElement(j, (j + 1) % 4,
                        CircularArc((0.0, 0.0), 1.0, j * h, (j + 1) * h), h)
        for j in range(4)
    ]
    return TriMesh(verts, tris, boundary)


class TestSquareMesh:
    def test_counts_k2(self):
        mesh = build_square_mesh(2)
        assert len(mesh.vertices) == 9
        assert len(mesh.triangles) == 8
        assert len(mesh.boundary) == 8
        assert mesh.boundary_length == pytest.approx(4.0, abs=1e-14)

    def test_counts_k10(self, square10):
        assert len(square10.vertices) == 121
        assert len(square10.triangles) == 200
        assert len(square10.boundary) == 40

    def test_area_partition(self):
        mesh = build_square_mesh(2)
        assert abs(triangle_areas(mesh).sum() - 1.0) <= 1e-14

    def test_k_too_small(self):
        with pytest.raises(MeshError):
            build_square_mesh(1)

    def test_mesh_size_is_diagonal(self, square10):
        assert square10.mesh_size_h == pytest.approx(math.sqrt(2) / 10, rel=1e-12)

    def test_aspect_is_one_plus_sqrt2(self, square10):
        # right isoceles triangles: diameter / inscribed diameter = 1 + sqrt(2)
        q = mesh_quality(square10)
        assert q.max_aspect == pytest.approx(1 + math.sqrt(2), rel=1e-12)
        assert q.diameter_ratio == pytest.approx(1.0, rel=1e-12)

    def test_boundary_loop_closes(self, square10):
        b = square10.boundary
        for prev, cur in zip(b, b[1:] + b[:1]):
            assert prev.v1 == cur.v0

    def test_boundary_starts_at_origin_ccw(self, square10):
        start = square10.vertices[square10.boundary[0].v0]
        np.testing.assert_allclose(start, [0.0, 0.0], atol=1e-15)
        second = square10.vertices[square10.boundary[0].v1]
        assert second[0] > 0 and second[1] == 0  # heads along the bottom edge


class TestDiskMesh:
    def test_outer_ring_on_circle(self):
        for m in (2, 10):
            mesh = build_disk_mesh(m)
            for e in mesh.boundary:
                for v in (e.v0, e.v1):
                    assert abs(np.hypot(*mesh.vertices[v]) - 1.0) <= 1e-12

    def test_boundary_length_is_full_circle(self, disk10):
        # arcs, not chords: lengths must sum to 2*pi exactly
        assert abs(disk10.boundary_length - 2 * math.pi) <= 1e-12

    def test_quality_bounds(self, disk10):
        q = mesh_quality(disk10)
        assert q.max_aspect <= 10.0
        assert q.diameter_ratio <= 4.0

    def test_quality_frozen_values(self):
        # ring construction gives the same worst triangle at every m
        for m in (2, 10, 40):
            q = mesh_quality(build_disk_mesh(m))
            assert q.max_aspect == pytest.approx(3.2106228443383, abs=1e-9)
            assert q.diameter_ratio == pytest.approx(1.6515874221716, abs=1e-9)

    def test_area_close_to_disk(self):
        m = 10
        mesh = build_disk_mesh(m)
        area = triangle_areas(mesh).sum()
        assert area < math.pi
        assert area >= math.pi * (1 - (2 * math.pi / m) ** 2)

    def test_m_too_small(self):
        with pytest.raises(MeshError):
            build_disk_mesh(1)

    def test_all_boundary_arcs(self, disk10):
        assert all(isinstance(e.geometry, CircularArc) for e in disk10.boundary)

    def test_ring_counts(self, disk10):
        # ring i holds round(2*pi*i) vertices; total includes the hub vertex
        expected = 1 + sum(round(2 * math.pi * i) for i in range(1, 11))
        assert len(disk10.vertices) == expected
        assert len(disk10.boundary) == round(2 * math.pi * 10)


class TestBoundaryPoint:
    def test_straight_segment_midpoint(self):
        mesh = build_square_mesh(2)
        pts, speed = boundary_point(mesh, 0, 0.5)
        np.testing.assert_allclose(pts, [0.25, 0.0], atol=1e-15)
        assert speed == pytest.approx(0.5, abs=1e-15)

    def test_quarter_arc_midpoint(self):
        mesh = quarter_arc_mesh()
        pts, speed = boundary_point(mesh, 0, 0.5)
        np.testing.assert_allclose(pts, [math.cos(math.pi / 4), math.sin(math.pi / 4)],
                                   atol=1e-14)
        assert speed == pytest.approx(math.pi / 2, abs=1e-14)

    def test_t0_is_v0(self, disk10):
        for e in (0, 7, len(disk10.boundary) - 1):
            pts, _ = boundary_point(disk10, e, 0.0)
            np.testing.assert_allclose(pts, disk10.vertices[disk10.boundary[e].v0],
                                       atol=1e-14)

    def test_speed_integrates_to_length(self, disk10):
        # constant-speed parametrization: speed * 1 == h_E
        for e in (0, 31):
            _, speed = boundary_point(disk10, e, 0.3)
            assert speed == pytest.approx(disk10.boundary[e].length, rel=1e-12)

    def test_t_out_of_range(self, square10):
        with pytest.raises(ValueError):
            boundary_point(square10, 0, 1.5)

    def test_vectorized_t(self, disk10):
        t = np.linspace(0.1, 0.9, 5)
        pts, speed = boundary_point(disk10, 3, t)
        assert pts.shape == (5, 2)
        np.testing.assert_allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.0, atol=1e-13)


class TestValidation:
    def test_degenerate_triangle_rejected(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
        tris = np.array([[0, 1, 2], [0, 1, 3]])  # first one has zero area
        boundary = [BoundaryElement(0, 1, None, 1.0), BoundaryElement(1, 3, None, math.sqrt(2)),
                    BoundaryElement(3, 0, None, 1.0)]
        with pytest.raises(MeshError):
            TriMesh(verts, tris, boundary)

    def test_open_loop_rejected(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        tris = np.array([[0, 1, 2]])
        boundary = [BoundaryElement(0, 1, None, 1.0), BoundaryElement(2, 0, None, 1.0)]
        with pytest.raises(MeshError):
            TriMesh(verts, tris, boundary)

    def test_arc_endpoint_off_circle_rejected(self):
        verts = np.array([[1.0, 0.0], [0.0, 1.1], [-1.0, 0.0], [0.0, -1.0], [0.0, 0.0]])
        tris = np.array([[4, 0, 1], [4, 1, 2], [4, 2, 3], [4, 3, 0]])
        h = math.pi / 2
        boundary = [
            BoundaryElement(j, (j + 1) % 4,
                            CircularArc((0.0, 0.0), 1.0, j * h, (j + 1) * h), h)
            for j in range(4)
        ]
        with pytest.raises(MeshError):
            TriMesh(verts, tris, boundary)

    def test_quarter_arc_mesh_valid(self):
        mesh = quarter_arc_mesh()
        assert abs(mesh.boundary_length - 2 * math.pi) <= 1e-12


class TestTextFormat:
    def test_square_header(self, tmp_path):
        path = tmp_path / "sq.txt"
        write_mesh_text(build_square_mesh(2), str(path))
        first = path.read_text().splitlines()[0]
        assert first == "9 8 8"

    def test_round_trip_square(self, tmp_path):
        mesh = build_square_mesh(3)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        write_mesh_text(mesh, str(p1))
        back = read_mesh_text(str(p1))
        write_mesh_text(back, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_round_trip_disk_arcs(self, tmp_path):
        mesh = build_disk_mesh(3)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        write_mesh_text(mesh, str(p1))
        back = read_mesh_text(str(p1))
        write_mesh_text(back, str(p2))
        assert p1.read_bytes() == p2.read_bytes()
        assert all(isinstance(e.geometry, CircularArc) for e in back.boundary)

    def test_round_trip_preserves_geometry(self, tmp_path):
        mesh = build_disk_mesh(4)
        path = tmp_path / "d.txt"
        write_mesh_text(mesh, str(path))
        back = read_mesh_text(str(path))
        np.testing.assert_array_equal(mesh.vertices, back.vertices)
        np.testing.assert_array_equal(mesh.triangles, back.triangles)
        assert [e.length for e in mesh.boundary] == [e.length for e in back.boundary]


def test_diameters_positive(square4, disk10):
    for mesh in (square4, disk10):
        d = triangle_diameters(mesh)
        assert (d > 0).all()
        assert d.max() == pytest.approx(mesh.mesh_size_h)
