import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from spectv.mesh import (DegenerateFaceError, MeshError, NonManifoldError, TriMesh, face_geometry,
                         total_area, vertex_mass, vertex_normals)
from spectv.shapes import grid_plane, icosphere, torus_mesh


def _tet():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriMesh(v, f)


def test_tetra_counts_and_topology():
    m = _tet()
    assert m.n_vertices == 4 and m.n_faces == 4
    assert m.is_closed() and m.euler() == 2


def test_rejects_bad_shapes():
    with pytest.raises(MeshError):
        TriMesh(np.zeros((3, 2)), np.array([[0, 1, 2]]))
    with pytest.raises(MeshError):
        TriMesh(np.eye(3), np.array([[0, 1]]))


def test_rejects_out_of_range_index():
    with pytest.raises(MeshError, match="out of range"):
        TriMesh(np.eye(3), np.array([[0, 1, 3]]))


def test_rejects_non_finite():
    v = np.eye(3)
    v[0, 0] = np.nan
    with pytest.raises(MeshError):
        TriMesh(v, np.array([[0, 1, 2]]))


def test_degenerate_faces_are_named():
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], float)
    with pytest.raises(DegenerateFaceError) as e:
        TriMesh(v, np.array([[0, 1, 3], [0, 1, 2]]))
    assert 1 in list(e.value.faces)
    with pytest.raises(DegenerateFaceError):
        TriMesh(v, np.array([[0, 0, 3]]))


def test_degenerate_check_can_be_skipped():
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float)
    m = TriMesh(v, np.array([[0, 1, 2]]), check_area=False)
    assert face_geometry(m).area[0] == 0


def test_non_manifold_edge():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]], float)
    f = np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    with pytest.raises(NonManifoldError):
        TriMesh(v, f)


def test_attribute_length_checked():
    with pytest.raises(MeshError):
        TriMesh(np.eye(3), np.array([[0, 1, 2]]), {"u": np.zeros(2)})


def test_with_vertices_keeps_connectivity():
    m = icosphere(1)
    m2 = m.with_vertices(2 * m.vertices)
    assert np.array_equal(m2.faces, m.faces)
    assert total_area(m2) == pytest.approx(4 * total_area(m))


def test_arrays_are_read_only():
    m = icosphere(0)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 1.0


def test_area_against_convex_hull():
    # the hull of a convex icosphere is the icosphere itself
    m = icosphere(3)
    assert total_area(m) == pytest.approx(ConvexHull(m.vertices).area, rel=1e-12)


def test_icosphere_area_within_one_percent():
    m = icosphere(4)
    assert m.n_vertices == 2562
    assert abs(total_area(m) - 4 * np.pi) / (4 * np.pi) < 0.01


def test_face_geometry_unit_triangle():
    m = TriMesh(np.array([[0, 0, 0], [2, 0, 0], [0, 3, 0]], float), np.array([[0, 1, 2]]))
    g = face_geometry(m)
    assert g.area[0] == pytest.approx(3.0)
    assert np.allclose(g.normal[0], [0, 0, 1])


def test_mass_sums_to_area(closed_mesh):
    vm = vertex_mass(closed_mesh)
    assert vm.total == pytest.approx(total_area(closed_mesh), rel=1e-12)
    assert np.all(vm.mass > 0)


def test_sphere_normals_point_outward():
    m = icosphere(3)
    n = vertex_normals(m)
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0)
    assert np.min(np.einsum("ij,ij->i", n, m.vertices)) > 0.99


def test_torus_genus():
    assert torus_mesh(2, 1, 8, 16).euler() == 0


def test_plane_boundary():
    m = grid_plane(4, 5)
    assert not m.is_closed()
    assert len(m.boundary_vertices()) == 2 * (4 + 5)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(0, 2))
def test_area_scales_quadratically(s, k):
    m = icosphere(k)
    assert total_area(m.with_vertices(s * m.vertices)) == pytest.approx(s * s * total_area(m), rel=1e-12)
