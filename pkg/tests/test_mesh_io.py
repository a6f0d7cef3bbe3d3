import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spectv.mesh import MeshError, TriMesh
from spectv.mesh_io import (FORMATS, MeshParseError, format_from_path, load_mesh, read_mesh, save_mesh,
                            write_mesh)
from spectv.shapes import grid_plane, icosphere


def test_obj_basic_and_quads():
    text = """# square
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
vn 0 0 1
f 1//1 2//1 3//1 4//1
"""
    m = load_mesh(text, "obj")
    assert m.n_vertices == 4 and m.n_faces == 2


def test_obj_negative_indices():
    m = load_mesh("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n", "obj")
    assert m.faces.tolist() == [[0, 1, 2]]


def test_obj_zero_index_reports_line():
    with pytest.raises(MeshParseError) as e:
        load_mesh("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", "obj")
    assert e.value.line == 4


def test_obj_bad_coordinate():
    with pytest.raises(MeshParseError, match="line 2"):
        load_mesh("v 0 0 0\nv 1 x 0\n", "obj")


def test_off_counts_and_truncation():
    good = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
    assert load_mesh(good, "off").n_faces == 1
    with pytest.raises(MeshParseError, match="file ended"):
        load_mesh("OFF\n3 1 0\n0 0 0\n1 0 0\n", "off")
    with pytest.raises(MeshParseError, match="header"):
        load_mesh("NOFF\n", "off")


@pytest.mark.parametrize("text, fmt, line", [
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n", "off", 6),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 9\n", "obj", 5),
    ("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
     "element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n",
     "ply", 13),
])
def test_index_out_of_range_reports_line(text, fmt, line):
    with pytest.raises(MeshParseError) as err:
        load_mesh(text, fmt)
    assert err.value.line == line and "out of range" in str(err.value)


def test_ply_attributes_round_trip():
    m = icosphere(1)
    u = np.linspace(-1, 1, m.n_vertices)
    text = save_mesh(m.with_vertices(m.vertices, {"u": u}), "ply")
    back = load_mesh(text, "ply")
    assert np.array_equal(back.attributes["u"], u)
    assert np.array_equal(back.vertices, m.vertices)


def test_ply_binary_rejected():
    with pytest.raises(MeshParseError, match="ascii"):
        load_mesh("ply\nformat binary_little_endian 1.0\nend_header\n", "ply")


def test_unknown_format():
    with pytest.raises(ValueError):
        load_mesh("", "stl")
    with pytest.raises(ValueError):
        format_from_path("a.stl")


@pytest.mark.parametrize("fmt", FORMATS)
def test_file_round_trip(tmp_path, fmt):
    m = icosphere(2)
    p = tmp_path / f"m.{fmt}"
    write_mesh(p, m)
    back = read_mesh(p)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.faces, m.faces)


@pytest.mark.parametrize("fmt", FORMATS)
def test_large_round_trip(fmt):
    m = grid_plane(223, 223, z_fn=lambda x, y: np.sin(7 * x) * np.cos(5 * y))
    assert m.n_vertices > 50_000
    back = load_mesh(save_mesh(m, fmt), fmt)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.faces, m.faces)


coords = arrays(np.float64, (4, 3), elements=st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False))


@settings(max_examples=40, deadline=None)
@given(coords, st.sampled_from(FORMATS))
def test_round_trip_is_bit_exact(v, fmt):
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    try:
        m = TriMesh(v, faces)
    except MeshError:
        return
    back = load_mesh(save_mesh(m, fmt), fmt)
    assert np.array_equal(back.vertices, m.vertices)
