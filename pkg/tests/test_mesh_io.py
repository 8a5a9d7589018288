import numpy as np
import pytest

from flowssm.errors import IoError, ParseError, TopologyError
from flowssm.mesh import TriMesh, load_mesh, save_mesh
from flowssm.synthetic import icosphere

CUBE_VERTS = np.array([
    [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
    [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
], dtype=float)
CUBE_FACES = np.array([
    [0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
    [0, 1, 5], [0, 5, 4], [2, 3, 7], [2, 7, 6],
    [1, 2, 6], [1, 6, 5], [3, 0, 4], [3, 4, 7],
])


def cube() -> TriMesh:
    return TriMesh(CUBE_VERTS.copy(), CUBE_FACES.copy())


def test_load_unit_cube_obj(tmp_path):
    lines = [f"v {x} {y} {z}" for x, y, z in CUBE_VERTS]
    lines += [f"f {a+1} {b+1} {c+1}" for a, b, c in CUBE_FACES]
    path = tmp_path / "cube.obj"
    path.write_text("\n".join(lines))
    mesh = load_mesh(path)
    assert mesh.n_vertices == 8
    assert mesh.n_faces == 12
    np.testing.assert_allclose(mesh.vertices, CUBE_VERTS)


def test_out_of_range_face_index_raises(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 10\n")
    with pytest.raises(TopologyError):
        load_mesh(path)


def test_degenerate_face_raises():
    with pytest.raises(TopologyError):
        TriMesh(CUBE_VERTS, [[0, 0, 1]])


def test_zero_area_mesh_raises():
    with pytest.raises(TopologyError):
        TriMesh(np.zeros((3, 3)), [[0, 1, 2]])


@pytest.mark.parametrize("fmt", ["obj", "ply"])
def test_round_trip_cube(tmp_path, fmt):
    path = tmp_path / f"cube.{fmt}"
    save_mesh(cube(), path)
    back = load_mesh(path)
    np.testing.assert_allclose(back.vertices, CUBE_VERTS, atol=1e-6)
    np.testing.assert_array_equal(back.faces, CUBE_FACES)


def test_round_trip_large_sphere(tmp_path):
    mesh = icosphere(5)  # 10242 vertices
    for fmt in ("obj", "ply"):
        path = tmp_path / f"sphere.{fmt}"
        save_mesh(mesh, path)
        back = load_mesh(path)
        assert np.abs(back.vertices - mesh.vertices).max() < 1e-6
        np.testing.assert_array_equal(back.faces, mesh.faces)


def test_ply_ascii_round_trip(tmp_path):
    path = tmp_path / "cube.ply"
    save_mesh(cube(), path, binary=False)
    back = load_mesh(path)
    np.testing.assert_allclose(back.vertices, CUBE_VERTS, atol=1e-6)


def test_save_empty_face_mesh_raises(tmp_path):
    mesh = TriMesh(CUBE_VERTS, np.zeros((0, 3), dtype=np.int64), validate=False)
    with pytest.raises(TopologyError):
        save_mesh(mesh, tmp_path / "empty.obj")
    assert not (tmp_path / "empty.obj").exists()


def test_save_to_unwritable_path_raises():
    with pytest.raises(IoError):
        save_mesh(cube(), "/nonexistent-dir/cube.obj")


def test_malformed_obj_raises(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0\n")
    with pytest.raises(ParseError):
        load_mesh(path)


def test_obj_polygon_fan_triangulation(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = load_mesh(path)
    assert mesh.n_faces == 2
