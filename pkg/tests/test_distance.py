import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowssm.mesh import (average_symmetric_surface_distance,
                          chamfer_distance, nearest_neighbor,
                          point_to_mesh_distance, point_triangle_distance)
from flowssm.synthetic import icosphere


def random_points(n, seed):
    return np.random.default_rng(seed).normal(size=(n, 3))


def brute_force_nn(query, ref):
    d = np.linalg.norm(query[:, None] - ref[None], axis=2)
    return d.argmin(axis=1), d.min(axis=1)


def test_nn_self_query():
    pts = random_points(50, 0)
    idx, dist = nearest_neighbor(pts, pts)
    assert np.array_equal(idx, np.arange(50))
    assert dist.max() == 0.0


def test_nn_matches_brute_force():
    q = random_points(200, 1)
    r = random_points(300, 2)
    idx, dist = nearest_neighbor(q, r)
    bidx, bdist = brute_force_nn(q, r)
    assert np.array_equal(idx, bidx)
    np.testing.assert_allclose(dist, bdist, rtol=0, atol=1e-12)


def test_nn_tie_breaks_to_smallest_index():
    ref = np.array([[0, 0, 0], [5, 0, 0], [1, 0, 0], [9, 9, 9], [0, 0, 0],
                    [1, 0, 0]], dtype=float)
    query = np.array([[0.5, 0, 0]])  # equidistant to indices 0, 2, 4, 5
    idx, dist = nearest_neighbor(query, ref)
    assert idx[0] == 0
    assert dist[0] == 0.5


def test_chamfer_hand_case():
    a = np.array([[0.0, 0, 0]])
    b = np.array([[1.0, 0, 0], [3.0, 0, 0]])
    assert chamfer_distance(a, b) == pytest.approx(1.5, abs=1e-12)
    assert chamfer_distance(a, b, "one_sided_a_to_b") == pytest.approx(1.0, abs=1e-12)


def test_chamfer_identical_sets_zero():
    pts = random_points(100, 3)
    assert chamfer_distance(pts, pts) == 0.0


def test_chamfer_matches_exhaustive_oracle():
    for seed in range(3):
        a = random_points(537, 10 + seed)
        b = random_points(821, 20 + seed)
        da = np.linalg.norm(a[:, None] - b[None], axis=2)
        oracle = 0.5 * da.min(axis=1).mean() + 0.5 * da.min(axis=0).mean()
        assert chamfer_distance(a, b) == pytest.approx(oracle, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 1000))
def test_chamfer_symmetry_and_nonnegativity(n, m, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, 3))
    b = rng.normal(size=(m, 3))
    ab = chamfer_distance(a, b)
    ba = chamfer_distance(b, a)
    assert ab == pytest.approx(ba, abs=1e-12)
    assert ab >= 0.0


def dense_triangle_oracle(p, tri, n=400):
    """Approximate point-triangle distance by oversampling the triangle."""
    u = np.linspace(0, 1, n)
    uu, vv = np.meshgrid(u, u)
    mask = uu + vv <= 1.0
    uu, vv = uu[mask], vv[mask]
    pts = (1 - uu - vv)[:, None] * tri[0] + uu[:, None] * tri[1] + vv[:, None] * tri[2]
    return np.linalg.norm(pts - p, axis=1).min()


def test_point_triangle_against_dense_oracle():
    rng = np.random.default_rng(42)
    for _ in range(25):
        tri = rng.normal(size=(3, 3))
        p = rng.normal(size=3) * 2
        exact = point_triangle_distance(p[None], tri[None])[0]
        approx = dense_triangle_oracle(p, tri)
        assert exact <= approx + 1e-12
        assert abs(exact - approx) < 1e-3 * max(1.0, approx)


def test_point_triangle_regions():
    tri = np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0]]], dtype=float)
    # above the interior
    assert point_triangle_distance(np.array([[0.2, 0.2, 1.0]]), tri)[0] == pytest.approx(1.0)
    # beyond vertex A
    assert point_triangle_distance(np.array([[-1.0, -1.0, 0]]), tri)[0] == pytest.approx(np.sqrt(2))
    # beyond edge AB
    assert point_triangle_distance(np.array([[0.5, -2.0, 0]]), tri)[0] == pytest.approx(2.0)


def test_point_to_mesh_matches_brute_force():
    mesh = icosphere(2)
    pts = random_points(100, 5) * 1.5
    fast = point_to_mesh_distance(pts, mesh)
    tri = mesh.triangles()
    brute = np.empty(len(pts))
    for i, p in enumerate(pts):
        brute[i] = point_triangle_distance(np.repeat(p[None], len(tri), axis=0), tri).min()
    np.testing.assert_allclose(fast, brute, atol=1e-12)


def test_assd_self_is_zero():
    mesh = icosphere(2)
    assert average_symmetric_surface_distance(mesh, mesh, n_samples=2000) < 1e-9


def test_assd_concentric_spheres():
    inner = icosphere(4)
    outer = inner.with_vertices(inner.vertices * 1.1)
    assd = average_symmetric_surface_distance(inner, outer, n_samples=50000)
    assert assd == pytest.approx(0.1, abs=0.005)


def test_chamfer_kdtree_vs_exhaustive_1000():
    a = random_points(1000, 60)
    b = random_points(1000, 61)
    d = np.linalg.norm(a[:, None] - b[None], axis=2)
    oracle = 0.5 * d.min(axis=1).mean() + 0.5 * d.min(axis=0).mean()
    assert abs(chamfer_distance(a, b) - oracle) < 1e-12
