"""Random and farthest-point sampling of mesh surfaces."""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..validation import check_rng
from .core import PointSet, TriMesh


def sample_surface(mesh: TriMesh, n: int, seed=0) -> PointSet:
    """Draw ``n`` points uniformly w.r.t. surface area.

    Faces are chosen proportionally to their area, then a point is placed
    uniformly inside the chosen triangle via the square-root barycentric
    trick. Deterministic for a given seed.
    """
    if n < 1:
        raise DataError(f"sample count must be >= 1, got {n}")
    rng = check_rng(seed)
    areas = mesh.face_areas()
    cdf = np.cumsum(areas)
    cdf /= cdf[-1]
    face_idx = np.searchsorted(cdf, rng.random(n), side="right")
    face_idx = np.minimum(face_idx, len(areas) - 1)

    tri = mesh.triangles()[face_idx]
    r1 = np.sqrt(rng.random(n))[:, None]
    r2 = rng.random(n)[:, None]
    pts = (1.0 - r1) * tri[:, 0] + r1 * (1.0 - r2) * tri[:, 1] + r1 * r2 * tri[:, 2]
    return PointSet(pts, source="mesh-sampled")


def farthest_point_sample(
    mesh: TriMesh, m: int, seed=0, n_dense: int | None = None
) -> PointSet:
    """Greedy farthest-point sampling over a dense surface sample.

    The first point is the dense-sample point nearest the dense sample's
    centroid (making the greedy sequence deterministic); every following
    point maximizes its distance to the already-selected set.
    """
    if m < 1:
        raise DataError(f"sample count must be >= 1, got {m}")
    if n_dense is None:
        n_dense = max(4 * m, 2048)
    dense = sample_surface(mesh, n_dense, seed=seed).points
    return PointSet(greedy_farthest_points(dense, m), source="mesh-sampled")


def greedy_farthest_points(candidates: np.ndarray, m: int) -> np.ndarray:
    """Greedy max-min selection of ``m`` rows from ``candidates``.

    Starts from the candidate nearest the centroid; ties resolve to the
    smallest index via argmin/argmax semantics.
    """
    pts = np.asarray(candidates, dtype=np.float64)
    if m > len(pts):
        raise DataError(f"cannot select {m} points from {len(pts)} candidates")
    centroid = pts.mean(axis=0)
    first = int(np.argmin(np.linalg.norm(pts - centroid, axis=1)))
    chosen = [first]
    dists = np.linalg.norm(pts - pts[first], axis=1)
    for _ in range(1, m):
        nxt = int(np.argmax(dists))
        chosen.append(nxt)
        dists = np.minimum(dists, np.linalg.norm(pts - pts[nxt], axis=1))
    return pts[chosen]
