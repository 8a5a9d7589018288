"""Rigid alignment (iterative closest points) and unit-box normalization."""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import ConvergenceWarning, DataError
from .core import RigidTransform, TriMesh
from .distance import closest_point_on_mesh


def kabsch(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform mapping paired source onto target points.

    Rotation from the SVD of the cross-covariance, reflection corrected; no
    scaling.
    """
    src_mean = source.mean(axis=0)
    tgt_mean = target.mean(axis=0)
    h = (source - src_mean).T @ (target - tgt_mean)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, tgt_mean - rot @ src_mean)


def icp_align(
    source: TriMesh,
    target: TriMesh,
    max_iters: int = 200,
    tol: float = 1e-10,
) -> tuple[RigidTransform, TriMesh]:
    """Point-to-point ICP of source vertices onto the target surface.

    Correspondences are the exact closest points on the target triangles
    (nearest-vertex quantization stalls on the tangential component of a
    rotation, fixed points appearing several degrees from the optimum).
    Iterates correspondence + Kabsch until the RMS correspondence distance
    changes by less than ``tol`` or ``max_iters`` is reached (the latter
    emits a non-fatal ConvergenceWarning recorded on the returned transform).
    """
    moved = source.vertices.copy()
    transform = RigidTransform.identity()
    prev_rms = None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        dist, corr = closest_point_on_mesh(moved, target)
        step = kabsch(moved, corr)
        moved = step.apply(moved)
        transform = step.compose(transform)
        rms = float(np.sqrt(np.mean(dist**2)))
        if prev_rms is not None and abs(prev_rms - rms) < tol:
            converged = True
            break
        prev_rms = rms
    if not converged:
        warnings.warn(
            f"ICP stopped after {it} iterations without reaching tol={tol}",
            ConvergenceWarning,
        )
    result = RigidTransform(
        transform.rotation, transform.translation, converged=converged, n_iterations=it
    )
    return result, source.with_vertices(moved)


def normalize_to_unit_box(
    meshes: list[TriMesh], reference_extent: float | None = None
) -> tuple[list[TriMesh], float, list[np.ndarray]]:
    """Center each mesh at the origin and apply one shared isotropic scale.

    The scale is ``1 / max half bounding-box extent`` over all meshes (so the
    largest instance fits [-1, 1]); ``reference_extent`` overrides that half
    extent. Returns the normalized meshes, the scale, and per-mesh centers so
    metrics can be converted back to model units (``model = norm / scale``).
    """
    if not meshes:
        raise DataError("need at least one mesh")
    centers = []
    half_extent = 0.0
    for mesh in meshes:
        lo, hi = mesh.bounds()
        centers.append((lo + hi) / 2.0)
        half_extent = max(half_extent, float((hi - lo).max()) / 2.0)
    if reference_extent is not None:
        half_extent = float(reference_extent)
    if half_extent <= 0:
        raise DataError("meshes have zero extent")
    scale = 1.0 / half_extent
    normalized = [
        mesh.with_vertices((mesh.vertices - center) * scale)
        for mesh, center in zip(meshes, centers)
    ]
    return normalized, scale, centers
