"""Mesh and point-set primitives: I/O, sampling, distances, alignment."""

from .core import PointSet, RigidTransform, TriMesh, angle_of_rotation
from .distance import (
    average_symmetric_surface_distance,
    chamfer_distance,
    nearest_neighbor,
    point_to_mesh_distance,
    point_triangle_distance,
)
from .intersection import count_self_intersections, triangles_intersect
from .io import load_mesh, save_mesh
from .registration import icp_align, kabsch, normalize_to_unit_box
from .sampling import farthest_point_sample, greedy_farthest_points, sample_surface

__all__ = [
    "PointSet",
    "RigidTransform",
    "TriMesh",
    "angle_of_rotation",
    "average_symmetric_surface_distance",
    "chamfer_distance",
    "count_self_intersections",
    "farthest_point_sample",
    "greedy_farthest_points",
    "icp_align",
    "kabsch",
    "load_mesh",
    "nearest_neighbor",
    "normalize_to_unit_box",
    "point_to_mesh_distance",
    "point_triangle_distance",
    "sample_surface",
    "save_mesh",
    "triangles_intersect",
]
