"""Landmark-free statistical shape modeling with neural deformation flows.

Shapes are represented as continuous deformations of a template surface:
an MLP-parametrized, latent-conditioned velocity field is integrated over
[0, 1], trained auto-decoder style with a correspondence-free Chamfer loss,
with PCA latent statistics and span-restricted inference on top.

Submodules load lazily so the CLI can configure thread limits before any
numerics are imported.
"""

from __future__ import annotations

__version__ = "0.1.0"

_EXPORTS = {
    # estimator facade
    "FlowSsm": "estimator",
    "BaseEstimator": "estimator",
    # mesh primitives
    "TriMesh": "mesh",
    "PointSet": "mesh",
    "RigidTransform": "mesh",
    "load_mesh": "mesh",
    "save_mesh": "mesh",
    "sample_surface": "mesh",
    "farthest_point_sample": "mesh",
    "nearest_neighbor": "mesh",
    "chamfer_distance": "mesh",
    "average_symmetric_surface_distance": "mesh",
    "icp_align": "mesh",
    "normalize_to_unit_box": "mesh",
    "count_self_intersections": "mesh",
    # model core
    "FlowSsmModel": "model",
    "TrainingConfig": "model",
    "PcaBasis": "model",
    "fit_pca": "model",
    "train": "model",
    "fit_latent": "model",
    "sample_shape": "model",
    "save_model": "model",
    "load_model": "model",
    # flow + latents
    "FlowConfig": "flow",
    "ImNetMlp": "flow",
    "integrate_flow": "flow",
    "velocity": "flow",
    "LatentState": "latents",
    "ControlPointSet": "latents",
    "place_control_points": "latents",
    "interpolate_latent": "latents",
    "compose_deformers": "latents",
    # evaluation
    "EvalReport": "evaluation",
    "LinearSvm": "evaluation",
    "evaluate_generality": "evaluation",
    "evaluate_specificity": "evaluation",
    "ablate_global_vs_local": "evaluation",
    "train_svm": "evaluation",
    "classify_monte_carlo": "evaluation",
    # synthetic data
    "FamilySpec": "synthetic",
    "generate_family": "synthetic",
    "family_template": "synthetic",
    "family_nearest_neighbor_spread": "synthetic",
    "vertex_pca_baseline": "synthetic",
    "icosphere": "synthetic",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name: str):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    import importlib

    mod = importlib.import_module(f".{module}", __name__)
    value = getattr(mod, name)
    globals()[name] = value
    return value


def __dir__():
    return __all__
