import numpy as np
import pytest

from flowssm.flow import FlowConfig
from flowssm.model import TrainingConfig, train
from flowssm.synthetic import FamilySpec, family_template, generate_family


def tiny_config(**overrides) -> TrainingConfig:
    base = dict(
        epochs=30,
        lr=2e-3,
        batch_size=4,
        n_sample_points=350,
        latent_init_std=0.1,
        latent_dim=6,
        n_control_points=16,
        initial_eps=3.0,
        hidden=(16, 16, 8, 8),
        flow=FlowConfig(n_steps=4),
        inference_epochs=60,
        inference_lr=0.01,
        seed=0,
    )
    base.update(overrides)
    return TrainingConfig(**base)


@pytest.fixture(scope="session")
def ellipsoid_family():
    spec = FamilySpec(family="ellipsoid", n_vertices=350, seed=5,
                      axis_range=(0.6, 0.95))
    members = generate_family(spec, 10)
    return {
        "spec": spec,
        "shapes": [m for m, _ in members],
        "params": np.stack([p for _, p in members]),
        "template": family_template(spec, subdivisions=2),
    }


@pytest.fixture(scope="session")
def tiny_model(ellipsoid_family):
    """Small trained model shared by the model/evaluation tests."""
    model, states = train(
        ellipsoid_family["shapes"][:8],
        ellipsoid_family["template"],
        tiny_config(),
    )
    return {"model": model, "states": states, **ellipsoid_family}


@pytest.fixture(scope="session")
def identical_pair_model(ellipsoid_family):
    """Degenerate population: two copies of one shape."""
    shape = ellipsoid_family["shapes"][0]
    cfg = tiny_config(epochs=20, latent_dim=4, n_control_points=8)
    model, states = train([shape, shape.copy()], ellipsoid_family["template"], cfg)
    return {"model": model, "states": states, "shape": shape}
