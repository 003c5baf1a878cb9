from __future__ import annotations

import pytest
import torch

from src.model import BranchConfig, SiameseModel
from src.synthetic import SyntheticWorldConfig, generate_synthetic_world

TINY_SCHEDULE = (4, 4, 8, 8, 8, 8, 8)


def tiny_world_config(**overrides) -> SyntheticWorldConfig:
    """A 32 x 16 panorama / 32 x 32 tile world small enough to render in milliseconds."""
    values = dict(
        n_locations=12,
        n_test=4,
        landmarks_per_location=4,
        panorama_width=32,
        panorama_height=16,
        overhead_width=32,
        overhead_height=32,
        meters_per_pixel=0.4,
        min_landmark_range=3.0,
        max_landmark_range=6.0,
        seed=3,
    )
    values.update(overrides)
    return SyntheticWorldConfig(**values)


@pytest.fixture
def tiny_model() -> SiameseModel:
    return SiameseModel(BranchConfig(TINY_SCHEDULE), seed=0)


@pytest.fixture
def tiny_model64() -> SiameseModel:
    return SiameseModel(BranchConfig(TINY_SCHEDULE), seed=0, dtype=torch.float64)


@pytest.fixture(scope="session")
def tiny_world(tmp_path_factory):
    out = tmp_path_factory.mktemp("world")
    return generate_synthetic_world(tiny_world_config(), str(out))
