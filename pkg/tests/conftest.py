"""Shared fixtures: small random clouds and a tiny on-disk dataset."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from pcad import DatasetConfig, PointCloud, build_dataset
from pcad.config import desk_profile


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_cloud(rng):
    return PointCloud(rng.normal(size=(200, 3)))


def make_cloud(rng, n=64):
    return PointCloud(rng.normal(size=(n, 3)))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """3 categories x (2 train + 4 test) of 256-point clouds."""
    root = tmp_path_factory.mktemp("tinydata")
    config = DatasetConfig(
        out_dir=str(root / "data"),
        categories=["sphere", "torus", "box"],
        n_points=256,
        train_per_category=2,
        test_per_category=4,
        seed=77,
    )
    return build_dataset(config)


@pytest.fixture
def tiny_config():
    """Config small enough for per-test training runs."""
    return desk_profile(g=24, k=8, d=32, d_z=16, epochs=2, seed=5)
