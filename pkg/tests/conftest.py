"""Shared fixtures: toy model configs and one default training run per
session (several tests and the acceptance suite reuse it)."""

import time

import numpy as np
import pytest

from vitexplain import ViTConfig, SyntheticSpec, generate_dataset, init_weights
from vitexplain.training import TrainConfig, train


TOY_CONFIG_1L = ViTConfig(image_size=8, patch_size=4, n_layers=1, n_heads=1,
                          embed_dim=8, mlp_dim=12, n_classes=3)
TOY_CONFIG_2L = ViTConfig(image_size=8, patch_size=4, n_layers=2, n_heads=2,
                          embed_dim=8, mlp_dim=12, n_classes=3)


@pytest.fixture(scope="session")
def default_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("dataset")
    manifest = generate_dataset(SyntheticSpec(), str(out))
    return manifest


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("dataset_small")
    manifest = generate_dataset(SyntheticSpec(n_per_class=12, seed=3),
                                str(out))
    return manifest


@pytest.fixture(scope="session")
def trained(default_dataset):
    """Default training run; returns (weights, log, manifest, seconds)."""
    start = time.perf_counter()
    weights, log = train(TrainConfig(), ViTConfig(), default_dataset)
    elapsed = time.perf_counter() - start
    return weights, log, default_dataset, elapsed


@pytest.fixture()
def toy_weights_64():
    return init_weights(TOY_CONFIG_1L, seed=1, dtype=np.float64)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
