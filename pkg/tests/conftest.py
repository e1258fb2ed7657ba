from __future__ import annotations

import pytest

from dermaug import fixtures
from dermaug.manifest import load_manifest
from dermaug.trainer import TrainingConfig


@pytest.fixture(scope="session")
def published_manifest():
    return fixtures.build_sample_size_fixture()


@pytest.fixture(scope="session")
def smoke_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("smoke")
    fixtures.build_smoke_fixture(directory, rng_seed=5)
    return directory


@pytest.fixture(scope="session")
def smoke_manifest(smoke_dir):
    return load_manifest(smoke_dir / "manifest.csv")


@pytest.fixture(scope="session")
def tiny_config():
    """Desk-scale training settings: tiny random backbone, 2 epochs."""
    return TrainingConfig(
        backbone="tiny",
        pretrained=False,
        freeze_features=False,
        epochs=2,
        batch_size=16,
        learning_rate=5e-3,
        optimizer="adam",
        rng_seed=3,
        input_size=32,
    )
