import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import cxrclassify as cx

ASSETS = Path(__file__).parent / "assets"


@pytest.fixture(scope="session")
def eval_aug():
    """Deterministic 64x64 preprocessing matched to the synthetic fixtures."""
    return cx.AugmentationConfig(
        resize_hw=(64, 64), horizontal_flip_prob=0.0, rotation_degrees_max=0.0
    )


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory):
    """64-record synthetic dataset shared by fast tests (root, manifest)."""
    root = tmp_path_factory.mktemp("small_fixture")
    manifest = cx.make_synthetic_fixture(64, 12, 11, root)
    return root, manifest


@pytest.fixture(scope="session")
def overfit_fixture(tmp_path_factory):
    """200-record synthetic dataset for the training-based checks."""
    root = tmp_path_factory.mktemp("overfit_fixture")
    manifest = cx.make_synthetic_fixture(200, 40, 7, root)
    return root, manifest


@pytest.fixture()
def tiny_manifest():
    return cx.parse_manifest(ASSETS / "tiny_manifest.csv")
