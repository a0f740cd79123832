from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"
MNIST = DATA / "mnist"
ROOT = Path(__file__).parent.parent


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mnist_paths():
    return {
        "train_images": str(MNIST / "train-images-idx3-ubyte.gz"),
        "train_labels": str(MNIST / "train-labels-idx1-ubyte.gz"),
        "test_images": str(MNIST / "t10k-images-idx3-ubyte.gz"),
        "test_labels": str(MNIST / "t10k-labels-idx1-ubyte.gz"),
    }


@pytest.fixture
def toy_config_path():
    return ROOT / "configs" / "toy.yaml"
