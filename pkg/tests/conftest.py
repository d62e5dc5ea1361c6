import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("default")

REPO = Path(__file__).resolve().parents[1]


def mnist_dir() -> Path:
    return Path(os.environ.get("WEAKRESET_DATA_DIR", REPO / "data" / "mnist"))


def have_mnist() -> bool:
    return (mnist_dir() / "train-images-idx3-ubyte").exists() or (mnist_dir() / "train-images-idx3-ubyte.gz").exists()


@pytest.fixture(scope="session")
def mnist():
    if not have_mnist():
        pytest.skip(f"MNIST not found in {mnist_dir()} (set WEAKRESET_DATA_DIR)")
    from weakreset.trainer import load_mnist_dir

    return load_mnist_dir(mnist_dir())
