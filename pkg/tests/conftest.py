"""Pytest configuration and fixtures."""
import sys
from pathlib import Path

import pytest

# Add src directory to Python path for testing
src_path = Path(__file__).parent.parent / "src"
if str(src_path) not in sys.path:
    sys.path.insert(0, str(src_path))

from approxtrain.config import ConfigLoader  # noqa: E402
from approxtrain.core.data import prepare_data  # noqa: E402

TINY_TRAIN = {
    "seed": 3,
    "epochs": 3,
    "batch_size": 20,
    "eval_batch_size": 50,
    "optimizer": {"lr": 0.05},
    "data": {
        "dataset": "synthetic",
        "synthetic_train": 60,
        "synthetic_test": 30,
        "synthetic_size": 8,
    },
}


@pytest.fixture
def tiny_config():
    """Exact desk_cnn run small enough to train in well under a second."""
    return ConfigLoader.from_dict({"train": TINY_TRAIN})


@pytest.fixture
def noisy_config():
    """Same run with SD 4.5% error injection."""
    return ConfigLoader.from_dict(
        {"train": {**TINY_TRAIN, "noise": {"enabled": True, "sd_target": 0.045}}}
    )


@pytest.fixture
def tiny_data(tiny_config):
    return prepare_data(tiny_config.train.data, tiny_config.train.seed)


@pytest.fixture
def tiny_config_file(tmp_path):
    """The tiny exact run as a TOML file."""
    path = tmp_path / "tiny.toml"
    ConfigLoader.save(ConfigLoader.from_dict({"train": TINY_TRAIN}), path)
    return path


@pytest.fixture
def noisy_config_file(tmp_path, noisy_config):
    path = tmp_path / "noisy.toml"
    ConfigLoader.save(noisy_config, path)
    return path
