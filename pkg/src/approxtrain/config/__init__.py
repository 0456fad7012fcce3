"""
Configuration module for approxtrain.
"""

from .defaults import DEFAULT_CONFIG_TOML, get_default_config
from .loader import ConfigError, ConfigLoader, config_hash
from .models import (
    ApproxTrainConfig,
    DataConfig,
    NoiseConfig,
    OptimizerConfig,
    ResamplePolicy,
    SweepConfig,
    TrainConfig,
)

__all__ = [
    "ApproxTrainConfig",
    "TrainConfig",
    "OptimizerConfig",
    "NoiseConfig",
    "DataConfig",
    "SweepConfig",
    "ResamplePolicy",
    "ConfigLoader",
    "ConfigError",
    "config_hash",
    "get_default_config",
    "DEFAULT_CONFIG_TOML",
]
