"""
Core functionality for approxtrain.

Only dependency-free building blocks are re-exported here; the training,
checkpoint and sweep modules are imported from their own submodules.
"""

from .multipliers import ErrorProfile, MultiplierKind, MultiplierModel, calibrate
from .noise import ErrorMatrix, NoiseSpec, apply_error, generate_error_matrix

__all__ = [
    "MultiplierKind",
    "MultiplierModel",
    "ErrorProfile",
    "calibrate",
    "NoiseSpec",
    "ErrorMatrix",
    "generate_error_matrix",
    "apply_error",
]
