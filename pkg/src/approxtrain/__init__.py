"""
approxtrain - CNN training with simulated approximate multipliers

Trains convolutional networks while injecting statistically calibrated
multiplication error into every convolutional and dense layer, and searches
for the epoch at which training should switch back to exact arithmetic.
"""

try:
    from importlib.metadata import version

    __version__ = version("approxtrain")
except Exception:
    # Fallback for development/editable installs
    __version__ = "0.1.0"

from .errors import ApproxTrainError

__all__ = ["ApproxTrainError", "__version__"]
