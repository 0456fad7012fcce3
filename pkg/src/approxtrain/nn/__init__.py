"""
Numpy layers, network assembly and the SGD optimizer.
"""

from .layers import LayerKind, LayerSpec, Mode
from .network import Network, backward, build_model, forward, predict
from .optim import OptimizerState, sgd_step

__all__ = [
    "LayerKind",
    "LayerSpec",
    "Mode",
    "Network",
    "build_model",
    "forward",
    "backward",
    "predict",
    "OptimizerState",
    "sgd_step",
]
