"""
Momentum SGD with learning-rate decay and L2 weight decay.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..config.models import OptimizerConfig
from .layers import LAYER_OPS, LayerSpec, Params


@dataclass
class OptimizerState:
    """Momentum buffers (one dict per layer) and the global step counter."""

    velocities: List[Params] = field(default_factory=list)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[Params]) -> "OptimizerState":
        return cls(velocities=[{k: np.zeros_like(v) for k, v in p.items()} for p in params])


def learning_rate(cfg: OptimizerConfig, epoch: int, step: int) -> float:
    """Learning rate at a 1-based epoch and 0-based global step.

    ``lr * drop_factor ** ((epoch - 1) // drop_every) / (1 + decay * step)``
    """
    lr = cfg.lr
    if cfg.drop_every > 0:
        lr *= cfg.drop_factor ** ((epoch - 1) // cfg.drop_every)
    return lr / (1.0 + cfg.decay * step)


def sgd_step(
    layers: Sequence[LayerSpec],
    params: List[Params],
    grads: Sequence[Params],
    state: OptimizerState,
    epoch: int,
    cfg: Optional[OptimizerConfig] = None,
) -> List[Params]:
    """Apply one SGD update in place and return the parameters.

    Weight decay applies to conv/dense weights only, never to biases or
    batch-norm scale/shift.
    """
    cfg = cfg or OptimizerConfig()
    if not state.velocities:
        state.velocities = OptimizerState.zeros_like(params).velocities
    lr = learning_rate(cfg, epoch, state.step)
    for spec, layer_params, layer_grads, velocity in zip(
        layers, params, grads, state.velocities
    ):
        decayed = LAYER_OPS[spec.kind].decayed
        for name, value in layer_params.items():
            grad = layer_grads.get(name)
            if grad is None:
                continue
            if grad.shape != value.shape:
                raise ValueError(
                    f"gradient {grad.shape} does not match parameter {name} {value.shape}"
                )
            if name in decayed and cfg.weight_decay:
                grad = grad + cfg.weight_decay * value
            buf = velocity[name]
            buf *= cfg.momentum
            buf += grad
            update = grad + cfg.momentum * buf if cfg.nesterov else buf
            value -= (lr * update).astype(value.dtype, copy=False)
    state.step += 1
    return params
