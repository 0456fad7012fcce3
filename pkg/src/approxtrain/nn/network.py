"""
Networks: layer stacks with master parameters and per-layer error injection.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from ..core.noise import (
    ErrorMatrix,
    NoiseSpec,
    ShapeMismatchError,
    apply_error,
    generate_error_matrix,
)
from ..errors import ApproxTrainError
from .layers import (
    DTYPE,
    LAYER_OPS,
    LayerKind,
    LayerSpec,
    Mode,
    Params,
    Shape,
    batchnorm,
    conv,
    dense,
    dropout,
    flatten,
    maxpool,
    relu,
    softmax_cross_entropy,
    softmax_xent,
)

logger = logging.getLogger(__name__)

Arch = Literal["desk_cnn", "vgg_cifar"]

INIT_STREAM = 0x494E4954


class NonFiniteError(ApproxTrainError):
    """Raised when an activation or loss becomes NaN or infinite."""

    def __init__(self, where: str):
        self.where = where
        super().__init__(f"non-finite values in {where}")


@dataclass
class Network:
    """Layer stack with unperturbed master parameters.

    ``error_matrices`` maps the index of an injected layer to the matrix
    applied to its weights in Train mode.
    """

    layers: List[LayerSpec]
    input_shape: Shape
    params: List[Params]
    buffers: List[Params]
    error_matrices: Dict[int, ErrorMatrix] = field(default_factory=dict)

    @property
    def injected_layers(self) -> List[int]:
        return [i for i, spec in enumerate(self.layers) if spec.inject]

    @property
    def output_dim(self) -> int:
        shape = self.input_shape
        for spec in self._body():
            shape = LAYER_OPS[spec.kind].output_shape(spec, shape)
        return int(np.prod(shape))

    def _body(self) -> List[LayerSpec]:
        if self.layers and self.layers[-1].kind is LayerKind.SOFTMAX_XENT:
            return self.layers[:-1]
        return self.layers

    def set_error_matrices(
        self, spec: Optional[NoiseSpec], generation: int = 0
    ) -> None:
        """Bind one error matrix per injected layer, or clear them.

        Matrices already at the requested generation are kept.
        """
        if spec is None:
            self.error_matrices = {}
            return
        for index in self.injected_layers:
            current = self.error_matrices.get(index)
            if current is not None and current.generation == generation:
                continue
            shape = self.params[index]["W"].shape
            self.error_matrices[index] = generate_error_matrix(
                shape, spec, layer_id=index, generation=generation
            )

    def astype(self, dtype) -> "Network":
        """Copy of the network with parameters cast to ``dtype``."""
        return Network(
            layers=list(self.layers),
            input_shape=self.input_shape,
            params=[{k: v.astype(dtype) for k, v in p.items()} for p in self.params],
            buffers=[{k: v.astype(dtype) for k, v in b.items()} for b in self.buffers],
            error_matrices=dict(self.error_matrices),
        )

    def parameter_count(self) -> int:
        return sum(int(v.size) for p in self.params for v in p.values())


@dataclass
class ForwardCache:
    """What backward needs from a Train-mode forward pass."""

    logits: np.ndarray
    layer_caches: List[Any]
    matrices: Dict[int, ErrorMatrix]


@dataclass
class BackwardResult:
    loss: float
    grads: List[Params]


def _effective_params(
    net: Network, index: int, mode: Mode
) -> Tuple[Params, Optional[ErrorMatrix]]:
    params = net.params[index]
    matrix = net.error_matrices.get(index) if mode is Mode.TRAIN else None
    if matrix is None:
        return params, None
    return {**params, "W": apply_error(params["W"], matrix)}, matrix


def forward(
    net: Network,
    batch: np.ndarray,
    mode: Mode,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, ForwardCache]:
    """Run the network up to the logits.

    In Train mode every injected layer computes with W * E; Eval mode always
    uses the master weights.

    Raises:
        ShapeMismatchError: If the batch shape does not match the input shape
        NonFiniteError: If any layer produces NaN or infinity
    """
    if tuple(batch.shape[1:]) != tuple(net.input_shape):
        raise ShapeMismatchError(
            f"batch shape {batch.shape[1:]} does not match input {net.input_shape}"
        )
    x = batch
    caches: List[Any] = []
    used: Dict[int, ErrorMatrix] = {}
    for index, spec in enumerate(net._body()):
        params, matrix = _effective_params(net, index, mode)
        if matrix is not None:
            used[index] = matrix
        x, cache = LAYER_OPS[spec.kind].forward(
            spec, params, net.buffers[index], x, mode, rng
        )
        if not np.isfinite(x).all():
            raise NonFiniteError(f"output of layer {index} ({spec.kind.value})")
        caches.append(cache)
    return x, ForwardCache(logits=x, layer_caches=caches, matrices=used)


def backward(
    net: Network, cache: Optional[ForwardCache], labels: np.ndarray
) -> BackwardResult:
    """Loss and gradients w.r.t. the master parameters.

    For injected layers the weight gradient is taken through W_eff = W * E,
    so dL/dW = dL/dW_eff * E with the same matrix used in forward.
    """
    if cache is None:
        raise ValueError("backward requires the cache of a Train-mode forward pass")
    loss, dy = softmax_cross_entropy(cache.logits, labels)
    if not np.isfinite(loss):
        raise NonFiniteError("loss")
    body = net._body()
    grads: List[Params] = [{} for _ in net.layers]
    for index in range(len(body) - 1, -1, -1):
        spec = body[index]
        # conv/dense caches already hold the effective weights
        dy, layer_grads = LAYER_OPS[spec.kind].backward(
            spec, net.params[index], cache.layer_caches[index], dy
        )
        matrix = cache.matrices.get(index)
        if matrix is not None:
            layer_grads["W"] = layer_grads["W"] * matrix.entries.astype(
                layer_grads["W"].dtype, copy=False
            )
        grads[index] = layer_grads
    return BackwardResult(loss=loss, grads=grads)


def predict(net: Network, batch: np.ndarray) -> np.ndarray:
    """Eval-mode class predictions."""
    logits, _ = forward(net, batch, Mode.EVAL)
    return logits.argmax(axis=1)


def vgg_cifar_layers(num_classes: int = 10) -> List[LayerSpec]:
    """13 conv + 2 dense VGG variant for 32x32 inputs."""
    layers: List[LayerSpec] = []

    def block(filters: int, drop: Optional[float]) -> None:
        layers.extend([conv(filters), relu(), batchnorm()])
        if drop is not None:
            layers.append(dropout(drop))

    plan = [
        [(64, 0.3), (64, None)],
        [(128, 0.4), (128, None)],
        [(256, 0.4), (256, 0.4), (256, None)],
        [(512, 0.4), (512, 0.4), (512, None)],
        [(512, 0.4), (512, 0.4), (512, None)],
    ]
    for stage in plan:
        for filters, drop in stage:
            block(filters, drop)
        layers.append(maxpool())
    layers.extend(
        [
            dropout(0.5),
            flatten(),
            dense(512),
            relu(),
            batchnorm(),
            dropout(0.5),
            dense(num_classes),
            softmax_xent(),
        ]
    )
    return layers


def desk_cnn_layers(num_classes: int = 10) -> List[LayerSpec]:
    """4 conv + 1 dense miniature with the same layer vocabulary."""
    return [
        conv(16), relu(), batchnorm(),
        conv(16), relu(), batchnorm(),
        maxpool(), dropout(0.3),
        conv(32), relu(), batchnorm(),
        conv(32), relu(), batchnorm(),
        maxpool(), dropout(0.4),
        flatten(),
        dense(num_classes),
        softmax_xent(),
    ]  # fmt: skip


def build_network(
    layers: Sequence[LayerSpec], input_shape: Shape, seed: int = 0
) -> Network:
    """Initialize parameters for a layer stack (He fan-in init)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, INIT_STREAM])))
    params: List[Params] = []
    buffers: List[Params] = []
    shape = tuple(input_shape)
    for spec in layers:
        op = LAYER_OPS[spec.kind]
        params.append(op.init_params(spec, shape, rng))
        buffers.append(op.init_buffers(spec, shape))
        shape = op.output_shape(spec, shape)
    return Network(
        layers=list(layers), input_shape=tuple(input_shape), params=params, buffers=buffers
    )


def build_model(
    arch: Arch,
    input_shape: Shape = (32, 32, 3),
    num_classes: int = 10,
    seed: int = 0,
) -> Network:
    """Build and initialize one of the supported architectures.

    Raises:
        ValueError: For unknown architectures or inputs too small to pool
    """
    if arch == "vgg_cifar":
        layers = vgg_cifar_layers(num_classes)
    elif arch == "desk_cnn":
        layers = desk_cnn_layers(num_classes)
    else:
        raise ValueError(f"unknown architecture: {arch}")
    net = build_network(layers, input_shape, seed)
    logger.debug(
        "Built %s: %d layers, %d injected, %d parameters",
        arch,
        len(net.layers),
        len(net.injected_layers),
        net.parameter_count(),
    )
    return net
