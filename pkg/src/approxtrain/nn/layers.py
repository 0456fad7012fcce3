"""
Layer specifications and their forward/backward operations.

Activations are NHWC numpy arrays. Layer operations are stateless: parameters
and batch-norm running statistics are passed in, and forward returns a cache
object that backward consumes.
"""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

Shape = Tuple[int, ...]
Params = Dict[str, np.ndarray]

DTYPE = np.float32
DROPOUT_RANGE = (0.3, 0.5)


class Mode(str, Enum):
    """Forward pass mode."""

    TRAIN = "train"
    EVAL = "eval"


class LayerKind(str, Enum):
    """Layer vocabulary."""

    CONV3X3 = "conv3x3"
    DENSE = "dense"
    RELU = "relu"
    MAXPOOL2X2 = "maxpool2x2"
    BATCHNORM = "batchnorm"
    DROPOUT = "dropout"
    SOFTMAX_XENT = "softmax_xent"
    FLATTEN = "flatten"


INJECTABLE = frozenset({LayerKind.CONV3X3, LayerKind.DENSE})


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a network."""

    kind: LayerKind
    units: int = 0
    rate: float = 0.0
    epsilon: float = 1e-3
    momentum: float = 0.99
    padding: str = "same"
    inject: bool = False

    def __post_init__(self):
        if self.inject and self.kind not in INJECTABLE:
            raise ValueError(f"{self.kind.value} layers cannot carry error injection")
        if self.kind in INJECTABLE and self.units < 1:
            raise ValueError(f"{self.kind.value} requires units >= 1")
        if self.kind is LayerKind.DROPOUT and not (
            DROPOUT_RANGE[0] <= self.rate <= DROPOUT_RANGE[1]
        ):
            raise ValueError(f"dropout rate must be in {DROPOUT_RANGE}, got {self.rate}")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"unknown padding: {self.padding}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["kind"] = self.kind.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LayerSpec":
        return cls(**{**data, "kind": LayerKind(data["kind"])})


def conv(filters: int, inject: bool = True, padding: str = "same") -> LayerSpec:
    return LayerSpec(LayerKind.CONV3X3, units=filters, inject=inject, padding=padding)


def dense(units: int, inject: bool = True) -> LayerSpec:
    return LayerSpec(LayerKind.DENSE, units=units, inject=inject)


def relu() -> LayerSpec:
    return LayerSpec(LayerKind.RELU)


def maxpool() -> LayerSpec:
    return LayerSpec(LayerKind.MAXPOOL2X2)


def batchnorm(epsilon: float = 1e-3, momentum: float = 0.99) -> LayerSpec:
    return LayerSpec(LayerKind.BATCHNORM, epsilon=epsilon, momentum=momentum)


def dropout(rate: float) -> LayerSpec:
    return LayerSpec(LayerKind.DROPOUT, rate=rate)


def flatten() -> LayerSpec:
    return LayerSpec(LayerKind.FLATTEN)


def softmax_xent() -> LayerSpec:
    return LayerSpec(LayerKind.SOFTMAX_XENT)


class LayerOp:
    """Forward/backward rules for one layer kind."""

    # Parameters subject to L2 weight decay
    decayed: frozenset = frozenset()

    def output_shape(self, spec: LayerSpec, in_shape: Shape) -> Shape:
        return in_shape

    def init_params(
        self, spec: LayerSpec, in_shape: Shape, rng: np.random.Generator
    ) -> Params:
        return {}

    def init_buffers(self, spec: LayerSpec, in_shape: Shape) -> Params:
        return {}

    def forward(
        self,
        spec: LayerSpec,
        params: Params,
        buffers: Params,
        x: np.ndarray,
        mode: Mode,
        rng: Optional[np.random.Generator],
    ) -> Tuple[np.ndarray, Any]:
        raise NotImplementedError

    def backward(
        self, spec: LayerSpec, params: Params, cache: Any, dy: np.ndarray
    ) -> Tuple[np.ndarray, Params]:
        raise NotImplementedError


class Conv3x3Op(LayerOp):
    """3x3 stride-1 convolution via im2col. Weights are (3, 3, C_in, C_out)."""

    decayed = frozenset({"W"})

    def output_shape(self, spec, in_shape):
        h, w, _ = in_shape
        if spec.padding == "valid":
            h, w = h - 2, w - 2
        if h < 1 or w < 1:
            raise ValueError(f"conv input {in_shape} too small")
        return (h, w, spec.units)

    def init_params(self, spec, in_shape, rng):
        fan_in = 9 * in_shape[-1]
        weights = rng.normal(0.0, np.sqrt(2.0 / fan_in), (3, 3, in_shape[-1], spec.units))
        return {"W": weights.astype(DTYPE), "b": np.zeros(spec.units, dtype=DTYPE)}

    def forward(self, spec, params, buffers, x, mode, rng):
        weights = params["W"]
        if spec.padding == "same":
            x_pad = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        else:
            x_pad = x
        n, hp, wp, c = x_pad.shape
        h_out, w_out = hp - 2, wp - 2
        windows = sliding_window_view(x_pad, (3, 3), axis=(1, 2))
        cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * h_out * w_out, 9 * c)
        w_mat = weights.reshape(9 * c, spec.units)
        y = cols @ w_mat + params["b"]
        return y.reshape(n, h_out, w_out, spec.units), (cols, x.shape, weights)

    def backward(self, spec, params, cache, dy):
        cols, in_shape, weights = cache
        n, h, w, c = in_shape
        h_out, w_out = dy.shape[1], dy.shape[2]
        dy_mat = dy.reshape(-1, spec.units)
        grads = {
            "W": (cols.T @ dy_mat).reshape(weights.shape),
            "b": dy_mat.sum(axis=0),
        }
        dcols = (dy_mat @ weights.reshape(9 * c, spec.units).T).reshape(
            n, h_out, w_out, 3, 3, c
        )
        dx_pad = np.zeros((n, h_out + 2, w_out + 2, c), dtype=dy.dtype)
        for i in range(3):
            for j in range(3):
                dx_pad[:, i : i + h_out, j : j + w_out, :] += dcols[:, :, :, i, j, :]
        if spec.padding == "same":
            dx = dx_pad[:, 1:-1, 1:-1, :]
        else:
            dx = dx_pad
        return dx, grads


class DenseOp(LayerOp):
    """Fully connected layer. Weights are (D_in, units)."""

    decayed = frozenset({"W"})

    def output_shape(self, spec, in_shape):
        if len(in_shape) != 1:
            raise ValueError(f"dense layer expects flat input, got {in_shape}")
        return (spec.units,)

    def init_params(self, spec, in_shape, rng):
        fan_in = in_shape[0]
        weights = rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, spec.units))
        return {"W": weights.astype(DTYPE), "b": np.zeros(spec.units, dtype=DTYPE)}

    def forward(self, spec, params, buffers, x, mode, rng):
        return x @ params["W"] + params["b"], (x, params["W"])

    def backward(self, spec, params, cache, dy):
        x, weights = cache
        return dy @ weights.T, {"W": x.T @ dy, "b": dy.sum(axis=0)}


class ReluOp(LayerOp):
    def forward(self, spec, params, buffers, x, mode, rng):
        mask = x > 0
        return x * mask, mask

    def backward(self, spec, params, cache, dy):
        return dy * cache, {}


class MaxPool2x2Op(LayerOp):
    """2x2 stride-2 max pooling; odd trailing rows/columns are dropped."""

    def output_shape(self, spec, in_shape):
        h, w, c = in_shape
        if h < 2 or w < 2:
            raise ValueError(f"pooling input {in_shape} too small")
        return (h // 2, w // 2, c)

    def forward(self, spec, params, buffers, x, mode, rng):
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        blocks = x[:, : h2 * 2, : w2 * 2, :].reshape(n, h2, 2, w2, 2, c)
        flat = blocks.transpose(0, 1, 3, 2, 4, 5).reshape(n, h2, w2, 4, c)
        # argmax breaks ties towards the first element deterministically
        winner = flat.argmax(axis=3)
        y = np.take_along_axis(flat, winner[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        return y, (winner, x.shape)

    def backward(self, spec, params, cache, dy):
        winner, in_shape = cache
        n, h, w, c = in_shape
        h2, w2 = h // 2, w // 2
        flat = np.zeros((n, h2, w2, 4, c), dtype=dy.dtype)
        np.put_along_axis(flat, winner[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
        blocks = flat.reshape(n, h2, w2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
        dx = np.zeros(in_shape, dtype=dy.dtype)
        dx[:, : h2 * 2, : w2 * 2, :] = blocks.reshape(n, h2 * 2, w2 * 2, c)
        return dx, {}


class BatchNormOp(LayerOp):
    """Batch normalization over every axis but the last."""

    def init_params(self, spec, in_shape, rng):
        channels = in_shape[-1]
        return {
            "gamma": np.ones(channels, dtype=DTYPE),
            "beta": np.zeros(channels, dtype=DTYPE),
        }

    def init_buffers(self, spec, in_shape):
        channels = in_shape[-1]
        return {
            "running_mean": np.zeros(channels, dtype=DTYPE),
            "running_var": np.ones(channels, dtype=DTYPE),
        }

    def forward(self, spec, params, buffers, x, mode, rng):
        axes = tuple(range(x.ndim - 1))
        if mode is Mode.TRAIN:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = spec.momentum
            buffers["running_mean"] = (
                m * buffers["running_mean"] + (1 - m) * mean
            ).astype(buffers["running_mean"].dtype)
            buffers["running_var"] = (
                m * buffers["running_var"] + (1 - m) * var
            ).astype(buffers["running_var"].dtype)
        else:
            mean = buffers["running_mean"].astype(x.dtype)
            var = buffers["running_var"].astype(x.dtype)
        inv_std = 1.0 / np.sqrt(var + np.asarray(spec.epsilon, dtype=x.dtype))
        x_hat = (x - mean) * inv_std
        y = params["gamma"] * x_hat + params["beta"]
        return y, (x_hat, inv_std)

    def backward(self, spec, params, cache, dy):
        x_hat, inv_std = cache
        axes = tuple(range(dy.ndim - 1))
        count = dy.size // dy.shape[-1]
        dgamma = (dy * x_hat).sum(axis=axes)
        dbeta = dy.sum(axis=axes)
        dx_hat = dy * params["gamma"]
        dx = (inv_std / count) * (
            count * dx_hat
            - dx_hat.sum(axis=axes)
            - x_hat * (dx_hat * x_hat).sum(axis=axes)
        )
        return dx.astype(dy.dtype, copy=False), {"gamma": dgamma, "beta": dbeta}


class DropoutOp(LayerOp):
    """Inverted dropout: kept units are scaled by 1/(1 - rate) in training."""

    def forward(self, spec, params, buffers, x, mode, rng):
        if mode is Mode.EVAL:
            return x, None
        if rng is None:
            raise ValueError("dropout in train mode requires a random generator")
        keep = rng.random(x.shape) >= spec.rate
        scale = np.asarray(1.0 / (1.0 - spec.rate), dtype=x.dtype)
        mask = keep.astype(x.dtype) * scale
        return x * mask, mask

    def backward(self, spec, params, cache, dy):
        if cache is None:
            return dy, {}
        return dy * cache, {}


class FlattenOp(LayerOp):
    def output_shape(self, spec, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, spec, params, buffers, x, mode, rng):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, spec, params, cache, dy):
        return dy.reshape(cache), {}


class SoftmaxXEntOp(LayerOp):
    """Terminal softmax; the loss itself is softmax_cross_entropy."""

    def forward(self, spec, params, buffers, x, mode, rng):
        return softmax(x), None

    def backward(self, spec, params, cache, dy):
        raise RuntimeError("softmax_xent is terminal; use softmax_cross_entropy")


LAYER_OPS: Dict[LayerKind, LayerOp] = {
    LayerKind.CONV3X3: Conv3x3Op(),
    LayerKind.DENSE: DenseOp(),
    LayerKind.RELU: ReluOp(),
    LayerKind.MAXPOOL2X2: MaxPool2x2Op(),
    LayerKind.BATCHNORM: BatchNormOp(),
    LayerKind.DROPOUT: DropoutOp(),
    LayerKind.FLATTEN: FlattenOp(),
    LayerKind.SOFTMAX_XENT: SoftmaxXEntOp(),
}


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> Tuple[float, np.ndarray]:
    """Mean categorical cross-entropy and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = float(-log_probs[rows, labels].mean())
    dlogits = np.exp(log_probs)
    dlogits[rows, labels] -= 1.0
    return loss, (dlogits / n).astype(logits.dtype, copy=False)
