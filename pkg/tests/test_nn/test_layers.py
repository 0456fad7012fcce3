"""Tests for layer operations and gradient correctness."""
import numpy as np
import pytest

from approxtrain.core.noise import NoiseSpec
from approxtrain.nn.gradcheck import check_gradients, relative_error
from approxtrain.nn.layers import (
    LAYER_OPS,
    LayerKind,
    LayerSpec,
    Mode,
    batchnorm,
    conv,
    dense,
    dropout,
    flatten,
    maxpool,
    relu,
    softmax,
    softmax_cross_entropy,
    softmax_xent,
)
from approxtrain.nn.network import build_network, forward


def small_batch(shape, n=4, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.normal(0.0, 1.0, (n,) + shape).astype(np.float32)
    labels = rng.integers(0, 3, n)
    return images, labels


# Piecewise-linear stacks are probed closer to the point so that no ReLU or
# pooling winner flips inside the difference interval.
KINKED = {"relu", "maxpool"}

GRADCHECK_STACKS = {
    "conv_dense": [conv(2), flatten(), dense(3), softmax_xent()],
    "conv_valid": [conv(2, padding="valid"), flatten(), dense(3), softmax_xent()],
    "relu": [flatten(), dense(5), relu(), dense(3), softmax_xent()],
    "maxpool": [conv(2), maxpool(), flatten(), dense(3), softmax_xent()],
    "batchnorm": [conv(2), batchnorm(), flatten(), dense(3), softmax_xent()],
    "dropout": [flatten(), dense(6), dropout(0.3), dense(3), softmax_xent()],
}


class TestLayerSpec:
    """Test LayerSpec validation."""

    def test_inject_only_on_conv_and_dense(self):
        with pytest.raises(ValueError):
            LayerSpec(LayerKind.RELU, inject=True)
        assert conv(4).inject and dense(4).inject

    @pytest.mark.parametrize("rate", [0.2, 0.6])
    def test_dropout_rate_range(self, rate):
        with pytest.raises(ValueError):
            dropout(rate)

    def test_dict_round_trip(self):
        spec = batchnorm(epsilon=1e-3, momentum=0.99)
        assert LayerSpec.from_dict(spec.to_dict()) == spec

    def test_unknown_padding(self):
        with pytest.raises(ValueError):
            LayerSpec(LayerKind.CONV3X3, units=1, padding="full")


class TestForwardSemantics:
    """Closed-form and invariant checks of individual layers."""

    def test_conv_all_ones_closed_form(self):
        net = build_network([conv(1, inject=False, padding="valid")], (3, 3, 1))
        net.params[0]["W"][...] = 1.0
        x = np.ones((1, 3, 3, 1), dtype=np.float32)

        y, _ = forward(net, x, Mode.EVAL)

        assert y.shape == (1, 1, 1, 1)
        assert y[0, 0, 0, 0] == 9.0

    def test_conv_same_padding_keeps_size(self):
        net = build_network([conv(5)], (6, 7, 2))
        y, _ = forward(net, np.zeros((2, 6, 7, 2), np.float32), Mode.EVAL)
        assert y.shape == (2, 6, 7, 5)

    def test_zero_input_through_relu(self):
        net = build_network([relu(), relu()], (4, 4, 2))
        y, _ = forward(net, np.zeros((3, 4, 4, 2), np.float32), Mode.TRAIN)
        assert np.all(y == 0.0)

    def test_maxpool_drops_odd_edge(self):
        x = np.arange(25, dtype=np.float32).reshape(1, 5, 5, 1)
        y, _ = LAYER_OPS[LayerKind.MAXPOOL2X2].forward(maxpool(), {}, {}, x, Mode.EVAL, None)
        assert y[0, :, :, 0].tolist() == [[6.0, 8.0], [16.0, 18.0]]

    def test_softmax_sums_to_one(self):
        logits = np.random.default_rng(0).normal(0, 5, (16, 10)).astype(np.float32)
        probs = softmax(logits)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_cross_entropy_of_uniform_logits(self):
        loss, grad = softmax_cross_entropy(np.zeros((2, 10), np.float32), np.array([0, 3]))
        assert loss == pytest.approx(np.log(10.0), rel=1e-6)
        assert np.allclose(grad.sum(axis=1), 0.0, atol=1e-7)

    def test_batchnorm_train_normalizes(self):
        spec = batchnorm()
        op = LAYER_OPS[LayerKind.BATCHNORM]
        x = np.random.default_rng(1).normal(3.0, 2.0, (16, 4, 4, 3)).astype(np.float32)
        params = op.init_params(spec, (4, 4, 3), None)
        buffers = op.init_buffers(spec, (4, 4, 3))

        y, _ = op.forward(spec, params, buffers, x, Mode.TRAIN, None)

        assert np.all(np.abs(y.mean(axis=(0, 1, 2))) < 1e-5)
        assert np.allclose(y.var(axis=(0, 1, 2)), 1.0, atol=1e-3)
        # running statistics moved towards the batch statistics
        assert np.all(buffers["running_mean"] > 0.0)

    def test_batchnorm_eval_uses_running_stats(self):
        spec = batchnorm()
        op = LAYER_OPS[LayerKind.BATCHNORM]
        params = op.init_params(spec, (3,), None)
        buffers = {
            "running_mean": np.array([1.0, 2.0, 3.0], np.float32),
            "running_var": np.array([4.0, 4.0, 4.0], np.float32),
        }
        x = np.array([[3.0, 2.0, 1.0]], np.float32)

        y, _ = op.forward(spec, params, buffers, x, Mode.EVAL, None)

        expected = (x - buffers["running_mean"]) / np.sqrt(4.0 + 1e-3)
        assert np.allclose(y, expected, atol=1e-6)

    def test_dropout_eval_identity(self):
        x = np.random.default_rng(0).normal(size=(4, 10)).astype(np.float32)
        y, _ = LAYER_OPS[LayerKind.DROPOUT].forward(dropout(0.5), {}, {}, x, Mode.EVAL, None)
        assert y is x

    def test_dropout_train_scales_kept_units(self):
        x = np.ones((200, 50), np.float32)
        rng = np.random.default_rng(3)
        y, _ = LAYER_OPS[LayerKind.DROPOUT].forward(dropout(0.4), {}, {}, x, Mode.TRAIN, rng)

        kept = y[y != 0.0]
        assert np.allclose(kept, 1.0 / 0.6)
        assert abs((y == 0.0).mean() - 0.4) < 0.02

    def test_dropout_train_needs_generator(self):
        with pytest.raises(ValueError):
            LAYER_OPS[LayerKind.DROPOUT].forward(
                dropout(0.3), {}, {}, np.ones((1, 2), np.float32), Mode.TRAIN, None
            )


class TestGradients:
    """Finite-difference checks of every layer type."""

    @pytest.mark.parametrize("name", sorted(GRADCHECK_STACKS))
    def test_gradcheck_exact(self, name):
        net = build_network(GRADCHECK_STACKS[name], (4, 4, 2), seed=5)
        images, labels = small_batch((4, 4, 2))
        epsilon = 1e-4 if name in KINKED else 1e-3

        result = check_gradients(net, images, labels, epsilon=epsilon)

        assert result.errors
        assert result.passed(1e-3), result.errors

    @pytest.mark.parametrize("name", sorted(GRADCHECK_STACKS))
    def test_gradcheck_with_error_matrices(self, name):
        net = build_network(GRADCHECK_STACKS[name], (4, 4, 2), seed=6)
        net.set_error_matrices(NoiseSpec(sd_target=0.12, seed=2))
        images, labels = small_batch((4, 4, 2), seed=1)
        epsilon = 1e-4 if name in KINKED else 1e-3

        result = check_gradients(net, images, labels, epsilon=epsilon)

        assert result.passed(1e-3), result.errors

    def test_relative_error(self):
        a = np.array([1.0, 2.0])
        assert relative_error(a, a) == 0.0
        assert relative_error(np.zeros(2), np.zeros(2)) == 0.0
        assert relative_error(a, -a) == 1.0

    def test_relative_error_of_vanishing_gradients(self):
        analytic = np.array([-1.46e-16, -3.47e-18])
        numeric = np.array([2.2e-13, -1.1e-13])
        assert relative_error(analytic, numeric) < 1e-4
        assert relative_error(np.array([1e-6]), np.array([-1e-6])) == pytest.approx(1.0)
