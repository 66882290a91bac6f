"""Tests for the differentiable ops and the finite-difference checker."""

import logging

import numpy as np
import pytest

from vesselseg.errors import ContractViolation
from vesselseg.modules.nn import (
    BatchNormStats,
    DifferentiableOp,
    Mode,
    OpTape,
    add_residual,
    add_residual_backward,
    batchnorm2d,
    batchnorm2d_backward,
    check_all_ops,
    conv2d,
    conv2d_backward,
    finite_diff_check,
    relu,
    relu_backward,
    sigmoid,
    sigmoid_backward,
    upsample2x,
    upsample2x_backward,
)
from vesselseg.modules.nn.gradcheck import ADD_RESIDUAL, CONV, RELU, random_cases


def naive_conv(x, w, b, stride, padding):
    """Nested-loop cross-correlation."""
    n, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for i in range(n):
        for o in range(cout):
            for r in range(ho):
                for c in range(wo):
                    window = xp[i, :, r * stride : r * stride + k, c * stride : c * stride + k]
                    out[i, o, r, c] = np.sum(window * w[o]) + b[o]
    return out


class TestConv2d:
    """Test conv2d forward and backward."""

    def test_two_by_two_example(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        w = np.array([[[[1.0, 0.0], [0.0, 1.0]]]])
        out, _ = conv2d(x, w, np.zeros(1))
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == 5.0

    def test_identity_kernel(self, rng):
        x = rng.standard_normal((2, 1, 7, 5))
        out, _ = conv2d(x, np.ones((1, 1, 1, 1)), np.zeros(1))
        np.testing.assert_array_equal(out, x)

    def test_strided_shape(self):
        x = np.zeros((1, 1, 224, 224), dtype=np.float32)
        out, _ = conv2d(x, np.zeros((2, 1, 3, 3), dtype=np.float32), np.zeros(2, dtype=np.float32), stride=2, padding=1)
        assert out.shape == (1, 2, 112, 112)

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
    def test_matches_nested_loops(self, rng, stride, padding):
        x = rng.standard_normal((2, 3, 6, 7))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        out, _ = conv2d(x, w, b, stride=stride, padding=padding)
        np.testing.assert_allclose(out, naive_conv(x, w, b, stride, padding), atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(ContractViolation, match="channels"):
            conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1))

    def test_backward_zero_grad(self, rng):
        x = rng.standard_normal((1, 2, 5, 5))
        out, ctx = conv2d(x, rng.standard_normal((3, 2, 3, 3)), np.zeros(3), padding=1)
        gi, gw, gb = conv2d_backward(ctx, np.zeros_like(out))
        assert not gi.any() and not gw.any() and not gb.any()
        assert gi.shape == x.shape

    def test_backward_without_ctx(self):
        with pytest.raises(ContractViolation):
            conv2d_backward(None, np.zeros((1, 1, 1, 1)))

    def test_keeps_float32(self, rng):
        x = rng.standard_normal((1, 1, 4, 4)).astype(np.float32)
        out, _ = conv2d(x, np.ones((1, 1, 3, 3), np.float32), np.zeros(1, np.float32), padding=1)
        assert out.dtype == np.float32

    @pytest.mark.parametrize("k", [1, 3, 5])
    @pytest.mark.parametrize("h,w", [(1, 1), (1, 4), (3, 2), (7, 5)])
    def test_same_padding_keeps_spatial_size(self, rng, k, h, w):
        x = rng.standard_normal((2, 3, h, w))
        out, ctx = conv2d(x, rng.standard_normal((4, 3, k, k)), np.zeros(4), padding=(k - 1) // 2)
        assert out.shape == (2, 4, h, w)
        gi, _, _ = conv2d_backward(ctx, np.ones_like(out))
        assert gi.shape == x.shape


class TestBatchNorm:
    """Test batchnorm2d in both modes."""

    def test_constant_channel_is_zero(self):
        x = np.full((2, 1, 3, 3), 7.0)
        stats = BatchNormStats.initial(1, np.float64)
        y, _ = batchnorm2d(x, np.ones(1), np.zeros(1), stats, Mode.TRAIN)
        np.testing.assert_allclose(y, 0.0, atol=1e-12)

    def test_beta_shift(self, rng):
        x = rng.standard_normal((4, 2, 5, 5))
        stats = BatchNormStats.initial(2, np.float64)
        y, _ = batchnorm2d(x, np.ones(2), np.full(2, 5.0), stats, Mode.TRAIN)
        np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 5.0, atol=1e-5)

    def test_train_updates_running_stats(self, rng):
        x = rng.standard_normal((4, 2, 5, 5)) + 3.0
        stats = BatchNormStats.initial(2, np.float64)
        batchnorm2d(x, np.ones(2), np.zeros(2), stats, Mode.TRAIN)
        assert stats.num_batches_tracked == 1
        np.testing.assert_allclose(stats.mean, 0.1 * x.mean(axis=(0, 2, 3)))
        np.testing.assert_allclose(stats.var, 0.9 + 0.1 * x.var(axis=(0, 2, 3)))

    def test_infer_is_pure(self, rng):
        x = rng.standard_normal((2, 2, 4, 4))
        stats = BatchNormStats(np.array([1.0, -1.0]), np.array([4.0, 0.25]), num_batches_tracked=3)
        y1, _ = batchnorm2d(x, np.ones(2), np.zeros(2), stats, Mode.INFER)
        y2, _ = batchnorm2d(x, np.ones(2), np.zeros(2), stats, Mode.INFER)
        np.testing.assert_array_equal(y1, y2)
        assert stats.num_batches_tracked == 3

    def test_infer_without_stats_warns_once(self, caplog):
        stats = BatchNormStats.initial(1, np.float64)
        x = np.ones((1, 1, 2, 2))
        with caplog.at_level(logging.WARNING, logger="vesselseg.nn"):
            y, _ = batchnorm2d(x, np.ones(1), np.zeros(1), stats, Mode.INFER)
            batchnorm2d(x, np.ones(1), np.zeros(1), stats, Mode.INFER)
        assert sum("no recorded statistics" in r.message for r in caplog.records) == 1
        np.testing.assert_allclose(y, 1.0 / np.sqrt(1.0 + 1e-5))

    def test_train_needs_two_values(self):
        with pytest.raises(ContractViolation):
            batchnorm2d(np.ones((1, 1, 1, 1)), np.ones(1), np.zeros(1), BatchNormStats.initial(1), Mode.TRAIN)

    def test_backward_without_ctx(self):
        with pytest.raises(ContractViolation):
            batchnorm2d_backward(None, np.zeros((1, 1, 2, 2)))


class TestPointwise:
    """Test relu, add_residual, upsample2x and sigmoid."""

    def test_relu_example(self):
        y, mask = relu(np.array([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(y, [0.0, 0.0, 2.0])
        (g,) = relu_backward(mask, np.ones(3))
        np.testing.assert_array_equal(g, [0.0, 0.0, 1.0])

    def test_relu_all_negative(self):
        x = -np.arange(1.0, 5.0)
        y, mask = relu(x)
        assert not y.any()
        assert not relu_backward(mask, np.ones(4))[0].any()

    def test_add_residual(self, rng):
        a, b = rng.standard_normal((2, 3)), rng.standard_normal((2, 3))
        y, ctx = add_residual(a, b)
        np.testing.assert_array_equal(y, a + b)
        ga, gb = add_residual_backward(ctx, np.ones((2, 3)))
        np.testing.assert_array_equal(ga, gb)

    def test_add_residual_shape_mismatch(self):
        with pytest.raises(ContractViolation, match="shape mismatch"):
            add_residual(np.zeros((1, 2)), np.zeros((2, 1)))

    def test_upsample_example(self):
        x = np.array([[[[1, 2], [3, 4]]]], dtype=np.float64)
        y, ctx = upsample2x(x)
        expected = [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
        np.testing.assert_array_equal(y[0, 0], expected)
        (g,) = upsample2x_backward(ctx, np.ones_like(y))
        np.testing.assert_array_equal(g, np.full_like(x, 4.0))

    def test_sigmoid_values(self):
        y, ctx = sigmoid(np.array([0.0, 40.0, -40.0, 1000.0, -1000.0]))
        assert y[0] == 0.5
        assert np.all(np.isfinite(y))
        assert y[1] == pytest.approx(1.0) and y[2] == pytest.approx(0.0, abs=1e-17)
        (g,) = sigmoid_backward(ctx, np.ones(5))
        assert g[0] == 0.25


class TestLargeInputs:
    """Test that every op stays finite for inputs up to 1e3 in magnitude."""

    @pytest.fixture
    def big(self, rng):
        return rng.uniform(-1e3, 1e3, (2, 3, 6, 6))

    def test_conv2d(self, rng, big):
        out, ctx = conv2d(big, rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4), padding=1)
        grads = conv2d_backward(ctx, rng.uniform(-1e3, 1e3, out.shape))
        assert np.isfinite(out).all()
        assert all(np.isfinite(g).all() for g in grads)

    @pytest.mark.parametrize("mode", [Mode.TRAIN, Mode.INFER])
    def test_batchnorm2d(self, rng, big, mode):
        stats = BatchNormStats.initial(3, np.float64)
        stats.num_batches_tracked = 1
        out, ctx = batchnorm2d(big, rng.standard_normal(3), rng.standard_normal(3), stats, mode)
        grads = batchnorm2d_backward(ctx, rng.uniform(-1e3, 1e3, out.shape))
        assert np.isfinite(out).all()
        assert all(np.isfinite(g).all() for g in grads)
        assert np.isfinite(stats.mean).all() and np.isfinite(stats.var).all()

    @pytest.mark.parametrize(
        "forward,backward",
        [(relu, relu_backward), (upsample2x, upsample2x_backward), (sigmoid, sigmoid_backward)],
    )
    def test_unary_ops(self, rng, big, forward, backward):
        out, ctx = forward(big)
        (grad,) = backward(ctx, rng.uniform(-1e3, 1e3, out.shape))
        assert np.isfinite(out).all()
        assert np.isfinite(grad).all()
        assert grad.shape == big.shape

    def test_sigmoid_saturates_cleanly(self):
        out, _ = sigmoid(np.array([-1e3, 1e3]))
        np.testing.assert_array_equal(out, [0.0, 1.0])

    def test_add_residual(self, rng, big):
        out, ctx = add_residual(big, rng.uniform(-1e3, 1e3, big.shape))
        grads = add_residual_backward(ctx, np.ones_like(out))
        assert np.isfinite(out).all()
        assert all(np.isfinite(g).all() for g in grads)


class TestOpTape:
    """Test the reverse-mode tape."""

    def test_fan_out_accumulates(self, rng):
        from vesselseg.modules.nn import BACKWARD_FNS

        x = rng.standard_normal((1, 1, 2, 2))
        tape = OpTape()
        vx = tape.new_value()
        y, ctx = add_residual(x, x)
        vy = tape.record("add_residual", (vx, vx), (), ctx)
        _, value_grads = tape.backward(vy, np.ones_like(y), BACKWARD_FNS)
        np.testing.assert_array_equal(value_grads[vx], np.full_like(x, 2.0))

    def test_empty_tape(self):
        with pytest.raises(ContractViolation, match="empty tape"):
            OpTape().backward(0, np.ones(1), {})


class TestGradcheck:
    """Test the finite-difference harness itself."""

    def test_linear_op_is_exact(self, rng):
        a, b = rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 3, 4, 4))
        assert finite_diff_check(ADD_RESIDUAL, (a, b)) < 1e-10

    def test_conv_random_case(self):
        op, inputs = random_cases(0)[CONV.name]
        assert finite_diff_check(op, inputs) < 1e-3

    def test_corrupted_gradient_is_caught(self):
        op, inputs = random_cases(0)[CONV.name]

        def bad_backward(ctx, grad_out):
            gi, gw, gb = CONV.backward(ctx, grad_out)
            return gi * 1.1, gw, gb

        corrupted = DifferentiableOp("conv2d_bad", CONV.forward, bad_backward)
        assert finite_diff_check(corrupted, inputs) > 1e-2

    def test_eps_range(self):
        op, inputs = random_cases(0)[RELU.name]
        with pytest.raises(ContractViolation, match="eps"):
            finite_diff_check(op, inputs, eps=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_all_ops_pass(self, seed):
        errors = check_all_ops(seed)
        assert {name.split("[")[0] for name in errors} == {"conv2d", "batchnorm2d", "relu", "add_residual", "upsample2x", "sigmoid"}
        assert max(errors.values()) < 1e-3, errors
