"""
Differentiable ops used by the segmentation network.

Every forward returns ``(output, ctx)``; the matching ``*_backward(ctx, grad_out)``
returns gradients for the op's inputs followed by its parameters. Ops keep the
dtype of their inputs, so the same code trains in float32 and is checked in
float64.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ...errors import ContractViolation, require

logger = logging.getLogger("vesselseg.nn")

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


class Mode(str, Enum):
    """Forward mode."""

    TRAIN = "train"
    INFER = "infer"


def _require_ctx(ctx: object, op: str) -> None:
    if ctx is None:
        raise ContractViolation(f"{op}_backward called without a saved forward context")


# =============================================================================
# Convolution
# =============================================================================


@dataclass
class Conv2dContext:
    padded: np.ndarray
    weight: np.ndarray
    stride: int
    padding: int
    input_shape: Tuple[int, int, int, int]
    output_hw: Tuple[int, int]


def conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    stride: int = 1,
    padding: int = 0,
) -> Tuple[np.ndarray, Conv2dContext]:
    """
    2-D cross-correlation with zero padding.

    Args:
        x: (n, cin, h, w) input
        weight: (cout, cin, k, k) kernel
        bias: (cout,) bias
        stride: 1 or 2
        padding: zero padding on every side

    Returns:
        (n, cout, h', w') output with h' = (h + 2p - k) // stride + 1, and its context
    """
    require(x.ndim == 4, f"conv2d input must be rank 4, got shape {x.shape}")
    require(weight.ndim == 4, f"conv2d weight must be rank 4, got shape {weight.shape}")
    n, cin, h, w = x.shape
    cout, wcin, k, k2 = weight.shape
    require(k == k2 and k >= 1, f"conv2d kernel must be square with k >= 1, got {k}x{k2}")
    require(cin == wcin, f"conv2d input has {cin} channels but weight expects {wcin}")
    require(stride in (1, 2), f"conv2d stride must be 1 or 2, got {stride}")
    require(padding >= 0, f"conv2d padding must be non-negative, got {padding}")
    require(
        h + 2 * padding >= k and w + 2 * padding >= k,
        f"conv2d input {h}x{w} with padding {padding} is smaller than kernel {k}",
    )
    require(bias.shape == (cout,), f"conv2d bias must have shape ({cout},), got {bias.shape}")

    if padding:
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    h_out, w_out = windows.shape[2], windows.shape[3]

    out = np.tensordot(windows, weight, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2) + bias[None, :, None, None]
    out = np.ascontiguousarray(out)

    ctx = Conv2dContext(
        padded=xp,
        weight=weight,
        stride=stride,
        padding=padding,
        input_shape=(n, cin, h, w),
        output_hw=(h_out, w_out),
    )
    return out, ctx


def conv2d_backward(
    ctx: Optional[Conv2dContext], grad_out: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d with respect to (input, weight, bias)."""
    _require_ctx(ctx, "conv2d")
    s, p = ctx.stride, ctx.padding
    n, cin, h, w = ctx.input_shape
    h_out, w_out = ctx.output_hw
    k = ctx.weight.shape[2]

    grad_bias = grad_out.sum(axis=(0, 2, 3))

    windows = sliding_window_view(ctx.padded, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    grad_weight = np.tensordot(grad_out, windows, axes=([0, 2, 3], [0, 2, 3]))

    # (n, h_out, w_out, cin, k, k)
    grad_cols = np.tensordot(grad_out, ctx.weight, axes=([1], [0]))
    grad_padded = np.zeros(ctx.padded.shape, dtype=grad_cols.dtype)
    for dy in range(k):
        for dx in range(k):
            grad_padded[
                :, :, dy : dy + s * (h_out - 1) + 1 : s, dx : dx + s * (w_out - 1) + 1 : s
            ] += grad_cols[:, :, :, :, dy, dx].transpose(0, 3, 1, 2)
    grad_input = grad_padded[:, :, p : p + h, p : p + w]

    return np.ascontiguousarray(grad_input), grad_weight, grad_bias


# =============================================================================
# Batch normalization
# =============================================================================


@dataclass
class BatchNormStats:
    """Running per-channel statistics of a batch-norm layer."""

    mean: np.ndarray
    var: np.ndarray
    num_batches_tracked: int = 0
    _warned: bool = field(default=False, repr=False, compare=False)

    @classmethod
    def initial(cls, channels: int, dtype: np.dtype = np.float32) -> "BatchNormStats":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))

    def update(self, batch_mean: np.ndarray, batch_var: np.ndarray, momentum: float) -> None:
        self.mean = ((1.0 - momentum) * self.mean + momentum * batch_mean).astype(self.mean.dtype)
        self.var = ((1.0 - momentum) * self.var + momentum * batch_var).astype(self.var.dtype)
        self.num_batches_tracked += 1

    def copy(self) -> "BatchNormStats":
        return BatchNormStats(self.mean.copy(), self.var.copy(), self.num_batches_tracked)


@dataclass
class BatchNormContext:
    xhat: np.ndarray
    gamma: np.ndarray
    inv_std: np.ndarray
    mode: Mode


def batchnorm2d(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    stats: BatchNormStats,
    mode: Mode = Mode.TRAIN,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> Tuple[np.ndarray, BatchNormContext]:
    """
    Per-channel batch normalization followed by an affine transform.

    Train mode normalizes with biased batch statistics and folds them into
    ``stats``; infer mode normalizes with ``stats`` unchanged.
    """
    require(x.ndim == 4, f"batchnorm2d input must be rank 4, got shape {x.shape}")
    channels = x.shape[1]
    require(
        gamma.shape == (channels,) and beta.shape == (channels,),
        f"batchnorm2d gamma/beta must have shape ({channels},)",
    )
    require(eps > 0, f"batchnorm2d eps must be positive, got {eps}")

    mode = Mode(mode)
    if mode is Mode.TRAIN:
        count = x.shape[0] * x.shape[2] * x.shape[3]
        require(count >= 2, f"batchnorm2d train mode needs n*h*w >= 2 per channel, got {count}")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        stats.update(mean, var, momentum)
    else:
        if stats.num_batches_tracked == 0 and not stats._warned:
            logger.warning("batchnorm2d in infer mode with no recorded statistics; using mean 0, var 1")
            stats._warned = True
        mean = stats.mean.astype(x.dtype)
        var = stats.var.astype(x.dtype)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return y, BatchNormContext(xhat=xhat, gamma=gamma, inv_std=inv_std, mode=mode)


def batchnorm2d_backward(
    ctx: Optional[BatchNormContext], grad_out: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of batchnorm2d with respect to (input, gamma, beta)."""
    _require_ctx(ctx, "batchnorm2d")
    axes = (0, 2, 3)
    grad_beta = grad_out.sum(axis=axes)
    grad_gamma = (grad_out * ctx.xhat).sum(axis=axes)
    scale = (ctx.gamma * ctx.inv_std)[None, :, None, None]

    if ctx.mode is Mode.INFER:
        return grad_out * scale, grad_gamma, grad_beta

    count = grad_out.shape[0] * grad_out.shape[2] * grad_out.shape[3]
    grad_input = (scale / count) * (
        count * grad_out
        - grad_beta[None, :, None, None]
        - ctx.xhat * grad_gamma[None, :, None, None]
    )
    return grad_input, grad_gamma, grad_beta


# =============================================================================
# Pointwise and structural ops
# =============================================================================


def relu(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Elementwise max(0, x)."""
    mask = x > 0
    return np.where(mask, x, np.zeros((), dtype=x.dtype)), mask


def relu_backward(ctx: Optional[np.ndarray], grad_out: np.ndarray) -> Tuple[np.ndarray]:
    """Pass the gradient where the input was strictly positive."""
    _require_ctx(ctx, "relu")
    return (np.where(ctx, grad_out, np.zeros((), dtype=grad_out.dtype)),)


def add_residual(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Elementwise sum for identity skips."""
    require(a.shape == b.shape, f"add_residual shape mismatch: {a.shape} vs {b.shape}")
    return a + b, a.shape


def add_residual_backward(
    ctx: Optional[Tuple[int, ...]], grad_out: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    _require_ctx(ctx, "add_residual")
    return grad_out, grad_out


def upsample2x(x: np.ndarray) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Nearest-neighbour 2x2 replication."""
    require(x.ndim == 4, f"upsample2x input must be rank 4, got shape {x.shape}")
    return x.repeat(2, axis=2).repeat(2, axis=3), x.shape


def upsample2x_backward(
    ctx: Optional[Tuple[int, ...]], grad_out: np.ndarray
) -> Tuple[np.ndarray]:
    """Sum the four child gradients into each parent cell."""
    _require_ctx(ctx, "upsample2x")
    n, c, h, w = ctx
    return (grad_out.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)


def sigmoid(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """1 / (1 + exp(-x)) without overflow for large |x|."""
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)
    return y, y


def sigmoid_backward(ctx: Optional[np.ndarray], grad_out: np.ndarray) -> Tuple[np.ndarray]:
    _require_ctx(ctx, "sigmoid")
    return (grad_out * ctx * (1.0 - ctx),)


BACKWARD_FNS = {
    "conv2d": conv2d_backward,
    "batchnorm2d": batchnorm2d_backward,
    "relu": relu_backward,
    "add_residual": add_residual_backward,
    "upsample2x": upsample2x_backward,
    "sigmoid": sigmoid_backward,
}
