"""
NN Module - Black Box Interface

Purpose: Differentiable tensor ops for the segmentation network
Interface: conv2d, batchnorm2d, relu, add_residual, upsample2x, sigmoid (+ *_backward),
           Tensor, OpTape, finite_diff_check
Hidden: im2col layout, reduction order, float64 oracle plumbing

Only the ops the network needs are provided; this is not a general autodiff.
"""

from .gradcheck import DifferentiableOp, check_all_ops, finite_diff_check, relative_error
from .ops import (
    BACKWARD_FNS,
    BN_EPS,
    BN_MOMENTUM,
    BatchNormStats,
    Mode,
    add_residual,
    add_residual_backward,
    batchnorm2d,
    batchnorm2d_backward,
    conv2d,
    conv2d_backward,
    relu,
    relu_backward,
    sigmoid,
    sigmoid_backward,
    upsample2x,
    upsample2x_backward,
)
from .tensor import OpTape, TapeRecord, Tensor

__all__ = [
    "BACKWARD_FNS",
    "BN_EPS",
    "BN_MOMENTUM",
    "BatchNormStats",
    "DifferentiableOp",
    "Mode",
    "OpTape",
    "TapeRecord",
    "Tensor",
    "add_residual",
    "add_residual_backward",
    "batchnorm2d",
    "batchnorm2d_backward",
    "check_all_ops",
    "conv2d",
    "conv2d_backward",
    "finite_diff_check",
    "relative_error",
    "relu",
    "relu_backward",
    "sigmoid",
    "sigmoid_backward",
    "upsample2x",
    "upsample2x_backward",
]
