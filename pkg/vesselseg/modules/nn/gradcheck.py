"""
Finite-difference gradient oracle.

Analytic backward passes are compared with central differences of the scalar
objective ``sum(out * grad_out)`` for a fixed random ``grad_out``. Everything runs
in float64.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Sequence, Tuple

import numpy as np

from ...errors import require
from . import ops

logger = logging.getLogger("vesselseg.nn")

DEFAULT_EPS = 1e-4
RELU_KINK_MARGIN = 1e-4


@dataclass(frozen=True)
class DifferentiableOp:
    """A forward/backward pair checked as one unit."""

    name: str
    forward: Callable[..., Tuple[np.ndarray, Any]]
    backward: Callable[[Any, np.ndarray], Tuple[np.ndarray, ...]]


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def finite_diff_check(
    op: DifferentiableOp,
    inputs: Sequence[np.ndarray],
    eps: float = DEFAULT_EPS,
    seed: int = 0,
) -> float:
    """
    Compare ``op.backward`` against central differences for every input coordinate.

    Returns:
        max over all coordinates of |a - n| / max(|a|, |n|, 1e-8)
    """
    require(1e-4 <= eps <= 1e-2, f"eps must lie in [1e-4, 1e-2], got {eps}")
    xs = [np.array(x, dtype=np.float64) for x in inputs]
    out, ctx = op.forward(*xs)
    grad_out = np.random.default_rng(seed).standard_normal(out.shape)
    analytic = op.backward(ctx, grad_out)
    require(
        len(analytic) >= len(xs),
        f"{op.name} backward returned {len(analytic)} gradients for {len(xs)} inputs",
    )

    worst = 0.0
    for x, grad in zip(xs, analytic):
        for idx in np.ndindex(x.shape):
            original = x[idx]
            x[idx] = original + eps
            out_plus = op.forward(*xs)[0]
            x[idx] = original - eps
            out_minus = op.forward(*xs)[0]
            x[idx] = original
            numeric = float(np.sum((out_plus - out_minus) * grad_out)) / (2.0 * eps)
            worst = max(worst, relative_error(float(grad[idx]), numeric))
    return worst


# =============================================================================
# Op registry for the gradcheck command
# =============================================================================


def _bn_op(mode: ops.Mode) -> DifferentiableOp:
    def forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
        stats = ops.BatchNormStats.initial(x.shape[1], dtype=x.dtype)
        if mode is ops.Mode.INFER:
            stats.num_batches_tracked = 1
            stats.mean = np.linspace(-0.5, 0.5, x.shape[1])
            stats.var = np.linspace(0.5, 2.0, x.shape[1])
        return ops.batchnorm2d(x, gamma, beta, stats, mode=mode)

    return DifferentiableOp(f"batchnorm2d[{mode.value}]", forward, ops.batchnorm2d_backward)


def _conv_op(stride: int, padding: int) -> DifferentiableOp:
    return DifferentiableOp(
        f"conv2d[s{stride},p{padding}]",
        lambda x, w, b: ops.conv2d(x, w, b, stride=stride, padding=padding),
        ops.conv2d_backward,
    )


CONV = _conv_op(1, 1)
CONV_STRIDED = _conv_op(2, 1)
BATCHNORM = _bn_op(ops.Mode.TRAIN)
BATCHNORM_INFER = _bn_op(ops.Mode.INFER)
RELU = DifferentiableOp("relu", ops.relu, ops.relu_backward)
ADD_RESIDUAL = DifferentiableOp("add_residual", ops.add_residual, ops.add_residual_backward)
UPSAMPLE = DifferentiableOp("upsample2x", ops.upsample2x, ops.upsample2x_backward)
SIGMOID = DifferentiableOp("sigmoid", ops.sigmoid, ops.sigmoid_backward)


def away_from_kink(x: np.ndarray, rng: np.random.Generator, margin: float = RELU_KINK_MARGIN) -> np.ndarray:
    """Resample entries with |x| < margin so finite differences never straddle 0."""
    x = x.copy()
    close = np.abs(x) < margin
    while close.any():
        x[close] = rng.standard_normal(int(close.sum()))
        close = np.abs(x) < margin
    return x


def random_cases(seed: int) -> Dict[str, Tuple[DifferentiableOp, Tuple[np.ndarray, ...]]]:
    """Random float64 inputs for every op, shapes up to (2, 3, 8, 8)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 8, 8))
    small = rng.standard_normal((1, 2, 5, 5))
    return {
        CONV.name: (CONV, (small, rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3))),
        CONV_STRIDED.name: (
            CONV_STRIDED,
            (rng.standard_normal((2, 2, 6, 6)), rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)),
        ),
        BATCHNORM.name: (
            BATCHNORM,
            (rng.standard_normal((2, 3, 4, 4)), rng.uniform(0.5, 1.5, 3), rng.standard_normal(3)),
        ),
        BATCHNORM_INFER.name: (
            BATCHNORM_INFER,
            (rng.standard_normal((2, 3, 4, 4)), rng.uniform(0.5, 1.5, 3), rng.standard_normal(3)),
        ),
        RELU.name: (RELU, (away_from_kink(x, rng),)),
        ADD_RESIDUAL.name: (ADD_RESIDUAL, (x, rng.standard_normal(x.shape))),
        UPSAMPLE.name: (UPSAMPLE, (rng.standard_normal((2, 3, 4, 4)),)),
        SIGMOID.name: (SIGMOID, (x,)),
    }


def check_all_ops(seed: int = 0, eps: float = DEFAULT_EPS) -> Dict[str, float]:
    """Run finite_diff_check on every registered op and return the max error per op."""
    results = {}
    for name, (op, inputs) in random_cases(seed).items():
        results[name] = finite_diff_check(op, inputs, eps=eps, seed=seed)
        logger.debug("gradcheck %s seed=%d max_rel_error=%.3e", name, seed, results[name])
    return results
