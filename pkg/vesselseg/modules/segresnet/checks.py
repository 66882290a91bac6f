"""Whole-network finite-difference check."""

import logging
from typing import List, Tuple

import numpy as np

from ...errors import require
from ..nn import Mode, relative_error
from .model import Model

logger = logging.getLogger("vesselseg.segresnet")

# Coordinates whose analytic gradient is below this are structurally zero
# (e.g. conv biases feeding a batch norm) and carry no signal.
MIN_ANALYTIC_GRAD = 1e-6


def network_gradient_check(
    model: Model,
    x: np.ndarray,
    n_params: int = 10,
    eps: float = 1e-4,
    seed: int = 0,
) -> float:
    """
    Compare backward() with central differences on ``n_params`` random parameter coordinates.

    Runs on a float64 copy of ``model`` with train-mode forwards and the scalar
    loss sum(probs * R) for a fixed random R.

    Returns:
        maximum relative error over the sampled coordinates
    """
    require(1e-4 <= eps <= 1e-2, f"eps must lie in [1e-4, 1e-2], got {eps}")
    rng = np.random.default_rng(seed)
    net = model.astype(np.float64)
    x = x.astype(np.float64)

    probs = net.forward(x, Mode.TRAIN)
    direction = rng.standard_normal(probs.shape)
    grads = net.backward(direction)

    candidates: List[Tuple[str, Tuple[int, ...]]] = []
    for name, g in grads.items():
        for idx in np.argwhere(np.abs(g) > MIN_ANALYTIC_GRAD):
            candidates.append((name, tuple(int(i) for i in idx)))
    require(len(candidates) > 0, "no parameter has a non-zero gradient")
    picks = rng.choice(len(candidates), size=min(n_params, len(candidates)), replace=False)

    worst = 0.0
    for pick in sorted(int(p) for p in picks):
        name, idx = candidates[pick]
        data = net.params[name].data
        original = data[idx]
        data[idx] = original + eps
        out_plus = net.forward(x, Mode.TRAIN)
        data[idx] = original - eps
        out_minus = net.forward(x, Mode.TRAIN)
        data[idx] = original
        numeric = float(np.sum((out_plus - out_minus) * direction)) / (2.0 * eps)
        err = relative_error(float(grads[name][idx]), numeric)
        logger.debug("network gradcheck %s%s rel_error=%.3e", name, idx, err)
        worst = max(worst, err)
    net._tape = None
    return worst
