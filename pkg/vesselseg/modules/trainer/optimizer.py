"""
RMSProp with L2 decay folded into the gradient.

    g' = grad + l2_decay * param
    v  = alpha * v + (1 - alpha) * g'^2
    param = param - lr * g' / (sqrt(v) + eps)
"""

from typing import Dict, Mapping, Tuple

import numpy as np

from ...errors import require
from ..nn import Tensor
from .config import TrainConfig


def rmsprop_step(
    param: np.ndarray, grad: np.ndarray, state_v: np.ndarray, config: TrainConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """One elementwise update; returns new (param, v) without mutating the inputs."""
    require(
        param.shape == grad.shape == state_v.shape,
        f"rmsprop shapes differ: param {param.shape}, grad {grad.shape}, v {state_v.shape}",
    )
    p = param.astype(np.float64)
    g = grad.astype(np.float64) + config.l2_decay * p
    v = config.rmsprop_alpha * state_v.astype(np.float64) + (1.0 - config.rmsprop_alpha) * g * g
    p = p - config.lr * g / (np.sqrt(v) + config.rmsprop_eps)
    return p.astype(param.dtype), v.astype(state_v.dtype)


class RMSProp:
    """Keeps one squared-gradient average per named parameter."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.state: Dict[str, np.ndarray] = {}
        self.steps = 0

    def step(self, params: Mapping[str, Tensor]) -> None:
        """Update every parameter that carries a gradient."""
        for name, t in params.items():
            if t.grad is None:
                continue
            v = self.state.get(name)
            if v is None:
                v = np.zeros_like(t.data)
            t.data, self.state[name] = rmsprop_step(t.data, t.grad, v, self.config)
        self.steps += 1
