"""
SegResNet Module - Black Box Interface

Purpose: Residual encoder-decoder segmentation network and its weight files
Interface: ModelConfig, Model, build_model(), Model.forward(), Model.backward(),
           save_weights(), load_weights(), network_gradient_check()
Hidden: Layer naming, tape wiring, SRW1 byte layout
"""

from .checks import network_gradient_check
from .model import Model, ModelConfig, build_model, expected_parameter_count, layer_plan
from .weights import MAGIC, load_weights, save_weights, weights_from_bytes, weights_to_bytes

__all__ = [
    "MAGIC",
    "Model",
    "ModelConfig",
    "build_model",
    "expected_parameter_count",
    "layer_plan",
    "load_weights",
    "network_gradient_check",
    "save_weights",
    "weights_from_bytes",
    "weights_to_bytes",
]
