"""
Harness Module - Black Box Interface

Purpose: Reproducible evaluation experiments emitting CSV reports
Interface: run_robustness(), run_consistency(), run_subcumulative(), run_transfer(),
           ExperimentReport, weights_factory()
Hidden: Transform registry, pairing and aggregation order
"""

from .experiments import (
    DEFAULT_GATES,
    DICE_TARGET,
    MANUAL_SECONDS,
    ROBUSTNESS_NOISE_SIGMA,
    TRANSFORMS,
    run_consistency,
    run_robustness,
    run_subcumulative,
    run_transfer,
    weights_factory,
)
from .reports import ExperimentReport, mean_std, standard_error

__all__ = [
    "DEFAULT_GATES",
    "DICE_TARGET",
    "MANUAL_SECONDS",
    "ROBUSTNESS_NOISE_SIGMA",
    "TRANSFORMS",
    "ExperimentReport",
    "mean_std",
    "run_consistency",
    "run_robustness",
    "run_subcumulative",
    "run_transfer",
    "standard_error",
    "weights_factory",
]
