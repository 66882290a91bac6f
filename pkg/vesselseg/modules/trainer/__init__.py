"""
Trainer Module - Black Box Interface

Purpose: RMSProp optimization, pretraining, fine-tuning and evaluation
Interface: TrainConfig, rmsprop_step(), RMSProp, train(), pretrain(), finetune(),
           evaluate_dataset(), MetricsReport, Checkpoint, TrainingResult
Hidden: Batch assembly, per-epoch seeding, artifact layout
"""

from .config import TrainConfig, parse_key_values
from .evaluate import (
    METRIC_NAMES,
    MetricsReport,
    Predictor,
    as_predictor,
    evaluate_dataset,
    model_predictor,
)
from .optimizer import RMSProp, rmsprop_step
from .trainer import (
    LOG_COLUMNS,
    Checkpoint,
    TrainingResult,
    evaluate_loss,
    finetune,
    pretrain,
    train,
    write_train_log,
)

__all__ = [
    "LOG_COLUMNS",
    "METRIC_NAMES",
    "Checkpoint",
    "MetricsReport",
    "Predictor",
    "RMSProp",
    "TrainConfig",
    "TrainingResult",
    "as_predictor",
    "evaluate_dataset",
    "evaluate_loss",
    "finetune",
    "model_predictor",
    "parse_key_values",
    "pretrain",
    "rmsprop_step",
    "train",
    "write_train_log",
]
