"""
Pretraining and fine-tuning loops with best-validation checkpoint selection.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ...errors import DivergenceError, FormatError, require
from ..data import PatchRecord, augment
from ..metrics import binarize, combined_loss, dice_score
from ..nn import Mode
from ..segresnet import Model, build_model, load_weights, save_weights
from .config import TrainConfig
from .optimizer import RMSProp

logger = logging.getLogger("vesselseg.trainer")

LOG_COLUMNS = ("epoch", "train_loss", "val_loss", "val_dice")
EVAL_BATCH = 32


@dataclass
class Checkpoint:
    """Model state after one epoch together with its scores."""

    epoch: int
    train_loss: float
    val_loss: float
    val_dice: float
    state: Dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def row(self) -> Tuple[int, float, float, float]:
        return self.epoch, self.train_loss, self.val_loss, self.val_dice


@dataclass
class TrainingResult:
    history: List[Checkpoint]
    best: Checkpoint
    last: Model
    artifacts: Dict[str, Path] = field(default_factory=dict)

    def best_model(self) -> Model:
        model = self.last.copy()
        model.load_state_dict(self.best.state)
        return model


def _batch(records: Sequence[PatchRecord], dtype: np.dtype) -> Tuple[np.ndarray, np.ndarray]:
    x = np.stack([r.image for r in records])[:, None].astype(dtype)
    y = np.stack([r.mask for r in records])[:, None].astype(dtype)
    return x, y


def evaluate_loss(model: Model, records: Sequence[PatchRecord], config: TrainConfig) -> Tuple[float, float]:
    """Infer-mode (mean loss, mean Dice of binarized predictions) over ``records``."""
    total, dices = 0.0, []
    for i in range(0, len(records), EVAL_BATCH):
        chunk = records[i : i + EVAL_BATCH]
        x, y = _batch(chunk, model.dtype)
        probs = model.forward(x, Mode.INFER)
        loss, _ = combined_loss(probs, y, config.loss_weights)
        total += loss * len(chunk)
        dices.extend(dice_score(binarize(p[0]), t[0]) for p, t in zip(probs, y.astype(np.uint8)))
    return total / len(records), float(np.mean(dices))


def _check_records(model: Model, records: Sequence[PatchRecord], name: str) -> None:
    require(len(records) > 0, f"{name} split is empty")
    p = model.config.patch_size
    for r in records:
        require(
            r.image.shape == (p, p),
            f"{name} patch {r.source_id}{r.grid_pos} is {r.image.shape}, model expects ({p}, {p})",
        )


def write_train_log(history: Sequence[Checkpoint], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(LOG_COLUMNS)
        for c in history:
            writer.writerow([c.epoch, f"{c.train_loss:.8g}", f"{c.val_loss:.8g}", f"{c.val_dice:.8g}"])
    return path


def train(
    model: Model,
    train_set: Sequence[PatchRecord],
    val_set: Sequence[PatchRecord],
    config: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
) -> TrainingResult:
    """
    Optimize ``model`` in place for ``config.epochs`` epochs.

    Epoch 0 scores the initial weights and is a best-checkpoint candidate.
    Each later epoch shuffles with a generator seeded by (seed, epoch), runs
    mini-batches (the last one may be partial) with online augmentation and
    takes one RMSProp step per batch.

    Raises:
        DivergenceError: a batch produced a non-finite loss
    """
    _check_records(model, train_set, "train")
    _check_records(model, val_set, "validation")
    optimizer = RMSProp(config)

    train_loss, _ = evaluate_loss(model, train_set, config)
    val_loss, val_dice = evaluate_loss(model, val_set, config)
    best = Checkpoint(0, train_loss, val_loss, val_dice, model.state_dict())
    history = [Checkpoint(0, train_loss, val_loss, val_dice)]
    logger.info("epoch 0: train_loss=%.5f val_loss=%.5f val_dice=%.4f", train_loss, val_loss, val_dice)

    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(train_set))
        running = 0.0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            chunk = [train_set[i] for i in order[start : start + config.batch_size]]
            if config.augment:
                chunk = [augment(r, config.augment_policy, rng) for r in chunk]
            x, y = _batch(chunk, model.dtype)
            probs = model.forward(x, Mode.TRAIN)
            loss, grad = combined_loss(probs, y, config.loss_weights)
            if not math.isfinite(loss):
                raise DivergenceError(epoch, b, loss)
            model.backward(grad)
            optimizer.step(model.params)
            running += loss * len(chunk)
            logger.info("epoch %d batch %d: loss=%.5f", epoch, b, loss, extra={"batch_index": b})

        train_loss = running / len(train_set)
        val_loss, val_dice = evaluate_loss(model, val_set, config)
        row = Checkpoint(epoch, train_loss, val_loss, val_dice)
        history.append(row)
        logger.info(
            "epoch %d: train_loss=%.5f val_loss=%.5f val_dice=%.4f", epoch, train_loss, val_loss, val_dice
        )
        if not config.select_best_val or val_loss < best.val_loss:
            best = Checkpoint(epoch, train_loss, val_loss, val_dice, model.state_dict())
            logger.info("new best checkpoint at epoch %d (val_loss=%.5f)", epoch, val_loss)

    result = TrainingResult(history=history, best=best, last=model)
    if out_dir is not None:
        out_dir = Path(out_dir)
        result.artifacts["last"] = save_weights(model, out_dir / "last.srw")
        result.artifacts["best"] = save_weights(result.best_model(), out_dir / "best.srw")
        result.artifacts["log"] = write_train_log(history, out_dir / "train_log.csv")
    return result


def pretrain(
    train_set: Sequence[PatchRecord],
    val_set: Sequence[PatchRecord],
    config: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
) -> TrainingResult:
    """Train a freshly initialized network (weights seeded by ``config.seed``)."""
    model = build_model(config.resolved_architecture(), seed=config.seed)
    return train(model, train_set, val_set, config, out_dir)


def finetune(
    pretrained: Union[str, Path, Model],
    target_train: Sequence[PatchRecord],
    target_val: Sequence[PatchRecord],
    config: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
) -> TrainingResult:
    """
    Continue training pretrained weights on target-domain data; every parameter is trainable.

    ``pretrained`` is an SRW1 path or an in-memory model (copied, never mutated).

    Raises:
        FormatError: the weights do not match ``config.architecture``
    """
    if isinstance(pretrained, Model):
        if config.architecture is not None and pretrained.config != config.architecture:
            raise FormatError(
                f"config mismatch: model has {pretrained.config}, expected {config.architecture}",
                record="config",
            )
        model = pretrained.copy()
    else:
        model = load_weights(pretrained, config.architecture)
    logger.info("fine-tuning %d parameters on %d target patches", model.parameter_count, len(target_train))
    provenance = None
    if out_dir is not None:
        provenance = save_weights(model, Path(out_dir) / "pretrained-init.srw")
    result = train(model, target_train, target_val, config, out_dir)
    if provenance is not None:
        result.artifacts["pretrained_init"] = provenance
    return result
