"""
Scripted evaluation experiments.

Every experiment takes a ``Predictor`` (image -> binary mask) rather than a
model so it can be exercised with an oracle; ``model_predictor`` adapts a
network through tiled inference.
"""

import itertools
import logging
import time
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from ...errors import require
from ..data import PatchRecord, split_by_source, split_train_val
from ..metrics import BinaryMask, boundary_iou, dice_score, largest_component
from ..segresnet import load_weights
from ..stream import FrameStream, GateSpec, accumulate, gate_duration, subcumulative_windows
from ..trainer import METRIC_NAMES, Predictor, TrainConfig, evaluate_dataset, finetune, model_predictor, pretrain
from .reports import ExperimentReport, mean_std, standard_error

logger = logging.getLogger("vesselseg.harness")

ROBUSTNESS_NOISE_SIGMA = 0.10
MANUAL_SECONDS = (120.0, 180.0)
DICE_TARGET = 0.8
DEFAULT_GATES = tuple(range(10, 121, 10))

Transform = Tuple[Callable[[np.ndarray, np.random.Generator], np.ndarray], Callable[[np.ndarray], np.ndarray]]


def _rotation(k: int) -> Transform:
    return (lambda x, rng: np.rot90(x, k).copy(), lambda m: np.rot90(m, -k).copy())


def _noise(sigma: float) -> Transform:
    def forward(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.clip(x + rng.normal(0.0, sigma, x.shape), 0.0, 1.0).astype(x.dtype)

    return (forward, lambda m: m)


TRANSFORMS: Dict[str, Transform] = {
    "identity": (lambda x, rng: x, lambda m: m),
    "rot90": _rotation(1),
    "rot180": _rotation(2),
    "rot270": _rotation(3),
    "noise": _noise(ROBUSTNESS_NOISE_SIGMA),
}


def weights_factory(path: Union[str, Path], max_workers: int = 1) -> Callable[[], Predictor]:
    """A factory that reloads the weight file on every call."""

    def load() -> Predictor:
        return model_predictor(load_weights(path), max_workers=max_workers)

    return load


def run_robustness(
    predictor: Predictor,
    images: Sequence[np.ndarray],
    transforms: Iterable[str] = ("rot90", "rot180", "noise"),
    seed: int = 0,
    use_largest_component: bool = True,
    connectivity: int = 8,
) -> ExperimentReport:
    """
    Dice between the prediction on each transformed image (mapped back to the
    original frame) and the prediction on the untouched image.
    """
    transforms = list(transforms)
    for name in transforms:
        require(name in TRANSFORMS, f"unknown transform {name!r}; choose from {sorted(TRANSFORMS)}")
    report = ExperimentReport(
        "robustness",
        seed,
        {
            "transforms": transforms,
            "noise_sigma": ROBUSTNESS_NOISE_SIGMA,
            "largest_component": use_largest_component,
            "connectivity": connectivity,
            "n_images": len(images),
        },
    )

    def post(mask: BinaryMask) -> BinaryMask:
        return largest_component(mask, connectivity) if use_largest_component else mask

    scores: Dict[str, list] = {name: [] for name in transforms}
    for i, image in enumerate(images):
        reference = post(predictor(image))
        for name in transforms:
            forward, inverse = TRANSFORMS[name]
            rng = np.random.default_rng([seed, i])
            pred = post(inverse(predictor(forward(image, rng))))
            dice = dice_score(pred, reference)
            scores[name].append(dice)
            report.add_row(case=i, transform=name, dice=dice)

    for name in transforms:
        s = mean_std(scores[name])
        report.add_summary(transform=name, dice_mean=s["mean"], dice_std=s["std"], n=s["n"])
        logger.info("robustness %s: Dice %.3f +/- %.3f over %d images", name, s["mean"], s["std"], s["n"])
    return report


def run_consistency(
    predictor_factory: Callable[[], Predictor],
    image: np.ndarray,
    n_repeats: int = 3,
    seed: int = 0,
) -> ExperimentReport:
    """
    Repeat the full load-and-segment pipeline and compare the repeats pairwise.

    Also reports wall-clock time per segmentation against the 120-180 s a
    manual delineation takes.
    """
    require(n_repeats >= 1, f"n_repeats must be >= 1, got {n_repeats}")
    report = ExperimentReport(
        "consistency",
        seed,
        {"n_repeats": n_repeats, "manual_seconds": MANUAL_SECONDS},
    )
    masks, seconds = [], []
    for r in range(n_repeats):
        start = time.perf_counter()
        predict = predictor_factory()
        masks.append(predict(image))
        seconds.append(time.perf_counter() - start)
        report.add_row(table="timing", repeat=r, seconds=seconds[-1])

    dices, bious = [], []
    for a, b in itertools.combinations(range(n_repeats), 2):
        d = dice_score(masks[a], masks[b])
        bi = boundary_iou(masks[a], masks[b])
        dices.append(d)
        bious.append(bi)
        report.add_row(table="pairwise", repeat_a=a, repeat_b=b, dice=d, boundary_iou=bi)

    mean_seconds = float(np.mean(seconds))
    report.add_summary(
        table="pairwise",
        n_pairs=len(dices),
        dice_mean=mean_std(dices)["mean"],
        boundary_iou_mean=mean_std(bious)["mean"],
    )
    report.add_summary(
        table="timing",
        seconds_mean=mean_seconds,
        manual_seconds_low=MANUAL_SECONDS[0],
        manual_seconds_high=MANUAL_SECONDS[1],
        speedup_low=MANUAL_SECONDS[0] / mean_seconds if mean_seconds > 0 else float("inf"),
        speedup_high=MANUAL_SECONDS[1] / mean_seconds if mean_seconds > 0 else float("inf"),
    )
    logger.info("consistency: %d pairs, mean segmentation time %.3f s", len(dices), mean_seconds)
    return report


def run_subcumulative(
    predictor: Predictor,
    streams: Dict[str, FrameStream],
    gates: Sequence[int] = DEFAULT_GATES,
    stride: Optional[int] = None,
    seed: int = 0,
) -> ExperimentReport:
    """
    Per stream: segment the full cumulative image as reference, then every
    sub-cumulative window of every gate; report per-gate mean Dice with its
    standard error, the gate/Dice rank correlation and the first gate whose
    mean Dice reaches 0.8.
    """
    gates = sorted(int(g) for g in gates)
    report = ExperimentReport(
        "subcumulative",
        seed,
        {"gates": gates, "stride": "gate" if stride is None else stride, "streams": list(streams)},
    )
    for name, stream in streams.items():
        require(
            gates[-1] <= stream.n_frames,
            f"stream {name!r} has {stream.n_frames} frames, fewer than the largest gate {gates[-1]}",
        )
        reference = predictor(accumulate(stream, 0, stream.n_frames))
        means = []
        for gate in gates:
            windows = subcumulative_windows(stream, GateSpec(gate, stride))
            dices = []
            for w in windows:
                d = dice_score(predictor(w.image), reference)
                dices.append(d)
                report.add_row(stream=name, gate=gate, start=w.start, dice=d)
            mean = float(np.mean(dices))
            means.append(mean)
            report.add_summary(
                stream=name,
                gate=gate,
                duration_s=gate_duration(gate, stream.fps),
                n_windows=len(windows),
                dice_mean=mean,
                dice_sem=standard_error(dices),
            )

        rho = float(stats.spearmanr(gates, means)[0]) if len(gates) > 1 else float("nan")
        reached = [g for g, m in zip(gates, means) if m >= DICE_TARGET]
        first = reached[0] if reached else ""
        report.add_summary(
            stream=name,
            gate="all",
            spearman_rho=rho,
            first_gate_dice_0_8=first,
            first_gate_seconds=gate_duration(first, stream.fps) if reached else "",
        )
        logger.info("subcumulative %s: spearman rho %.3f, Dice >= %.1f from gate %s", name, rho, DICE_TARGET, first or "never")
    return report


def run_transfer(
    source_records: Sequence[PatchRecord],
    target_records: Sequence[PatchRecord],
    pretrain_config: TrainConfig,
    finetune_config: TrainConfig,
    test_fraction: float = 0.25,
    val_fraction: float = 0.1,
    seed: int = 0,
    out_dir: Optional[Union[str, Path]] = None,
) -> ExperimentReport:
    """
    Compare three models on held-out target sources: trained from scratch on
    the target data, pretrained on the source data only, and pretrained then
    fine-tuned. Scratch and fine-tuned arms share the fine-tune budget and seed.
    """
    target_rest, target_test = split_by_source(target_records, test_fraction, seed)
    target_train, target_val = split_train_val(target_rest, val_fraction, seed)
    source_train, source_val = split_train_val(source_records, val_fraction, seed)
    out = Path(out_dir) if out_dir is not None else None

    def arm_dir(name: str) -> Optional[Path]:
        return out / name if out is not None else None

    pre = pretrain(source_train, source_val, pretrain_config, arm_dir("pretrain"))
    pretrained = pre.best_model()
    tuned = finetune(pretrained, target_train, target_val, finetune_config, arm_dir("finetune"))
    # scratch arm: fine-tune budget, pretrained architecture
    scratch_config = finetune_config.model_copy(update={"architecture": pretrained.config})
    scratch = pretrain(target_train, target_val, scratch_config, arm_dir("scratch"))

    config = {"test_fraction": test_fraction, "val_fraction": val_fraction, "n_target_test": len(target_test)}
    config.update({f"pretrain.{k}": v for k, v in pretrain_config.flat_items().items()})
    config.update({f"finetune.{k}": v for k, v in finetune_config.flat_items().items()})
    report = ExperimentReport("transfer", seed, config)

    arms = {
        "scratch": scratch.best_model(),
        "pretrained_only": pretrained,
        "finetuned": tuned.best_model(),
    }
    for arm, model in arms.items():
        metrics = evaluate_dataset(model_predictor(model), target_test)
        for row in metrics.rows:
            report.add_row(arm=arm, **row)
        summary = {"arm": arm, "n": len(metrics.rows)}
        for m in METRIC_NAMES:
            summary[f"{m}_mean"] = metrics.mean(m)
            summary[f"{m}_std"] = metrics.std(m)
        report.add_summary(**summary)
        logger.info("transfer %s: target Dice %.3f +/- %.3f", arm, metrics.mean(), metrics.std())
    return report
