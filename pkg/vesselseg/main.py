#!/usr/bin/env python3
"""
vesselseg - command line entry point

Thin orchestration layer over the modules:
- Loads .env and runtime settings, configures logging
- Exposes every pipeline stage and experiment as a subcommand
- Maps failures to one ``error category=<cat> message=<text>`` line on stderr
  and a category-specific exit code
"""

import csv
import logging
import sys
from pathlib import Path
from typing import List, NoReturn, Optional, Sequence, Tuple

import click
import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from vesselseg.config import get_config
from vesselseg.errors import VesselsegError, require
from vesselseg.logging_config import configure_logging
from vesselseg.modules.data import (
    Domain,
    load_image,
    load_mask,
    load_patch_cache,
    prepare_patches,
    read_manifest,
    split_train_val,
    write_pgm,
)
from vesselseg.modules.harness import (
    DEFAULT_GATES,
    TRANSFORMS,
    run_consistency,
    run_robustness,
    run_subcumulative,
    run_transfer,
    weights_factory,
)
from vesselseg.modules.metrics import dice_score, largest_component
from vesselseg.modules.nn import check_all_ops
from vesselseg.modules.phantom import MotionKind, MotionModel, ShotNoise, gen_stream, write_phantom_set
from vesselseg.modules.segresnet import ModelConfig, build_model, load_weights, network_gradient_check
from vesselseg.modules.stream import (
    GPU_REFERENCE_MS,
    GateSpec,
    accumulate,
    gate_duration,
    measure_latency,
    read_stream,
    roi_crop_multiple,
    subcumulative_windows,
    tiled_infer,
    write_latency_csv,
    write_stream,
)
from vesselseg.modules.trainer import TrainConfig, finetune, model_predictor, train

logger = logging.getLogger("vesselseg.cli")

EXIT_CODES = {"usage": 2, "contract": 3, "format": 4, "divergence": 5, "config": 6, "io": 7, "internal": 1}
OP_TOLERANCE = 1e-3
NETWORK_TOLERANCE = 3e-3
# click >= 8.2 reports a bare group invocation as a usage error; let it print the help
_NO_ARGS_IS_HELP = getattr(click.exceptions, "NoArgsIsHelpError", ())


def _fail(category: str, message: str) -> NoReturn:
    one_line = " ".join(str(message).split())
    click.echo(f"error category={category} message={one_line}", err=True)
    raise click.exceptions.Exit(EXIT_CODES.get(category, 1))


class VesselsegGroup(click.Group):
    """Click group that turns library and usage failures into parseable exit lines."""

    def make_context(self, info_name, args, parent=None, **extra) -> click.Context:
        try:
            return super().make_context(info_name, args, parent=parent, **extra)
        except _NO_ARGS_IS_HELP:
            raise
        except click.UsageError as e:
            _fail("usage", e.format_message())

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            _fail("usage", e.format_message())
        except VesselsegError as e:
            _fail(e.category, str(e))
        except ValidationError as e:
            _fail("config", "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()))
        except OSError as e:
            _fail("io", str(e))


def _seed(seed: Optional[int]) -> int:
    return get_config().seed if seed is None else seed


def _roi(image: np.ndarray, patch: int, roi: Optional[Tuple[int, int, int, int]]) -> np.ndarray:
    """Explicit ROI, or the largest centred patch-multiple crop (at most 4x4 patches)."""
    if roi:
        row, col, nr, nc = roi
        return roi_crop_multiple(image, (row, col), (nr, nc), patch)
    h, w = image.shape
    nr, nc = min(h // patch, 4), min(w // patch, 4)
    require(nr >= 1 and nc >= 1, f"image {h}x{w} is smaller than one {patch}px patch")
    anchor = ((h - nr * patch) // 2, (w - nc * patch) // 2)
    return roi_crop_multiple(image, anchor, (nr, nc), patch)


def _save_mask(mask: np.ndarray, path: Path) -> Path:
    return write_pgm((mask * 255).astype(np.uint8), path)


def _load_config(path: Optional[str], seed: Optional[int], default: TrainConfig) -> TrainConfig:
    config = TrainConfig.from_file(path) if path else default
    if seed is not None:
        config = TrainConfig(**{**{n: getattr(config, n) for n in TrainConfig.model_fields}, "seed": seed})
    return config


def _manifest_images(manifest: str, patch: int, roi) -> List[np.ndarray]:
    return [_roi(load_image(e.image_path), patch, roi) for e in read_manifest(manifest)]


roi_option = click.option(
    "--roi", type=(int, int, int, int), default=None, help="ROW COL NR NC crop; default: centred patch multiple"
)
seed_option = click.option("--seed", type=int, default=None, help="Seed (default from VESSELSEG_SEED)")


@click.group(cls=VesselsegGroup)
@click.option("--log-level", default=None, help="Override VESSELSEG_LOG_LEVEL")
def cli(log_level: Optional[str]) -> None:
    """Vessel segmentation: phantoms, training, streaming inference and experiments."""
    load_dotenv()
    config = get_config()
    configure_logging((log_level or config.log_level).upper(), config.progress_every)


@cli.command("gen-phantom")
@click.option("--style", type=click.Choice([d.value for d in Domain]), default="source")
@seed_option
@click.option("--size", type=int, default=64)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--count", type=int, default=1)
def gen_phantom_cmd(style: str, seed: Optional[int], size: int, out_dir: str, count: int) -> None:
    """Write synthetic phantom images, masks and a manifest."""
    manifest = write_phantom_set(Domain(style), _seed(seed), size, count, out_dir)
    click.echo(str(manifest))


@cli.command("gen-stream")
@click.option("--phantom", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--mask", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--frames", type=int, default=120)
@click.option("--fps", type=float, default=19.6)
@click.option("--motion", type=click.Choice([m.value for m in MotionKind]), default="static")
@click.option("--amplitude", type=float, default=0.0)
@click.option("--period", type=float, default=4.0)
@click.option("--noise", type=float, default=0.0)
@click.option("--shot-noise", type=click.Choice([s.value for s in ShotNoise]), default="gaussian")
@seed_option
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def gen_stream_cmd(phantom, mask, frames, fps, motion, amplitude, period, noise, shot_noise, seed, out_path) -> None:
    """Synthesize a CVS1 frame stream from a phantom."""
    stream = gen_stream(
        load_image(phantom),
        load_mask(mask),
        frames,
        fps=fps,
        motion=MotionModel(amplitude_px=amplitude, period_s=period, kind=MotionKind(motion)),
        noise_scale=noise,
        seed=_seed(seed),
        shot_noise=ShotNoise(shot_noise),
    )
    click.echo(str(write_stream(stream, out_path)))


@cli.command("prepare-patches")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--grid", "grid_n", type=int, default=6)
@click.option("--patch", type=int, default=224)
@click.option("--min-label", type=float, default=0.05)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@seed_option
def prepare_patches_cmd(manifest, grid_n, patch, min_label, out_dir, seed) -> None:
    """Cut manifest images into a filtered patch cache."""
    logger.debug("prepare-patches is deterministic; seed=%d", _seed(seed))
    records = prepare_patches(manifest, grid_n, patch, min_label, out_dir)
    click.echo(f"patches={len(records)} out={out_dir}")


def _train_command(
    config_path: Optional[str],
    data: str,
    domain: Domain,
    val_frac: float,
    out_dir: str,
    init: Optional[str],
    seed: Optional[int],
    default: TrainConfig,
) -> None:
    config = _load_config(config_path, seed, default)
    records = load_patch_cache(data, domain)
    train_set, val_set = split_train_val(records, val_frac, config.seed)
    logger.info("training on %d patches, validating on %d", len(train_set), len(val_set))
    if init:
        result = finetune(init, train_set, val_set, config, out_dir)
    else:
        model = build_model(config.resolved_architecture(), seed=config.seed)
        result = train(model, train_set, val_set, config, out_dir)
    best = result.best
    click.echo(
        f"best_epoch={best.epoch} val_loss={best.val_loss:.6f} val_dice={best.val_dice:.4f} "
        f"weights={result.artifacts['best']}"
    )


@cli.command("pretrain")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--val-frac", type=float, default=0.1)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--init", type=click.Path(exists=True, dir_okay=False), default=None)
@seed_option
def pretrain_cmd(config_path, data, val_frac, out_dir, init, seed) -> None:
    """Train on a source-domain patch cache."""
    _train_command(config_path, data, Domain.SOURCE, val_frac, out_dir, init, seed, TrainConfig.pretrain_defaults())


@cli.command("finetune")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--val-frac", type=float, default=0.1)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--init", type=click.Path(exists=True, dir_okay=False), required=True)
@seed_option
def finetune_cmd(config_path, data, val_frac, out_dir, init, seed) -> None:
    """Fine-tune pretrained weights on a target-domain patch cache."""
    _train_command(config_path, data, Domain.TARGET, val_frac, out_dir, init, seed, TrainConfig.finetune_defaults())


@cli.command("infer")
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--image", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--largest-component/--all-components", "keep_largest", default=False)
@roi_option
@seed_option
def infer_cmd(weights, image, out_path, keep_largest, roi, seed) -> None:
    """Segment one image (cropped to a patch multiple) and write the mask."""
    logger.debug("inference is deterministic; seed=%d", _seed(seed))
    model = load_weights(weights)
    crop = _roi(load_image(image), model.config.patch_size, roi)
    mask = tiled_infer(model, crop, max_workers=get_config().tile_workers)
    if keep_largest:
        mask = largest_component(mask)
    click.echo(str(_save_mask(mask, Path(out_path))))


@cli.command("stream")
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--stream", "stream_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--gate", type=int, required=True)
@click.option("--stride", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@roi_option
@seed_option
def stream_cmd(weights, stream_path, gate, stride, out_dir, roi, seed) -> None:
    """Segment every sub-cumulative window of a stream."""
    logger.debug("stream inference is deterministic; seed=%d", _seed(seed))
    model = load_weights(weights)
    stream = read_stream(stream_path)
    patch = model.config.patch_size
    workers = get_config().tile_workers
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reference = tiled_infer(model, _roi(accumulate(stream), patch, roi), max_workers=workers)
    _save_mask(reference, out / "reference.pgm")
    duration = gate_duration(gate, stream.fps)
    n_windows = 0
    with open(out / "windows.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["start", "gate", "duration_s", "dice_vs_reference"])
        for w in subcumulative_windows(stream, GateSpec(gate, stride)):
            mask = tiled_infer(model, _roi(w.image, patch, roi), max_workers=workers)
            _save_mask(mask, out / f"gate{gate}_start{w.start}.pgm")
            writer.writerow([w.start, gate, duration, f"{dice_score(mask, reference):.6f}"])
            n_windows += 1
    click.echo(f"windows={n_windows} out={out}")


@cli.command("eval-robustness")
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--transforms", default="rot90,rot180,noise", help=f"Comma list from {','.join(TRANSFORMS)}")
@click.option("--largest-component/--all-components", default=True)
@click.option("--report", type=click.Path(dir_okay=False), required=True)
@roi_option
@seed_option
def eval_robustness_cmd(weights, manifest, transforms, largest_component, report, roi, seed) -> None:
    """Prediction stability under rotation and noise."""
    model = load_weights(weights)
    images = _manifest_images(manifest, model.config.patch_size, roi)
    result = run_robustness(
        model_predictor(model, max_workers=get_config().tile_workers),
        images,
        [t.strip() for t in transforms.split(",") if t.strip()],
        seed=_seed(seed),
        use_largest_component=largest_component,
    )
    click.echo(str(result.write_csv(report)))


@cli.command("eval-consistency")
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--image", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--repeats", type=int, default=3)
@click.option("--report", type=click.Path(dir_okay=False), required=True)
@roi_option
@seed_option
def eval_consistency_cmd(weights, image, repeats, report, roi, seed) -> None:
    """Repeat-run agreement and segmentation time."""
    patch = load_weights(weights).config.patch_size
    crop = _roi(load_image(image), patch, roi)
    result = run_consistency(weights_factory(weights, get_config().tile_workers), crop, repeats, seed=_seed(seed))
    click.echo(str(result.write_csv(report)))


@cli.command("eval-subcum")
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--stream", "streams", multiple=True, required=True, help="NAME=FILE, repeatable")
@click.option("--gates", default=",".join(str(g) for g in DEFAULT_GATES))
@click.option("--stride", type=int, default=None)
@click.option("--report", type=click.Path(dir_okay=False), required=True)
@roi_option
@seed_option
def eval_subcum_cmd(weights, streams, gates, stride, report, roi, seed) -> None:
    """Dice of sub-cumulative windows against the full cumulative image."""
    model = load_weights(weights)
    patch = model.config.patch_size
    loaded = {}
    for spec in streams:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).stem, spec
        loaded[name] = read_stream(path)
    predict = model_predictor(model, max_workers=get_config().tile_workers)
    result = run_subcumulative(
        lambda image: predict(_roi(image, patch, roi)),
        loaded,
        [int(g) for g in gates.split(",") if g.strip()],
        stride=stride,
        seed=_seed(seed),
    )
    click.echo(str(result.write_csv(report)))


@cli.command("eval-latency")
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--warmup", type=int, default=5)
@click.option("--trials", type=int, default=50)
@click.option("--report", type=click.Path(dir_okay=False), required=True)
@seed_option
def eval_latency_cmd(weights, warmup, trials, report, seed) -> None:
    """Per-patch inference latency (tiny network when no weights are given)."""
    model = load_weights(weights) if weights else build_model(ModelConfig.tiny(), seed=_seed(seed))
    stats = measure_latency(model, warmup, trials, seed=_seed(seed))
    write_latency_csv(stats, report)
    click.echo(
        f"mean_ms={1e3 * stats.mean:.3f} p50_ms={1e3 * stats.p50:.3f} p99_ms={1e3 * stats.p99:.3f} "
        f"patches_per_second={stats.patches_per_second:.1f} gpu_reference_ms={GPU_REFERENCE_MS}"
    )


@cli.command("eval-transfer")
@click.option("--source", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--target", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--pretrain-config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--finetune-config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--test-frac", type=float, default=0.25)
@click.option("--val-frac", type=float, default=0.1)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--report", type=click.Path(dir_okay=False), required=True)
@seed_option
def eval_transfer_cmd(source, target, pretrain_config, finetune_config, test_frac, val_frac, out_dir, report, seed) -> None:
    """Scratch vs pretrained-only vs fine-tuned on held-out target sources."""
    seed = _seed(seed)
    result = run_transfer(
        load_patch_cache(source, Domain.SOURCE),
        load_patch_cache(target, Domain.TARGET),
        _load_config(pretrain_config, seed, TrainConfig.desk_scale(seed=seed)),
        _load_config(finetune_config, seed, TrainConfig.desk_scale(seed=seed)),
        test_fraction=test_frac,
        val_fraction=val_frac,
        seed=seed,
        out_dir=out_dir,
    )
    click.echo(str(result.write_csv(report)))


@cli.command("gradcheck")
@seed_option
@click.option("--seeds", "n_seeds", type=int, default=5, help="Number of consecutive seeds")
@click.option("--eps", type=float, default=1e-4)
def gradcheck_cmd(seed: Optional[int], n_seeds: int, eps: float) -> None:
    """Finite-difference checks of every op and of the tiny network."""
    first = _seed(seed)
    worst = {}
    for s in range(first, first + n_seeds):
        for op, err in check_all_ops(s, eps).items():
            worst[op] = max(worst.get(op, 0.0), err)
        model = build_model(ModelConfig.tiny(8), seed=s)
        x = np.random.default_rng(s).random((2, 1, 8, 8))
        err = network_gradient_check(model, x, eps=eps, seed=s)
        worst["network"] = max(worst.get("network", 0.0), err)

    failed = []
    for op, err in worst.items():
        limit = NETWORK_TOLERANCE if op == "network" else OP_TOLERANCE
        ok = err < limit
        click.echo(f"op={op} max_rel_err={err:.3e} limit={limit:.0e} {'ok' if ok else 'FAIL'}")
        if not ok:
            failed.append(op)
    require(not failed, f"gradient check failed for {', '.join(failed)}")


def main(argv: Optional[Sequence[str]] = None) -> None:
    cli.main(args=list(argv) if argv is not None else None, prog_name="vesselseg")


if __name__ == "__main__":
    main(sys.argv[1:])
