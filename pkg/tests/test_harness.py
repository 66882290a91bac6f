"""Tests for the evaluation experiments and their CSV reports."""

import itertools
import math

import numpy as np
import pytest

from vesselseg.errors import ContractViolation
from vesselseg.modules.data import Domain
from vesselseg.modules.harness import (
    ExperimentReport,
    mean_std,
    run_consistency,
    run_robustness,
    run_subcumulative,
    run_transfer,
    standard_error,
    weights_factory,
)
from vesselseg.modules.metrics import binarize, dice_score
from vesselseg.modules.phantom import MotionKind, MotionModel, PhantomParams, gen_phantom, gen_stream
from vesselseg.modules.segresnet import load_weights, save_weights
from vesselseg.modules.trainer import TrainConfig


def rotation_oracle(images, masks):
    """Returns the ground truth of any quarter-turned phantom it has seen."""
    table = {}
    for image, mask in zip(images, masks):
        for k in range(4):
            table[np.rot90(image, k).tobytes()] = np.rot90(mask, k)
    return lambda image: table[np.ascontiguousarray(image).tobytes()]


def pixel_threshold(image):
    return binarize(image, 0.5)


def phantom_set(style=Domain.TARGET, seeds=range(4), size=64):
    pairs = [gen_phantom(PhantomParams(size=size, style=style, seed=s)) for s in seeds]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def read_report(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    header = [line[2:] for line in lines if line.startswith("# ")]
    body = [line.split(",") for line in lines if not line.startswith("#")]
    return header, body


class TestReports:
    """Test report aggregation and CSV layout."""

    def test_mean_std(self):
        assert mean_std([1.0, 3.0]) == {"mean": 2.0, "std": 1.0, "n": 2}
        assert math.isnan(mean_std([])["mean"])

    def test_standard_error(self):
        assert standard_error([5.0]) == 0.0
        assert standard_error([1.0, 3.0]) == pytest.approx(1.0)

    def test_csv_layout(self, tmp_path):
        report = ExperimentReport("demo", 3, {"gates": (10, 20), "noise": 0.1, "flag": True})
        report.add_row(case=0, dice=0.5)
        report.add_summary(dice_mean=0.5, n=1)
        header, body = read_report(report.write_csv(tmp_path / "r.csv"))
        assert header == ["experiment=demo", "seed=3", "gates=10,20", "noise=0.1", "flag=true"]
        assert body[0] == ["kind", "case", "dice", "dice_mean", "n"]
        assert body[1] == ["case", "0", "0.5", "", ""]
        assert body[2] == ["summary", "", "", "0.5", "1"]

    def test_find_summary(self):
        report = ExperimentReport("demo", 0)
        report.add_summary(transform="rot90", dice_mean=0.9)
        assert report.find_summary(transform="rot90")["dice_mean"] == 0.9
        with pytest.raises(KeyError):
            report.find_summary(transform="noise")


class TestRobustness:
    """Test the rotation and noise protocol."""

    def test_identity_transform(self):
        images, masks = phantom_set()
        report = run_robustness(rotation_oracle(images, masks), images, ["identity"])
        assert report.find_summary(transform="identity")["dice_mean"] == 1.0

    def test_oracle_survives_rotations(self):
        images, masks = phantom_set()
        report = run_robustness(rotation_oracle(images, masks), images, ["rot90", "rot180", "rot270"])
        for name in ("rot90", "rot180", "rot270"):
            summary = report.find_summary(transform=name)
            assert summary["dice_mean"] == 1.0 and summary["dice_std"] == 0.0 and summary["n"] == 4

    def test_pixel_plumbing(self):
        images, _ = phantom_set()
        report = run_robustness(pixel_threshold, images, ["rot90", "rot270"], use_largest_component=False)
        assert all(row["dice"] == 1.0 for row in report.rows)

    def test_noise_is_seeded(self):
        images, _ = phantom_set()
        a = run_robustness(pixel_threshold, images, ["noise"], seed=4)
        b = run_robustness(pixel_threshold, images, ["noise"], seed=4)
        assert [r["dice"] for r in a.rows] == [r["dice"] for r in b.rows]
        assert a.find_summary(transform="noise")["dice_mean"] < 1.0

    def test_report_tabulates_mean_and_std(self, tmp_path):
        images, _ = phantom_set()
        report = run_robustness(pixel_threshold, images, ["rot90", "noise"], seed=1)
        header, body = read_report(report.write_csv(tmp_path / "robustness.csv"))
        assert "noise_sigma=0.1" in header
        columns = body[0]
        summaries = [dict(zip(columns, row)) for row in body[1:] if row[0] == "summary"]
        assert [s["transform"] for s in summaries] == ["rot90", "noise"]
        noise = [r["dice"] for r in report.rows if r["transform"] == "noise"]
        assert float(summaries[1]["dice_mean"]) == pytest.approx(np.mean(noise), abs=1e-5)
        assert float(summaries[1]["dice_std"]) == pytest.approx(np.std(noise), abs=1e-5)

    def test_unknown_transform(self):
        with pytest.raises(ContractViolation, match="unknown transform"):
            run_robustness(pixel_threshold, [np.zeros((4, 4))], ["shear"])


class TestConsistency:
    """Test repeat-run agreement."""

    def test_deterministic_pipeline(self, tiny_model, tmp_path, rng):
        path = save_weights(tiny_model, tmp_path / "w.srw")
        image = rng.random((64, 64)).astype(np.float32)
        report = run_consistency(weights_factory(path), image, n_repeats=3)
        pairs = [r for r in report.rows if r["table"] == "pairwise"]
        assert len(pairs) == 3
        assert all(r["dice"] == 1.0 and r["boundary_iou"] == 1.0 for r in pairs)
        timing = report.find_summary(table="timing")
        assert timing["speedup_low"] == pytest.approx(120.0 / timing["seconds_mean"])

    def test_single_repeat(self):
        report = run_consistency(lambda: pixel_threshold, np.zeros((4, 4)), n_repeats=1)
        assert not [r for r in report.rows if r["table"] == "pairwise"]
        assert report.find_summary(table="pairwise")["n_pairs"] == 0

    def test_mean_is_hand_average(self, rng):
        masks = [(rng.random((8, 8)) > 0.5).astype(np.uint8) for _ in range(4)]
        calls = iter(masks)

        def factory():
            mask = next(calls)
            return lambda image: mask

        report = run_consistency(factory, np.zeros((8, 8)), n_repeats=4)
        expected = np.mean([dice_score(a, b) for a, b in itertools.combinations(masks, 2)])
        assert report.find_summary(table="pairwise")["dice_mean"] == pytest.approx(expected)


class TestSubcumulative:
    """Test the time-gate protocol."""

    def stream(self, n_frames=120, noise=0.0, motion=None, seed=0):
        image, mask = gen_phantom(PhantomParams(size=64, style=Domain.TARGET, seed=seed))
        return gen_stream(image, mask, n_frames, noise_scale=noise, motion=motion or MotionModel(), seed=seed)

    def test_full_gate_is_exact(self):
        report = run_subcumulative(pixel_threshold, {"s": self.stream(noise=0.5)}, gates=[120])
        (row,) = report.rows
        assert row["dice"] == 1.0

    def test_noiseless_static_every_gate(self):
        report = run_subcumulative(pixel_threshold, {"s": self.stream()}, gates=[10, 60, 120])
        assert all(r["dice"] == 1.0 for r in report.rows)

    def test_noisy_static_trend(self, tmp_path):
        report = run_subcumulative(pixel_threshold, {"static": self.stream(noise=0.6)})
        trend = report.find_summary(stream="static", gate="all")
        assert trend["spearman_rho"] >= 0.8
        assert report.find_summary(stream="static", gate=10)["duration_s"] == 0.51
        assert report.find_summary(stream="static", gate=120)["duration_s"] == 6.12
        header, _ = read_report(report.write_csv(tmp_path / "subcum.csv"))
        assert "gates=10,20,30,40,50,60,70,80,90,100,110,120" in header

    def test_motion_lowers_agreement(self):
        motion = MotionModel(amplitude_px=3.0, period_s=4.0, kind=MotionKind.SINUSOIDAL)
        streams = {
            "static": self.stream(240, noise=0.3, seed=2),
            "motion": self.stream(240, noise=0.3, motion=motion, seed=2),
        }
        report = run_subcumulative(pixel_threshold, streams, gates=[60, 120])
        static = report.find_summary(stream="static", gate=120)["dice_mean"]
        moving = report.find_summary(stream="motion", gate=120)["dice_mean"]
        assert moving < static

    def test_windows_and_sem(self):
        report = run_subcumulative(pixel_threshold, {"s": self.stream(noise=0.6)}, gates=[30])
        summary = report.find_summary(stream="s", gate=30)
        dices = [r["dice"] for r in report.rows]
        assert summary["n_windows"] == 4
        assert summary["dice_sem"] == pytest.approx(np.std(dices, ddof=1) / 2)

    def test_gate_longer_than_stream(self):
        with pytest.raises(ContractViolation, match="fewer than the largest gate"):
            run_subcumulative(pixel_threshold, {"s": self.stream(60)}, gates=[10, 120])


class TestTransfer:
    """Test the three-arm transfer comparison plumbing."""

    def test_arms_and_artifacts(self, make_phantom_records, micro_config, tmp_path):
        source = make_phantom_records(Domain.SOURCE, range(8))
        target = make_phantom_records(Domain.TARGET, range(50, 58))
        config = TrainConfig(epochs=1, lr=1e-3, batch_size=4, architecture=micro_config)
        report = run_transfer(source, target, config, config, seed=2, out_dir=tmp_path)
        arms = [s["arm"] for s in report.summary]
        assert arms == ["scratch", "pretrained_only", "finetuned"]
        assert all(s["n"] == 2 for s in report.summary)
        for arm in ("pretrain", "finetune", "scratch"):
            assert (tmp_path / arm / "best.srw").exists()
        assert report.config["finetune.epochs"] == 1

    def test_scratch_arm_inherits_pretrained_architecture(self, make_phantom_records, micro_config, tmp_path):
        source = make_phantom_records(Domain.SOURCE, range(8))
        target = make_phantom_records(Domain.TARGET, range(50, 58))
        pre = TrainConfig(epochs=1, lr=1e-3, batch_size=4, architecture=micro_config)
        fine = TrainConfig(epochs=1, lr=1e-3, batch_size=4)
        assert fine.architecture is None
        report = run_transfer(source, target, pre, fine, seed=2, out_dir=tmp_path)
        assert [s["arm"] for s in report.summary] == ["scratch", "pretrained_only", "finetuned"]
        assert load_weights(tmp_path / "scratch" / "best.srw").config == micro_config


@pytest.fixture(scope="module")
def desk_transfer(tmp_path_factory, make_phantom_records):
    """Desk-scale pretrain on 512 source phantoms, fine-tune on 64 target phantoms."""
    source = make_phantom_records(Domain.SOURCE, range(512))
    target = make_phantom_records(Domain.TARGET, range(1000, 1064))
    out = tmp_path_factory.mktemp("transfer")
    report = run_transfer(
        source, target, TrainConfig.desk_scale(seed=0), TrainConfig.desk_scale(seed=0), seed=0, out_dir=out
    )
    return report, out


@pytest.mark.slow
class TestAcceptance:
    """Desk-scale experiment outcomes with trained networks (minutes)."""

    def test_finetuning_beats_scratch(self, desk_transfer):
        report, _ = desk_transfer
        tuned = report.find_summary(arm="finetuned")["dice_mean"]
        assert tuned >= 0.75
        assert tuned >= report.find_summary(arm="scratch")["dice_mean"]

    def test_robust_to_rotation_and_noise(self, desk_transfer, make_phantom_records):
        _, out = desk_transfer
        predictor = weights_factory(out / "finetune" / "best.srw")()
        images = [r.image for r in make_phantom_records(Domain.TARGET, range(2000, 2020), size=64)]
        report = run_robustness(predictor, images)
        for name in ("rot90", "rot180", "noise"):
            assert report.find_summary(transform=name)["dice_mean"] >= 0.70

    def test_static_stream_trend(self, desk_transfer):
        _, out = desk_transfer
        predictor = weights_factory(out / "finetune" / "best.srw")()
        image, mask = gen_phantom(PhantomParams(size=64, style=Domain.TARGET, seed=3000))
        static = gen_stream(image, mask, 120, noise_scale=0.6, seed=3000)
        report = run_subcumulative(predictor, {"static": static})
        assert report.find_summary(stream="static", gate="all")["spearman_rho"] >= 0.8
