"""Tests for the segmentation network, its weight format and its gradient check."""

import numpy as np
import pytest

from vesselseg.errors import ContractViolation, FormatError
from vesselseg.modules.nn import Mode
from vesselseg.modules.segresnet import (
    ModelConfig,
    build_model,
    expected_parameter_count,
    load_weights,
    network_gradient_check,
    save_weights,
    weights_from_bytes,
    weights_to_bytes,
)

# stem 80 + level0 block 1200 + down 1168 + two level1 blocks 9408 + reduce 136 + up block 1200 + head 9
TINY_PARAMETER_COUNT = 13201


class TestModelConfig:
    """Test configuration invariants."""

    def test_default_deepest_width(self):
        config = ModelConfig()
        assert config.channels(config.levels - 1) == 256
        assert config.patch_size == 224

    def test_tiny_count_closed_form(self, tiny_config, tiny_model):
        assert expected_parameter_count(tiny_config) == TINY_PARAMETER_COUNT
        assert tiny_model.parameter_count == TINY_PARAMETER_COUNT

    @pytest.mark.parametrize(
        "kwargs,message",
        [
            ({"blocks_down": (1, 2), "blocks_up": ()}, "len\\(blocks_up\\)"),
            ({"init_filters": 0}, "init_filters"),
            ({"blocks_down": (1, 1, 1), "blocks_up": (1, 1), "patch_size": 30}, "patch_size"),
        ],
    )
    def test_invalid_config_names_invariant(self, kwargs, message):
        with pytest.raises(ContractViolation, match=message):
            build_model(ModelConfig(**kwargs))

    def test_text_roundtrip(self, tiny_config):
        assert ModelConfig.from_text(tiny_config.to_text()) == tiny_config


class TestModel:
    """Test forward and backward passes."""

    def test_same_seed_same_buffers(self, tiny_config):
        a, b = build_model(tiny_config, seed=3), build_model(tiny_config, seed=3)
        assert weights_to_bytes(a) == weights_to_bytes(b)

    def test_parameter_names_unique(self, tiny_model):
        names = list(tiny_model.params)
        assert len(names) == len(set(names))

    def test_forward_shape_and_range(self, tiny_model, rng):
        x = rng.random((2, 1, 32, 32)).astype(np.float32)
        probs = tiny_model.forward(x, Mode.TRAIN)
        assert probs.shape == (2, 1, 32, 32)
        assert probs.dtype == np.float32
        assert np.all((probs >= 0) & (probs <= 1))

    @pytest.mark.parametrize("seed", range(8))
    def test_random_configs_keep_spatial_size(self, seed):
        rng = np.random.default_rng(seed)
        levels = int(rng.integers(1, 4))
        config = ModelConfig(
            in_channels=int(rng.integers(1, 3)),
            out_channels=int(rng.integers(1, 3)),
            init_filters=int(rng.integers(1, 5)),
            blocks_down=tuple(int(b) for b in rng.integers(0, 3, levels)),
            blocks_up=tuple(int(b) for b in rng.integers(0, 3, levels - 1)),
            patch_size=2 ** (levels - 1) * int(rng.integers(1, 4)),
        ).validate()
        p = config.patch_size
        model = build_model(config, seed=seed)
        probs = model.forward(rng.random((2, config.in_channels, p, p)).astype(np.float32), Mode.TRAIN)
        assert probs.shape == (2, config.out_channels, p, p)
        assert np.isfinite(probs).all()
        grads = model.backward(np.ones_like(probs))
        assert all(g.shape == model.params[name].data.shape for name, g in grads.items())

    def test_infer_is_deterministic(self, tiny_model, rng):
        x = rng.random((1, 1, 32, 32)).astype(np.float32)
        tiny_model.forward(x, Mode.TRAIN)
        outputs = [tiny_model.forward(x, Mode.INFER) for _ in range(3)]
        assert all(np.array_equal(outputs[0], o) for o in outputs[1:])

    def test_wrong_spatial_size(self, tiny_model):
        with pytest.raises(ContractViolation, match="forward expects"):
            tiny_model.forward(np.zeros((1, 1, 16, 16), dtype=np.float32))

    def test_backward_without_forward(self, tiny_model):
        with pytest.raises(ContractViolation, match="preceding train-mode forward"):
            tiny_model.backward(np.zeros((1, 1, 32, 32)))

    def test_backward_after_infer_forward(self, tiny_model, rng):
        tiny_model.forward(rng.random((1, 1, 32, 32)), Mode.INFER)
        with pytest.raises(ContractViolation):
            tiny_model.backward(np.zeros((1, 1, 32, 32)))

    def test_zero_loss_gradient(self, tiny_model, rng):
        probs = tiny_model.forward(rng.random((2, 1, 32, 32)), Mode.TRAIN)
        grads = tiny_model.backward(np.zeros_like(probs))
        assert set(grads) == set(tiny_model.params)
        assert all(not g.any() for g in grads.values())

    def test_repeated_passes_identical_gradients(self, tiny_config, rng):
        x = rng.random((2, 1, 32, 32)).astype(np.float32)
        grad_out = rng.standard_normal((2, 1, 32, 32)).astype(np.float32)
        results = []
        for _ in range(2):
            model = build_model(tiny_config, seed=5)
            model.forward(x, Mode.TRAIN)
            results.append(model.backward(grad_out))
        for name in results[0]:
            np.testing.assert_array_equal(results[0][name], results[1][name])

    def test_copy_is_independent(self, tiny_model):
        clone = tiny_model.copy()
        clone.params["stem.weight"].data += 1.0
        assert not np.array_equal(clone.params["stem.weight"].data, tiny_model.params["stem.weight"].data)

    @pytest.mark.parametrize("seed", range(5))
    def test_network_gradient_check(self, seed):
        model = build_model(ModelConfig.tiny(8), seed=seed)
        x = np.random.default_rng(seed).random((2, 1, 8, 8))
        assert network_gradient_check(model, x, n_params=10, seed=seed) < 3e-3


class TestWeights:
    """Test the SRW1 weight format."""

    def test_roundtrip_bytes(self, tiny_model, rng):
        tiny_model.forward(rng.random((2, 1, 32, 32)), Mode.TRAIN)
        data = weights_to_bytes(tiny_model)
        assert data[:4] == b"SRW1"
        assert weights_to_bytes(weights_from_bytes(data)) == data

    def test_loaded_model_matches_bitwise(self, tiny_model, rng, tmp_path):
        x = rng.random((2, 1, 32, 32)).astype(np.float32)
        tiny_model.forward(x, Mode.TRAIN)
        before = tiny_model.forward(x, Mode.INFER)
        path = save_weights(tiny_model, tmp_path / "w.srw")
        loaded = load_weights(path, tiny_model.config)
        np.testing.assert_array_equal(loaded.forward(x, Mode.INFER), before)

    def test_corrupted_magic(self, tiny_model):
        data = bytearray(weights_to_bytes(tiny_model))
        data[0:4] = b"XXXX"
        with pytest.raises(FormatError, match="magic") as exc:
            weights_from_bytes(bytes(data))
        assert exc.value.category == "format"
        assert exc.value.offset == 0

    def test_truncated_record_named(self, tiny_model):
        data = weights_to_bytes(tiny_model)
        with pytest.raises(FormatError, match="truncated"):
            weights_from_bytes(data[:-10])

    def test_trailing_bytes(self, tiny_model):
        with pytest.raises(FormatError, match="trailing"):
            weights_from_bytes(weights_to_bytes(tiny_model) + b"\x00")

    def test_config_mismatch(self, tiny_model, tmp_path):
        path = save_weights(tiny_model, tmp_path / "w.srw")
        with pytest.raises(FormatError, match="config mismatch"):
            load_weights(path, ModelConfig.tiny(64))
