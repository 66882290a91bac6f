"""
Residual encoder-decoder segmentation network.

Encoder: a 3x3 stem conv, then per level an optional strided 3x3 conv that
doubles the channel count followed by pre-activation residual blocks
(BN -> ReLU -> conv3x3 -> BN -> ReLU -> conv3x3, plus identity skip).
Decoder: per level a 1x1 conv halving channels, 2x nearest upsampling, an
additive encoder skip and residual blocks. Head: 1x1 conv and sigmoid.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ...errors import ContractViolation, require
from ..nn import BACKWARD_FNS, BatchNormStats, Mode, OpTape, Tensor, ops

logger = logging.getLogger("vesselseg.segresnet")

Value = Tuple[np.ndarray, int]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description."""

    in_channels: int = 1
    out_channels: int = 1
    init_filters: int = 32
    blocks_down: Tuple[int, ...] = (1, 2, 2, 4)
    blocks_up: Tuple[int, ...] = (1, 1, 1)
    patch_size: int = 224

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks_down", tuple(int(b) for b in self.blocks_down))
        object.__setattr__(self, "blocks_up", tuple(int(b) for b in self.blocks_up))

    @classmethod
    def tiny(cls, patch_size: int = 32) -> "ModelConfig":
        """Desk-scale configuration: 8 filters, two levels."""
        return cls(init_filters=8, blocks_down=(1, 2), blocks_up=(1,), patch_size=patch_size)

    @property
    def levels(self) -> int:
        return len(self.blocks_down)

    @property
    def downsampling_factor(self) -> int:
        return 2 ** (self.levels - 1)

    def channels(self, level: int) -> int:
        return self.init_filters * 2**level

    def validate(self) -> "ModelConfig":
        """Raise ContractViolation naming the first violated invariant."""
        require(self.levels >= 1, "invariant violated: len(blocks_down) >= 1")
        require(
            len(self.blocks_up) == self.levels - 1,
            f"invariant violated: len(blocks_up) == len(blocks_down) - 1 "
            f"(got {len(self.blocks_up)} and {self.levels})",
        )
        require(self.init_filters >= 1, f"invariant violated: init_filters >= 1 (got {self.init_filters})")
        require(
            self.in_channels >= 1 and self.out_channels >= 1,
            "invariant violated: in_channels >= 1 and out_channels >= 1",
        )
        require(
            all(b >= 0 for b in self.blocks_down + self.blocks_up),
            "invariant violated: block counts are non-negative",
        )
        require(
            self.patch_size >= 1 and self.patch_size % self.downsampling_factor == 0,
            f"invariant violated: patch_size divisible by 2^(len(blocks_down)-1) "
            f"(patch_size={self.patch_size}, factor={self.downsampling_factor})",
        )
        return self

    def to_text(self) -> str:
        """key=value lines, one per field."""
        return (
            f"in_channels={self.in_channels}\n"
            f"out_channels={self.out_channels}\n"
            f"init_filters={self.init_filters}\n"
            f"blocks_down={','.join(str(b) for b in self.blocks_down)}\n"
            f"blocks_up={','.join(str(b) for b in self.blocks_up)}\n"
            f"patch_size={self.patch_size}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        values: Dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"malformed config line: {line!r}")
            values[key.strip()] = value.strip()

        def blocks(raw: str) -> Tuple[int, ...]:
            return tuple(int(b) for b in raw.split(",") if b.strip())

        return cls(
            in_channels=int(values["in_channels"]),
            out_channels=int(values["out_channels"]),
            init_filters=int(values["init_filters"]),
            blocks_down=blocks(values["blocks_down"]),
            blocks_up=blocks(values.get("blocks_up", "")),
            patch_size=int(values["patch_size"]),
        )


# =============================================================================
# Layer plan
# =============================================================================


@dataclass(frozen=True)
class _Conv:
    name: str
    cin: int
    cout: int
    k: int


@dataclass(frozen=True)
class _Norm:
    name: str
    channels: int


def _block_layers(prefix: str, channels: int) -> List[object]:
    return [
        _Norm(f"{prefix}.bn1", channels),
        _Conv(f"{prefix}.conv1", channels, channels, 3),
        _Norm(f"{prefix}.bn2", channels),
        _Conv(f"{prefix}.conv2", channels, channels, 3),
    ]


def layer_plan(config: ModelConfig) -> List[object]:
    """Every parameterized layer in creation order."""
    layers: List[object] = [_Conv("stem", config.in_channels, config.init_filters, 3)]
    for level, n_blocks in enumerate(config.blocks_down):
        if level > 0:
            layers.append(
                _Conv(f"enc{level}.down", config.channels(level - 1), config.channels(level), 3)
            )
        for b in range(n_blocks):
            layers.extend(_block_layers(f"enc{level}.block{b}", config.channels(level)))
    for j, n_blocks in enumerate(config.blocks_up):
        level = config.levels - 1 - j
        layers.append(_Conv(f"dec{j}.reduce", config.channels(level), config.channels(level - 1), 1))
        for b in range(n_blocks):
            layers.extend(_block_layers(f"dec{j}.block{b}", config.channels(level - 1)))
    layers.append(_Conv("head", config.init_filters, config.out_channels, 1))
    return layers


def expected_parameter_count(config: ModelConfig) -> int:
    """Closed-form parameter count."""
    f, cin, cout = config.init_filters, config.in_channels, config.out_channels

    def block(c: int) -> int:
        return 18 * c * c + 6 * c

    total = 9 * cin * f + f
    for level, n_blocks in enumerate(config.blocks_down):
        c = config.channels(level)
        if level > 0:
            total += 9 * config.channels(level - 1) * c + c
        total += n_blocks * block(c)
    for j, n_blocks in enumerate(config.blocks_up):
        level = config.levels - 1 - j
        c_hi, c_lo = config.channels(level), config.channels(level - 1)
        total += c_hi * c_lo + c_lo + n_blocks * block(c_lo)
    total += f * cout + cout
    return total


# =============================================================================
# Model
# =============================================================================


@dataclass
class Model:
    """Network parameters, batch-norm buffers and the tape of the last train-mode pass."""

    config: ModelConfig
    params: "OrderedDict[str, Tensor]"
    bn_stats: "OrderedDict[str, BatchNormStats]"
    _tape: Optional[OpTape] = field(default=None, repr=False, compare=False)
    _output: int = field(default=-1, repr=False, compare=False)

    @property
    def parameter_count(self) -> int:
        return sum(t.size for t in self.params.values())

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.params.values())).data.dtype

    def named_buffers(self) -> Iterator[Tuple[str, np.ndarray]]:
        for layer, stats in self.bn_stats.items():
            yield f"{layer}.running_mean", stats.mean
            yield f"{layer}.running_var", stats.var

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """Copies of every parameter followed by every running buffer."""
        state: "OrderedDict[str, np.ndarray]" = OrderedDict(
            (name, t.data.copy()) for name, t in self.params.items()
        )
        for name, arr in self.named_buffers():
            state[name] = arr.copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            t.data = np.array(state[name], dtype=t.data.dtype)
        for layer, stats in self.bn_stats.items():
            stats.mean = np.array(state[f"{layer}.running_mean"], dtype=stats.mean.dtype)
            stats.var = np.array(state[f"{layer}.running_var"], dtype=stats.var.dtype)
            stats.num_batches_tracked = max(stats.num_batches_tracked, 1)

    def copy(self) -> "Model":
        return Model(
            self.config,
            OrderedDict((n, t.copy()) for n, t in self.params.items()),
            OrderedDict((n, s.copy()) for n, s in self.bn_stats.items()),
        )

    def astype(self, dtype: np.dtype) -> "Model":
        """Copy with parameters and buffers cast to ``dtype`` (float64 for gradient checks)."""
        stats = OrderedDict()
        for n, s in self.bn_stats.items():
            stats[n] = BatchNormStats(s.mean.astype(dtype), s.var.astype(dtype), s.num_batches_tracked)
        return Model(
            self.config,
            OrderedDict((n, t.astype(dtype)) for n, t in self.params.items()),
            stats,
        )

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def forward(self, x: np.ndarray, mode: Mode = Mode.INFER) -> np.ndarray:
        """
        Run the network on a (n, in_channels, p, p) batch and return probabilities.

        Train mode records a tape for backward() and updates batch-norm buffers;
        infer mode is a pure function of (weights, input).
        """
        mode = Mode(mode)
        cfg = self.config
        p = cfg.patch_size
        require(
            x.ndim == 4 and x.shape[1] == cfg.in_channels and x.shape[2:] == (p, p),
            f"forward expects input of shape (n, {cfg.in_channels}, {p}, {p}), got {x.shape}",
        )
        run = _Pass(self, mode)
        v = run.input(x)
        v = run.conv("stem", v)
        skips: List[Value] = []
        for level, n_blocks in enumerate(cfg.blocks_down):
            if level > 0:
                v = run.conv(f"enc{level}.down", v, stride=2)
            for b in range(n_blocks):
                v = run.block(f"enc{level}.block{b}", v)
            skips.append(v)
        for j, n_blocks in enumerate(cfg.blocks_up):
            level = cfg.levels - 1 - j
            v = run.conv(f"dec{j}.reduce", v)
            v = run.upsample(v)
            v = run.add(v, skips[level - 1])
            for b in range(n_blocks):
                v = run.block(f"dec{j}.block{b}", v)
        v = run.conv("head", v)
        v = run.sigmoid(v)

        if mode is Mode.TRAIN:
            self._tape, self._output = run.tape, v[1]
        return v[0]

    def backward(self, loss_grad: np.ndarray) -> Dict[str, np.ndarray]:
        """
        Back-propagate d(loss)/d(probs) through the last train-mode forward.

        Returns:
            gradient per parameter name (also stored on each Tensor.grad)
        """
        if self._tape is None:
            raise ContractViolation("backward requires a preceding train-mode forward")
        param_grads, _ = self._tape.backward(self._output, loss_grad, BACKWARD_FNS)
        grads: Dict[str, np.ndarray] = OrderedDict()
        for name, t in self.params.items():
            g = param_grads.get(name)
            if g is None:
                g = np.zeros_like(t.data)
            t.grad = g.astype(t.data.dtype, copy=False)
            grads[name] = t.grad
        self._tape = None
        return grads


class _Pass:
    """One forward pass; records ops on a tape in train mode."""

    def __init__(self, model: Model, mode: Mode):
        self.model = model
        self.mode = mode
        self.tape = OpTape() if mode is Mode.TRAIN else None

    def _record(self, op: str, out: np.ndarray, ctx: object, inputs: Tuple[Value, ...], params: Tuple[str, ...]) -> Value:
        if self.tape is None:
            return out, -1
        return out, self.tape.record(op, tuple(v[1] for v in inputs), params, ctx)

    def input(self, x: np.ndarray) -> Value:
        x = x.astype(self.model.dtype, copy=False)
        return x, (self.tape.new_value() if self.tape is not None else -1)

    def conv(self, layer: str, v: Value, stride: int = 1) -> Value:
        w = self.model.params[f"{layer}.weight"].data
        b = self.model.params[f"{layer}.bias"].data
        k = w.shape[2]
        out, ctx = ops.conv2d(v[0], w, b, stride=stride, padding=(k - 1) // 2)
        return self._record("conv2d", out, ctx, (v,), (f"{layer}.weight", f"{layer}.bias"))

    def norm(self, layer: str, v: Value) -> Value:
        gamma = self.model.params[f"{layer}.gamma"].data
        beta = self.model.params[f"{layer}.beta"].data
        out, ctx = ops.batchnorm2d(v[0], gamma, beta, self.model.bn_stats[layer], mode=self.mode)
        return self._record("batchnorm2d", out, ctx, (v,), (f"{layer}.gamma", f"{layer}.beta"))

    def relu(self, v: Value) -> Value:
        out, ctx = ops.relu(v[0])
        return self._record("relu", out, ctx, (v,), ())

    def add(self, a: Value, b: Value) -> Value:
        out, ctx = ops.add_residual(a[0], b[0])
        return self._record("add_residual", out, ctx, (a, b), ())

    def upsample(self, v: Value) -> Value:
        out, ctx = ops.upsample2x(v[0])
        return self._record("upsample2x", out, ctx, (v,), ())

    def sigmoid(self, v: Value) -> Value:
        out, ctx = ops.sigmoid(v[0])
        return self._record("sigmoid", out, ctx, (v,), ())

    def block(self, prefix: str, v: Value) -> Value:
        h = self.relu(self.norm(f"{prefix}.bn1", v))
        h = self.conv(f"{prefix}.conv1", h)
        h = self.relu(self.norm(f"{prefix}.bn2", h))
        h = self.conv(f"{prefix}.conv2", h)
        return self.add(h, v)


def build_model(config: ModelConfig, seed: int = 0) -> Model:
    """Create a model with He fan-in normal conv weights, zero biases, BN gamma=1 and beta=0."""
    config.validate()
    rng = np.random.default_rng(seed)
    params: "OrderedDict[str, Tensor]" = OrderedDict()
    bn_stats: "OrderedDict[str, BatchNormStats]" = OrderedDict()

    def add(name: str, data: np.ndarray) -> None:
        if name in params:
            raise ContractViolation(f"duplicate parameter name {name}")
        params[name] = Tensor(data.astype(np.float32))

    for layer in layer_plan(config):
        if isinstance(layer, _Conv):
            fan_in = layer.cin * layer.k * layer.k
            w = rng.standard_normal((layer.cout, layer.cin, layer.k, layer.k)) * np.sqrt(2.0 / fan_in)
            add(f"{layer.name}.weight", w)
            add(f"{layer.name}.bias", np.zeros(layer.cout))
        else:
            add(f"{layer.name}.gamma", np.ones(layer.channels))
            add(f"{layer.name}.beta", np.zeros(layer.channels))
            bn_stats[layer.name] = BatchNormStats.initial(layer.channels)

    logger.debug("built model with %d parameters", sum(t.size for t in params.values()))
    return Model(config, params, bn_stats)
