"""Temporal convolutional network: causal dilated residual blocks + dense head.

Activations are (batch, time, channels) float64 arrays. Block i runs two
causal convolutions at dilation 2**i, each followed by ReLU and (in training)
inverted dropout, and adds the input back through an identity or 1x1
projection skip. The head reads the last timestep.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterator

import numpy as np

from lobcast.errors import ConfigError, DimensionError
from lobcast.tcn import kernels

logger = logging.getLogger(__name__)
_warned_short_rf: set[tuple[int, int]] = set()


def receptive_field(kernel_size: int, dilation_levels: int) -> int:
    """Timesteps visible to the last output: two convs per level, dilations 1..2**(L-1)."""
    if kernel_size < 2 or dilation_levels < 1:
        raise ConfigError("kernel_size must be >= 2 and dilation_levels >= 1")
    return 1 + 2 * (kernel_size - 1) * (2 ** dilation_levels - 1)


@dataclass(frozen=True)
class TcnConfig:
    input_channels: int = 40
    window_length: int = 100
    kernel_size: int = 2
    dilation_levels: int = 6
    channels_per_block: int = 32
    dropout_rate: float = 0.1
    num_classes: int = 3

    def __post_init__(self):
        for name in ("input_channels", "window_length", "channels_per_block", "num_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        rf = receptive_field(self.kernel_size, self.dilation_levels)
        if rf < self.window_length and (rf, self.window_length) not in _warned_short_rf:
            _warned_short_rf.add((rf, self.window_length))
            logger.warning("receptive field %d is shorter than the window (%d); the first %d "
                           "timesteps cannot influence the output", rf, self.window_length,
                           self.window_length - rf)

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.kernel_size, self.dilation_levels)

    def dilations(self) -> list[int]:
        return [2 ** i for i in range(self.dilation_levels)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TcnConfig":
        known = {f.name for f in fields(cls)}
        bad = set(d) - known
        if bad:
            raise ConfigError(f"unknown tcn config keys: {sorted(bad)}")
        return cls(**d)


@dataclass
class ConvParams:
    weights: np.ndarray  # (kernel_size, in_channels, out_channels)
    bias: np.ndarray  # (out_channels,)


@dataclass
class BlockParams:
    conv1: ConvParams
    conv2: ConvParams
    proj: ConvParams | None = None


@dataclass
class TcnParams:
    """Network parameters; also used as the container for gradients and Adam moments."""

    blocks: list[BlockParams]
    head_weights: np.ndarray  # (channels, num_classes)
    head_bias: np.ndarray

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """Arrays in checkpoint order: per block conv1, conv2, proj; then the head."""
        for i, b in enumerate(self.blocks):
            yield f"block{i}.conv1.weights", b.conv1.weights
            yield f"block{i}.conv1.bias", b.conv1.bias
            yield f"block{i}.conv2.weights", b.conv2.weights
            yield f"block{i}.conv2.bias", b.conv2.bias
            if b.proj is not None:
                yield f"block{i}.proj.weights", b.proj.weights
                yield f"block{i}.proj.bias", b.proj.bias
        yield "head.weights", self.head_weights
        yield "head.bias", self.head_bias

    def arrays(self) -> list[np.ndarray]:
        return [a for _, a in self.named_arrays()]

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "TcnParams":
        return self.from_arrays([fn(a) for a in self.arrays()], like=self)

    def copy(self) -> "TcnParams":
        return self.map(np.copy)

    def zeros_like(self) -> "TcnParams":
        return self.map(np.zeros_like)

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray], like: "TcnParams") -> "TcnParams":
        it = iter(arrays)
        blocks = []
        for b in like.blocks:
            c1 = ConvParams(next(it), next(it))
            c2 = ConvParams(next(it), next(it))
            proj = ConvParams(next(it), next(it)) if b.proj is not None else None
            blocks.append(BlockParams(c1, c2, proj))
        head_w, head_b = next(it), next(it)
        return cls(blocks, head_w, head_b)

    def shapes(self) -> list[tuple[int, ...]]:
        return [a.shape for a in self.arrays()]

    def num_parameters(self) -> int:
        return int(sum(a.size for a in self.arrays()))


def param_shapes(config: TcnConfig) -> list[tuple[int, ...]]:
    shapes = []
    K, C = config.kernel_size, config.channels_per_block
    cin = config.input_channels
    for _ in range(config.dilation_levels):
        shapes += [(K, cin, C), (C,), (K, C, C), (C,)]
        if cin != C:
            shapes += [(1, cin, C), (C,)]
        cin = C
    shapes += [(C, config.num_classes), (config.num_classes,)]
    return shapes


def _skeleton(config: TcnConfig) -> TcnParams:
    C = config.channels_per_block
    blocks = []
    cin = config.input_channels
    for _ in range(config.dilation_levels):
        proj = ConvParams(np.empty(0), np.empty(0)) if cin != C else None
        blocks.append(BlockParams(ConvParams(np.empty(0), np.empty(0)),
                                  ConvParams(np.empty(0), np.empty(0)), proj))
        cin = C
    return TcnParams(blocks, np.empty(0), np.empty(0))


def params_from_arrays(config: TcnConfig, arrays: list[np.ndarray]) -> TcnParams:
    expected = param_shapes(config)
    if len(arrays) != len(expected):
        raise DimensionError(f"expected {len(expected)} parameter arrays, got {len(arrays)}")
    for a, shape in zip(arrays, expected):
        if a.shape != shape:
            raise DimensionError(f"parameter shape {a.shape} does not match config {shape}")
    return TcnParams.from_arrays([np.ascontiguousarray(a, dtype=np.float64) for a in arrays],
                                 like=_skeleton(config))


def init_params(config: TcnConfig, seed: int) -> TcnParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    arrays = []
    for shape in param_shapes(config):
        if len(shape) == 1:
            arrays.append(np.zeros(shape))
            continue
        if len(shape) == 3:
            k, cin, cout = shape
            fan_in, fan_out = k * cin, k * cout
        else:
            fan_in, fan_out = shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        arrays.append(rng.uniform(-limit, limit, size=shape))
    return params_from_arrays(config, arrays)


def as_tensor3(x, name: str = "x") -> np.ndarray:
    """Validate and coerce to a C-contiguous float64 (batch, time, channels) array."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionError(f"{name} must be rank 3 (batch, time, channels), got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DimensionError(f"{name} contains non-finite values")
    return arr


def causal_conv1d(x, p: ConvParams, dilation: int) -> np.ndarray:
    """y[b,t,o] = bias[o] + sum_j sum_c w[j,c,o] * x[b, t-(K-1-j)*dilation, c], zero left padding."""
    x = as_tensor3(x)
    if p.weights.ndim != 3 or p.weights.shape[1] != x.shape[2]:
        raise DimensionError(f"input has {x.shape[2]} channels, weights expect "
                             f"{p.weights.shape[1] if p.weights.ndim == 3 else '?'}")
    if p.bias.shape != (p.weights.shape[2],):
        raise DimensionError("bias length must equal output channels")
    if dilation < 1:
        raise DimensionError("dilation must be >= 1")
    return kernels.causal_conv1d_forward(x, np.ascontiguousarray(p.weights),
                                         np.ascontiguousarray(p.bias), int(dilation))


@dataclass
class BlockCache:
    x: np.ndarray
    pre1: np.ndarray
    keep1: np.ndarray | None
    h1: np.ndarray
    pre2: np.ndarray
    keep2: np.ndarray | None


def _block_forward(x, bp: BlockParams, dilation: int, keep1, keep2, scale):
    pre1 = kernels.causal_conv1d_forward(x, bp.conv1.weights, bp.conv1.bias, dilation)
    h1 = kernels.relu_dropout_forward(pre1, keep1, scale)
    pre2 = kernels.causal_conv1d_forward(h1, bp.conv2.weights, bp.conv2.bias, dilation)
    out = kernels.relu_dropout_forward(pre2, keep2, scale)
    if bp.proj is not None:
        out += kernels.causal_conv1d_forward(x, bp.proj.weights, bp.proj.bias, 1)
    else:
        out += x
    return out, BlockCache(x, pre1, keep1, h1, pre2, keep2)


def residual_block(x, block_params: BlockParams, dilation: int,
                   dropout_mask: tuple[np.ndarray, np.ndarray] | None = None,
                   dropout_rate: float = 0.0) -> np.ndarray:
    """One residual block. ``dropout_mask`` is a (keep1, keep2) pair of boolean arrays."""
    x = as_tensor3(x)
    C = block_params.conv1.weights.shape[2]
    if block_params.conv1.weights.shape[1] != x.shape[2]:
        raise DimensionError("block input channels do not match conv1 weights")
    if block_params.proj is None and x.shape[2] != C:
        raise DimensionError("identity skip needs equal input and output channels")
    keep1 = keep2 = None
    scale = 1.0
    if dropout_mask is not None:
        keep1, keep2 = dropout_mask
        for k in (keep1, keep2):
            if k.shape != x.shape[:2] + (C,):
                raise DimensionError("dropout mask shape must be (batch, time, channels)")
        scale = 1.0 / (1.0 - dropout_rate)
    out, _ = _block_forward(x, block_params, dilation, keep1, keep2, scale)
    return out


@dataclass
class ForwardCache:
    blocks: list[BlockCache]
    final: np.ndarray  # (batch, channels) features read by the head
    scale: float


def draw_dropout_masks(config: TcnConfig, batch: int, time: int, seed: int) -> list[tuple]:
    """Keep-masks (keep1, keep2) per block, drawn block by block from one generator."""
    rng = np.random.default_rng(seed)
    shape = (batch, time, config.channels_per_block)
    rate = config.dropout_rate
    return [(rng.random(shape, dtype=np.float32) >= rate, rng.random(shape, dtype=np.float32) >= rate)
            for _ in range(config.dilation_levels)]


def forward_with_cache(x: np.ndarray, params: TcnParams, config: TcnConfig,
                       train: bool = False, seed: int | None = None):
    B, T, F = x.shape
    if F != config.input_channels or T != config.window_length:
        raise DimensionError(f"input (batch, {T}, {F}) does not match config window "
                             f"({config.window_length}, {config.input_channels})")
    if len(params.blocks) != config.dilation_levels:
        raise DimensionError("parameter block count does not match dilation_levels")
    use_dropout = train and config.dropout_rate > 0
    if use_dropout and seed is None:
        raise ValueError("training-mode forward with dropout needs a seed")
    masks = draw_dropout_masks(config, B, T, seed) if use_dropout else None
    scale = 1.0 / (1.0 - config.dropout_rate) if use_dropout else 1.0
    h = x
    caches = []
    for i, (bp, d) in enumerate(zip(params.blocks, config.dilations())):
        k1, k2 = masks[i] if masks else (None, None)
        h, cache = _block_forward(h, bp, d, k1, k2, scale)
        caches.append(cache)
    final = np.ascontiguousarray(h[:, -1, :])
    logits = final @ params.head_weights + params.head_bias
    return logits, ForwardCache(caches, final, scale)


def tcn_forward(x, params: TcnParams, config: TcnConfig, mode: str = "eval",
                seed: int | None = None) -> np.ndarray:
    """Logits (batch, num_classes). ``mode`` is ``"train"`` (seeded dropout) or ``"eval"``."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    logits, _ = forward_with_cache(as_tensor3(x), params, config, mode == "train", seed)
    return logits


def softmax_cross_entropy(logits, targets) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and softmax probabilities, via log-sum-exp."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise DimensionError("logits must be (batch, classes) and targets (batch,)")
    n, c = logits.shape
    if n and (targets.min() < 0 or targets.max() >= c or not np.issubdtype(targets.dtype, np.integer)):
        raise ValueError(f"targets must be integer class indices in [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - lse
    probs = np.exp(log_probs)
    loss = float(-log_probs[np.arange(n), targets].mean()) if n else 0.0
    return loss, probs


def predict_proba(x, params: TcnParams, config: TcnConfig, batch_size: int = 512) -> np.ndarray:
    out = []
    for s in range(0, x.shape[0], batch_size):
        logits = tcn_forward(x[s:s + batch_size], params, config, "eval")
        out.append(softmax_cross_entropy(logits, np.zeros(logits.shape[0], dtype=np.int64))[1])
    return np.concatenate(out) if out else np.empty((0, config.num_classes))
