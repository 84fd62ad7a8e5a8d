"""Per-frame convolutional encoder and the map-to-sequences projection.

Five (3x3 conv -> ReLU -> 2x2 maxpool) stages over a single-channel depth
frame, flattened and projected through a tanh affine layer to the feature
vector fed to the recurrent stack. ReLU lives inside the conv stack; tanh
only in the projection.
"""

from __future__ import annotations

import numpy as np

from .config import EncoderConfig
from .optim import ParameterStore
from .tensor import (DimensionError, Tensor, ValidationError, add, affine,
                     conv2d_same, matmul, maxpool2, relu_act, reshape,
                     tanh_act, transpose)


def philox_rng(*key) -> np.random.Generator:
    """Counter-based PRNG; identical streams across platforms."""
    ss = np.random.SeedSequence(entropy=key[0], spawn_key=tuple(key[1:]))
    return np.random.Generator(np.random.Philox(ss))


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def normalize_depth(raw: np.ndarray, min_depth: float, max_depth: float) -> np.ndarray:
    """Affine map of [min_depth, max_depth] onto [-1, 1], clamped outside."""
    if max_depth <= min_depth:
        raise ValidationError(f"degenerate depth range [{min_depth}, {max_depth}]")
    scaled = 2.0 * (np.asarray(raw, dtype=np.float64) - min_depth) / (max_depth - min_depth) - 1.0
    return np.clip(scaled, -1.0, 1.0)


def init_encoder_params(store: ParameterStore, cfg: EncoderConfig, rng: np.random.Generator):
    """Register encoder weights: normalized-uniform kernels, zero biases."""
    cin = 1
    for i, cout in enumerate(cfg.conv_channels, start=1):
        store.register(f"encoder.conv{i}.w",
                       glorot_uniform(rng, (3, 3, cin, cout), 9 * cin, 9 * cout))
        store.register(f"encoder.conv{i}.b", np.zeros(cout))
        cin = cout
    store.register("encoder.proj.w",
                   glorot_uniform(rng, (cfg.feature_dim, cfg.flat_dim),
                                  cfg.flat_dim, cfg.feature_dim))
    store.register("encoder.proj.b", np.zeros(cfg.feature_dim))


def conv_stack(frame: Tensor, store: ParameterStore, cfg: EncoderConfig) -> Tensor:
    """The five conv/pool stages; returns the final activation map."""
    h = frame
    for i in range(1, 6):
        h = relu_act(conv2d_same(h, store[f"encoder.conv{i}.w"], store[f"encoder.conv{i}.b"]))
        h = maxpool2(h)
    return h


def encode_frame(frame, store: ParameterStore, cfg: EncoderConfig) -> Tensor:
    """Depth frame -> feature vector x_t (length cfg.feature_dim)."""
    t = frame if isinstance(frame, Tensor) else Tensor(frame)
    if t.data.ndim == 2:
        t = reshape(t, (t.data.shape[0], t.data.shape[1], 1))
    if t.data.shape != (cfg.input_size, cfg.input_size, 1):
        raise DimensionError(
            f"frame shape {t.data.shape} != ({cfg.input_size}, {cfg.input_size}, 1)"
        )
    fmap = conv_stack(t, store, cfg)
    flat = reshape(fmap, (cfg.flat_dim,))
    return tanh_act(affine(store["encoder.proj.w"], flat, store["encoder.proj.b"]))


def encode_sequence(frames, store: ParameterStore, cfg: EncoderConfig) -> Tensor:
    """Encode all frames of a (T, H, W) sequence in one batched pass.

    Returns a (T, feature_dim) tensor; row t equals encode_frame(frames[t])
    up to floating-point reduction order.
    """
    t = frames if isinstance(frames, Tensor) else Tensor(frames)
    if t.data.ndim == 3:
        n, h, w = t.data.shape
        t = reshape(t, (n, h, w, 1))
    if t.data.shape[1:] != (cfg.input_size, cfg.input_size, 1):
        raise DimensionError(
            f"frame shape {t.data.shape[1:]} != ({cfg.input_size}, {cfg.input_size}, 1)"
        )
    h = t
    for i in range(1, 6):
        h = relu_act(conv2d_same(h, store[f"encoder.conv{i}.w"], store[f"encoder.conv{i}.b"]))
        h = maxpool2(h)
    flat = reshape(h, (t.data.shape[0], cfg.flat_dim))
    pre = add(matmul(flat, transpose(store["encoder.proj.w"])), store["encoder.proj.b"])
    return tanh_act(pre)


def shape_trace(cfg: EncoderConfig) -> list[tuple]:
    """Spatial/channel shape after each conv/pool stage, computed analytically."""
    side = cfg.input_size
    shapes = []
    for cout in cfg.conv_channels:
        side //= 2
        shapes.append((side, side, cout))
    return shapes
