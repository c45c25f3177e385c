"""Deterministic forward execution of the multi-frame enhancement network.

Tensors are plain float32 numpy arrays shaped (channels, height, width).
The graph is a shallow head convolution, a cascade of multi-level
feature-review residual dense blocks, global feature fusion over all block
outputs, and a reconstruction convolution whose result is added to the
naive-up-shift baseline (global skip). With all-zero weights the network is
therefore exactly the identity on the baseline.

Weights travel in the MFMR container: magic "MFMR", u32 version, the
network configuration (7 u32 + 1 float32), u32 tensor count, then per
tensor a u16 name length, UTF-8 name, u8 ndim, u32 dims and float32
little-endian row-major data. Bit-exact round trips are part of the
format's contract.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    FormatError,
    InputTooSmallError,
    ModelIntegrityError,
    ParameterError,
    ShapeError,
)

__all__ = [
    "NetworkConfig",
    "Model",
    "conv2d",
    "leaky_relu",
    "mfrb_forward",
    "forward",
    "expected_layer_shapes",
    "zero_model",
    "random_model",
    "save_weights",
    "load_weights",
]

MAGIC = b"MFMR"
VERSION = 1
MIN_INPUT_SIZE = 16


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters; the weight inventory is a pure function
    of these values."""

    base_features: int = 64
    num_blocks: int = 4
    dense_layers_per_block: int = 4
    growth: int = 32
    leaky_slope: float = 0.2
    input_frames: int = 3
    channels_per_frame: int = 3

    def __post_init__(self) -> None:
        for name in ("base_features", "num_blocks", "dense_layers_per_block",
                     "growth", "input_frames", "channels_per_frame"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be positive")
        if self.input_frames % 2 == 0:
            raise ParameterError("input_frames must be odd (one center frame)")
        if self.leaky_slope <= 0:
            raise ParameterError("leaky_slope must be positive")

    @property
    def input_channels(self) -> int:
        return self.input_frames * self.channels_per_frame

    @property
    def review_channels(self) -> int:
        return self.dense_layers_per_block * self.growth


@dataclass
class Model:
    """Immutable-after-load network: config plus named weight tensors."""

    config: NetworkConfig
    weights: dict[str, np.ndarray] = field(default_factory=dict)

    def layer(self, name: str) -> np.ndarray:
        try:
            return self.weights[name]
        except KeyError:
            raise ModelIntegrityError(f"model is missing tensor {name!r}") from None


def expected_layer_shapes(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape map of every tensor the config requires."""
    f = config.base_features
    g = config.growth
    rc = config.review_channels
    shapes: dict[str, tuple[int, ...]] = {}

    def conv(name: str, out_ch: int, in_ch: int, k: int) -> None:
        shapes[f"{name}.weight"] = (out_ch, in_ch, k, k)
        shapes[f"{name}.bias"] = (out_ch,)

    conv("head", f, config.input_channels, 3)
    for b in range(config.num_blocks):
        if b > 0:
            conv(f"mfrb{b}.review", f, f + rc, 1)
        for i in range(config.dense_layers_per_block):
            conv(f"mfrb{b}.dense{i}", g, f + i * g, 3)
        conv(f"mfrb{b}.fuse", f, f + rc, 1)
    conv("gff1", f, config.num_blocks * f, 1)
    conv("gff2", f, f, 3)
    conv("recon", config.channels_per_frame, f, 3)
    return shapes


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
           name: str = "conv") -> np.ndarray:
    """Same-padded cross-correlation plus bias over a (C, H, W) tensor."""
    if x.ndim != 3:
        raise ShapeError(f"{name}: input must be (C, H, W), got {x.shape}")
    if kernel.ndim != 4:
        raise ShapeError(f"{name}: kernel must be (out, in, kh, kw), got {kernel.shape}")
    out_ch, in_ch, kh, kw = kernel.shape
    if in_ch != x.shape[0]:
        raise ShapeError(
            f"{name}: kernel expects {in_ch} input channels, tensor has {x.shape[0]}"
        )
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"{name}: kernel dims must be odd, got {kh}x{kw}")
    if bias.shape != (out_ch,):
        raise ShapeError(f"{name}: bias shape {bias.shape} != ({out_ch},)")

    _, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    if ph or pw:
        xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    else:
        xp = x
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    patches = windows.transpose(1, 2, 0, 3, 4).reshape(h * w, in_ch * kh * kw)
    wmat = kernel.reshape(out_ch, in_ch * kh * kw).T
    out = patches.astype(np.float32, copy=False) @ wmat.astype(np.float32, copy=False)
    out += bias.astype(np.float32, copy=False)
    return np.ascontiguousarray(out.T.reshape(out_ch, h, w))


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    """Elementwise x for x >= 0 else slope * x."""
    return np.where(x >= 0, x, np.float32(slope) * x)


def _pair(weights: dict[str, np.ndarray], name: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        return weights[f"{name}.weight"], weights[f"{name}.bias"]
    except KeyError as exc:
        raise ModelIntegrityError(f"missing weights for layer {name!r}") from exc


def mfrb_forward(block_input: np.ndarray, review_in: np.ndarray | None,
                 weights: dict[str, np.ndarray], config: NetworkConfig,
                 block_index: int) -> tuple[np.ndarray, np.ndarray]:
    """One feature-review residual dense block.

    The incoming review tensor (when present) is fused into the block input
    with a 1x1 convolution; D growth convolutions then each see the running
    concatenation; a 1x1 fusion maps back to the base width and the block
    input is added as a local residual. The concatenated dense outputs are
    handed to the next block as its review input.
    """
    prefix = f"mfrb{block_index}"
    feat = block_input
    if review_in is not None:
        w, b = _pair(weights, f"{prefix}.review")
        feat = conv2d(np.concatenate([block_input, review_in], axis=0), w, b,
                      name=f"{prefix}.review")
    state = feat
    dense_outs: list[np.ndarray] = []
    for i in range(config.dense_layers_per_block):
        w, b = _pair(weights, f"{prefix}.dense{i}")
        out = leaky_relu(conv2d(state, w, b, name=f"{prefix}.dense{i}"),
                         config.leaky_slope)
        dense_outs.append(out)
        state = np.concatenate([state, out], axis=0)
    w, b = _pair(weights, f"{prefix}.fuse")
    fused = conv2d(state, w, b, name=f"{prefix}.fuse")
    review_out = np.concatenate(dense_outs, axis=0)
    return fused + block_input, review_out


def forward(model: Model, aligned_input: np.ndarray,
            center_baseline: np.ndarray) -> np.ndarray:
    """Full network pass over normalized, flow-aligned input blocks.

    ``aligned_input`` concatenates warped-previous, center, and warped-next
    blocks channel-wise; ``center_baseline`` is the normalized naive
    up-shift of the center block and is added as the global skip.
    """
    cfg = model.config
    if aligned_input.ndim != 3 or aligned_input.shape[0] != cfg.input_channels:
        raise ShapeError(
            f"aligned input must be ({cfg.input_channels}, H, W), got {aligned_input.shape}"
        )
    if center_baseline.shape != (cfg.channels_per_frame,) + aligned_input.shape[1:]:
        raise ShapeError(
            f"baseline shape {center_baseline.shape} does not match input "
            f"{aligned_input.shape}"
        )
    _, h, w = aligned_input.shape
    if h < MIN_INPUT_SIZE or w < MIN_INPUT_SIZE:
        raise InputTooSmallError(
            f"network input {h}x{w} below minimum {MIN_INPUT_SIZE}x{MIN_INPUT_SIZE}"
        )

    x = aligned_input.astype(np.float32, copy=False)
    wt, bt = _pair(model.weights, "head")
    feat = conv2d(x, wt, bt, name="head")

    block_in = feat
    review: np.ndarray | None = None
    block_outs: list[np.ndarray] = []
    for b in range(cfg.num_blocks):
        block_in, review = mfrb_forward(block_in, review if b > 0 else None,
                                        model.weights, cfg, b)
        block_outs.append(block_in)

    wt, bt = _pair(model.weights, "gff1")
    fused = conv2d(np.concatenate(block_outs, axis=0), wt, bt, name="gff1")
    wt, bt = _pair(model.weights, "gff2")
    fused = conv2d(fused, wt, bt, name="gff2")
    wt, bt = _pair(model.weights, "recon")
    residual = conv2d(fused, wt, bt, name="recon")
    return residual + center_baseline.astype(np.float32, copy=False)


def zero_model(config: NetworkConfig) -> Model:
    """All-zero weights: the forward pass reduces to the global skip."""
    weights = {name: np.zeros(shape, dtype=np.float32)
               for name, shape in expected_layer_shapes(config).items()}
    return Model(config, weights)


def random_model(config: NetworkConfig, seed: int = 0, scale: float = 1.0) -> Model:
    """Fan-in-scaled random weights, mainly for tests and smoke runs."""
    rng = np.random.default_rng(seed)
    weights: dict[str, np.ndarray] = {}
    for name, shape in expected_layer_shapes(config).items():
        if len(shape) == 4:
            fan_in = shape[1] * shape[2] * shape[3]
            std = scale / np.sqrt(fan_in)
            weights[name] = rng.normal(0.0, std, size=shape).astype(np.float32)
        else:
            weights[name] = (rng.uniform(-0.01, 0.01, size=shape) * scale).astype(np.float32)
    return Model(config, weights)


def _validate_weights(config: NetworkConfig, weights: dict[str, np.ndarray],
                      source: str) -> None:
    expected = expected_layer_shapes(config)
    missing = [n for n in expected if n not in weights]
    if missing:
        raise ModelIntegrityError(f"{source}: missing tensors {missing}")
    extra = [n for n in weights if n not in expected]
    if extra:
        raise ModelIntegrityError(f"{source}: unexpected tensors {extra}")
    for name, shape in expected.items():
        if tuple(weights[name].shape) != shape:
            raise ModelIntegrityError(
                f"{source}: tensor {name!r} has shape {tuple(weights[name].shape)}, "
                f"expected {shape}"
            )


def save_weights(path: str | Path, model: Model) -> None:
    """Serialize a model to the MFMR container."""
    cfg = model.config
    _validate_weights(cfg, model.weights, "save")
    with open(path, "wb") as fout:
        fout.write(MAGIC)
        fout.write(struct.pack("<I", VERSION))
        fout.write(struct.pack(
            "<7If",
            cfg.base_features, cfg.num_blocks, cfg.dense_layers_per_block,
            cfg.growth, cfg.input_frames, cfg.channels_per_frame, 0,
            cfg.leaky_slope,
        ))
        fout.write(struct.pack("<I", len(model.weights)))
        for name, tensor in model.weights.items():
            encoded = name.encode("utf-8")
            fout.write(struct.pack("<H", len(encoded)))
            fout.write(encoded)
            fout.write(struct.pack("<B", tensor.ndim))
            fout.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fout.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, blob: bytes, source: str):
        self.blob = blob
        self.pos = 0
        self.source = source

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.blob):
            raise FormatError(f"{self.source}: truncated (need {count} bytes "
                              f"at offset {self.pos})")
        chunk = self.blob[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(path: str | Path) -> Model:
    """Load and validate a model from an MFMR file."""
    source = str(path)
    reader = _Reader(Path(path).read_bytes(), source)
    if reader.take(4) != MAGIC:
        raise FormatError(f"{source}: bad magic, not an MFMR weight file")
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    f, b, d, g, frames, cpf, _reserved, slope = reader.unpack("<7If")
    # Shortest decimal that round-trips the stored float32, so a config
    # written with slope 0.2 compares equal after reload.
    slope = float(np.format_float_positional(np.float32(slope), unique=True))
    try:
        config = NetworkConfig(
            base_features=f, num_blocks=b, dense_layers_per_block=d, growth=g,
            leaky_slope=slope, input_frames=frames, channels_per_frame=cpf,
        )
    except ParameterError as exc:
        raise FormatError(f"{source}: invalid embedded config: {exc}") from exc
    (count,) = reader.unpack("<I")
    weights: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        dims = reader.unpack(f"<{ndim}I")
        size = int(np.prod(dims)) if ndim else 1
        data = np.frombuffer(reader.take(size * 4), dtype="<f4")
        weights[name] = data.reshape(dims).astype(np.float32)
    if reader.pos != len(reader.blob):
        raise FormatError(f"{source}: {len(reader.blob) - reader.pos} trailing bytes")
    _validate_weights(config, weights, source)
    return Model(config, weights)
