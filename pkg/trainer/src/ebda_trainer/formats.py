"""Wire formats shared with the inference side: EBDS in, MFMR out.

Both containers are little-endian. The trainer never imports the inference
package; these readers/writers are the whole contract between the two. The
MFMR writer is byte-compatible with the inference engine's own writer, and
exported tensors are bit-exact float32 round trips of the in-memory values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigMismatchError, FormatError

__all__ = [
    "NetConfig",
    "Sample",
    "expected_shapes",
    "read_ebds",
    "write_mfmr",
    "read_mfmr",
]

EBDS_MAGIC = b"EBDS"
MFMR_MAGIC = b"MFMR"
VERSION = 1


@dataclass(frozen=True)
class NetConfig:
    """Architecture hyperparameters, identical semantics to the inference
    engine: they fully determine the weight inventory."""

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
                raise ConfigMismatchError(f"{name} must be positive")
        if self.input_frames % 2 == 0:
            raise ConfigMismatchError("input_frames must be odd (one center frame)")
        if self.leaky_slope <= 0:
            raise ConfigMismatchError("leaky_slope must be positive")

    @property
    def input_channels(self) -> int:
        return self.input_frames * self.channels_per_frame

    @property
    def review_channels(self) -> int:
        return self.dense_layers_per_block * self.growth


def expected_shapes(config: NetConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape map of every tensor the config requires."""
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


@dataclass(frozen=True)
class Sample:
    """One training example: three reduced-depth 4:4:4 input blocks
    (previous, current, next) and the full-depth target center block,
    all (3, size, size) uint16."""

    inputs: tuple[np.ndarray, np.ndarray, np.ndarray]
    target: np.ndarray
    sequence_id: int
    frame_index: int
    x: int
    y: int
    rotation: int

    @property
    def block_size(self) -> int:
        return self.target.shape[-1]


def read_ebds(path: str | Path) -> tuple[list[Sample], dict]:
    """Read an EBDS dataset; returns samples and the manifest dict."""
    source = str(path)
    blob = Path(path).read_bytes()
    header = struct.calcsize("<4sIIQQ")
    if len(blob) < header:
        raise FormatError(f"{source}: too short for a dataset header")
    magic, version = struct.unpack_from("<4sI", blob, 0)
    if magic != EBDS_MAGIC:
        raise FormatError(f"{source}: bad magic, not an EBDS dataset")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    qp_group, seed, count = struct.unpack_from("<IQQ", blob, 8)
    pos = header
    samples: list[Sample] = []
    for index in range(count):
        if pos + 24 > len(blob):
            raise FormatError(f"{source}: truncated meta for sample {index}")
        seq_id, frame_index, x, y, rotation, size = struct.unpack_from(
            "<6I", blob, pos)
        pos += 24
        block_bytes = 3 * size * size * 2
        blocks = []
        for _ in range(4):
            if pos + block_bytes > len(blob):
                raise FormatError(f"{source}: truncated block in sample {index}")
            data = np.frombuffer(blob, dtype="<u2", count=3 * size * size,
                                 offset=pos)
            blocks.append(data.reshape(3, size, size).astype(np.uint16))
            pos += block_bytes
        samples.append(Sample(inputs=(blocks[0], blocks[1], blocks[2]),
                              target=blocks[3], sequence_id=seq_id,
                              frame_index=frame_index, x=x, y=y,
                              rotation=rotation))
    if pos != len(blob):
        raise FormatError(f"{source}: {len(blob) - pos} trailing bytes")
    return samples, {"qp_group": qp_group, "seed": seed, "count": count}


def _validate(config: NetConfig, tensors: dict[str, np.ndarray],
              context: str) -> None:
    expected = expected_shapes(config)
    missing = sorted(set(expected) - set(tensors))
    if missing:
        raise FormatError(f"{context}: missing tensors {missing[:4]}")
    extra = sorted(set(tensors) - set(expected))
    if extra:
        raise FormatError(f"{context}: unexpected tensors {extra[:4]}")
    for name, shape in expected.items():
        if tuple(tensors[name].shape) != shape:
            raise FormatError(
                f"{context}: tensor {name!r} has shape "
                f"{tuple(tensors[name].shape)}, config requires {shape}"
            )


def write_mfmr(path: str | Path, config: NetConfig,
               tensors: dict[str, np.ndarray]) -> None:
    """Write named float32 tensors to the MFMR weight container."""
    _validate(config, tensors, f"write {path}")
    with open(path, "wb") as fout:
        fout.write(MFMR_MAGIC)
        fout.write(struct.pack("<I", VERSION))
        fout.write(struct.pack(
            "<7If",
            config.base_features, config.num_blocks,
            config.dense_layers_per_block, config.growth,
            config.input_frames, config.channels_per_frame, 0,
            config.leaky_slope,
        ))
        fout.write(struct.pack("<I", len(tensors)))
        for name, tensor in tensors.items():
            encoded = name.encode("utf-8")
            fout.write(struct.pack("<H", len(encoded)))
            fout.write(encoded)
            fout.write(struct.pack("<B", tensor.ndim))
            fout.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fout.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def read_mfmr(path: str | Path) -> tuple[NetConfig, dict[str, np.ndarray]]:
    """Read an MFMR weight file back (for resuming or parity checks)."""
    source = str(path)
    blob = Path(path).read_bytes()
    pos = 0

    def take(count: int) -> bytes:
        nonlocal pos
        if pos + count > len(blob):
            raise FormatError(f"{source}: truncated (need {count} bytes "
                              f"at offset {pos})")
        chunk = blob[pos:pos + count]
        pos += count
        return chunk

    def unpack(fmt: str):
        return struct.unpack(fmt, take(struct.calcsize(fmt)))

    if take(4) != MFMR_MAGIC:
        raise FormatError(f"{source}: bad magic, not an MFMR weight file")
    (version,) = unpack("<I")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    f, b, d, g, frames, cpf, _reserved, slope = unpack("<7If")
    # Shortest decimal round-tripping the stored float32, so 0.2 stays 0.2.
    slope = float(np.format_float_positional(np.float32(slope), unique=True))
    config = NetConfig(base_features=f, num_blocks=b,
                       dense_layers_per_block=d, growth=g, leaky_slope=slope,
                       input_frames=frames, channels_per_frame=cpf)
    (count,) = unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = unpack("<H")
        name = take(name_len).decode("utf-8")
        (ndim,) = unpack("<B")
        dims = unpack(f"<{ndim}I")
        size = int(np.prod(dims)) if ndim else 1
        data = np.frombuffer(take(size * 4), dtype="<f4")
        tensors[name] = data.reshape(dims).astype(np.float32)
    if pos != len(blob):
        raise FormatError(f"{source}: {len(blob) - pos} trailing bytes")
    _validate(config, tensors, source)
    return config, tensors
