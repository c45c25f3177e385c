"""Training-triplet construction and the portable dataset container.

Samples pair three co-located reduced-EBD blocks from consecutive
reconstructed frames with the full-EBD original of the center frame, all in
4:4:4. Chroma up-conversion replicates each sample into a 2x2 block and
down-conversion takes the 2x2 mean (round half away from zero), so the
replication-then-mean round trip is exactly the identity and block tests
stay bit-exact. Blocks are stored as raw integers; normalization policy
lives with the inference and training code.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, ParameterError, ShapeError, UnusableSourceError
from .video import Chroma, Frame, Plane, VideoFormat

__all__ = [
    "BLOCK_SIZE",
    "QP_GROUPS",
    "TrainingSample",
    "DatasetManifest",
    "yuv420_to_444",
    "yuv444_to_420",
    "extract_triplets",
    "augment_rotate",
    "write_dataset",
    "read_dataset",
]

BLOCK_SIZE = 96
QP_GROUPS = (22, 27, 32, 37)

MAGIC = b"EBDS"
VERSION = 1


@dataclass
class TrainingSample:
    """Three input blocks (prev/cur/next, reduced EBD) plus the full-EBD
    target of the center frame, each (3, size, size) uint16 in 4:4:4."""

    inputs: tuple[np.ndarray, np.ndarray, np.ndarray]
    target: np.ndarray
    sequence_id: int
    frame_index: int
    x: int
    y: int
    rotation: int = 0

    @property
    def block_size(self) -> int:
        return self.target.shape[1]


@dataclass
class DatasetManifest:
    """One manifest per QP group, mirroring the four model groups."""

    qp_group: int
    sample_count: int
    seed: int
    sequences: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.qp_group not in QP_GROUPS:
            raise ParameterError(
                f"qp_group must be one of {QP_GROUPS}, got {self.qp_group}"
            )


def yuv420_to_444(frame: Frame) -> Frame:
    """Upsample chroma by nearest-neighbor 2x replication; luma untouched."""
    if frame.format.chroma is Chroma.C444:
        warnings.warn("yuv420_to_444 called on a 4:4:4 frame; returning a copy",
                      stacklevel=2)
        return frame.copy()
    fmt = replace(frame.format, chroma=Chroma.C444)
    cb = frame.cb.data.repeat(2, axis=0).repeat(2, axis=1)
    cr = frame.cr.data.repeat(2, axis=0).repeat(2, axis=1)
    return Frame(frame.y.copy(), Plane(cb), Plane(cr), fmt, frame.reduced)


def yuv444_to_420(frame: Frame) -> Frame:
    """Downsample chroma by 2x2 mean, rounding half away from zero."""
    if frame.format.chroma is Chroma.C420:
        warnings.warn("yuv444_to_420 called on a 4:2:0 frame; returning a copy",
                      stacklevel=2)
        return frame.copy()
    h, w = frame.cb.data.shape
    if h % 2 or w % 2:
        raise ShapeError(f"cannot 2x2-average odd chroma dimensions {w}x{h}")
    fmt = replace(frame.format, chroma=Chroma.C420)

    def pool(plane: np.ndarray) -> np.ndarray:
        grid = plane.astype(np.uint32).reshape(h // 2, 2, w // 2, 2)
        total = grid.sum(axis=(1, 3))
        return ((total + 2) // 4).astype(np.uint16)

    return Frame(frame.y.copy(), Plane(pool(frame.cb.data)),
                 Plane(pool(frame.cr.data)), fmt, frame.reduced)


def _block(frame444: Frame, x: int, y: int, size: int) -> np.ndarray:
    return np.stack([
        frame444.y.data[y:y + size, x:x + size],
        frame444.cb.data[y:y + size, x:x + size],
        frame444.cr.data[y:y + size, x:x + size],
    ]).astype(np.uint16)


def extract_triplets(original_seq: Sequence[Frame], recon_seq: Sequence[Frame],
                     count: int, seed: int, sequence_id: int = 0,
                     block_size: int = BLOCK_SIZE) -> list[TrainingSample]:
    """Sample ``count`` co-located triplets uniformly over frames and positions.

    The center frame index is uniform over [1, N-2] and block origins are
    uniform over the valid 4:4:4 grid; fixed seeds give identical sample
    lists regardless of the caller's environment.
    """
    if len(original_seq) != len(recon_seq):
        raise UnusableSourceError(
            f"sequence lengths differ: {len(original_seq)} vs {len(recon_seq)}"
        )
    n = len(original_seq)
    if n < 3:
        raise UnusableSourceError(f"need at least 3 frames, got {n}")
    fmt = original_seq[0].format
    if fmt.width < block_size or fmt.height < block_size:
        raise UnusableSourceError(
            f"frames {fmt.width}x{fmt.height} smaller than {block_size}-px blocks"
        )

    def to444(frame: Frame) -> Frame:
        return yuv420_to_444(frame) if frame.format.chroma is Chroma.C420 else frame

    originals = [to444(f) for f in original_seq]
    recons = [to444(f) for f in recon_seq]

    rng = np.random.default_rng(seed)
    samples: list[TrainingSample] = []
    for _ in range(count):
        center = int(rng.integers(1, n - 1))
        x = int(rng.integers(0, fmt.width - block_size + 1))
        y = int(rng.integers(0, fmt.height - block_size + 1))
        inputs = tuple(_block(recons[center + d], x, y, block_size) for d in (-1, 0, 1))
        target = _block(originals[center], x, y, block_size)
        samples.append(TrainingSample(inputs, target, sequence_id, center, x, y))
    return samples


def augment_rotate(sample: TrainingSample, k: int) -> TrainingSample:
    """Rotate all four blocks by k quarter-turns (k taken mod 4)."""
    k = k % 4
    if k == 0:
        rotate = lambda a: a.copy()
    else:
        rotate = lambda a: np.ascontiguousarray(np.rot90(a, k, axes=(1, 2)))
    return TrainingSample(
        inputs=tuple(rotate(b) for b in sample.inputs),
        target=rotate(sample.target),
        sequence_id=sample.sequence_id,
        frame_index=sample.frame_index,
        x=sample.x,
        y=sample.y,
        rotation=k,
    )


def write_dataset(samples: Sequence[TrainingSample], manifest: DatasetManifest,
                  path: str | Path) -> None:
    """Write samples to the EBDS container; the header count must match."""
    samples = list(samples)
    if manifest.sample_count != len(samples):
        raise ParameterError(
            f"manifest says {manifest.sample_count} samples, got {len(samples)}"
        )
    with open(path, "wb") as fout:
        fout.write(MAGIC)
        fout.write(struct.pack("<I", VERSION))
        fout.write(struct.pack("<IQQ", manifest.qp_group, manifest.seed,
                               len(samples)))
        for sample in samples:
            fout.write(struct.pack(
                "<6I", sample.sequence_id, sample.frame_index,
                sample.x, sample.y, sample.rotation, sample.block_size,
            ))
            for block in (*sample.inputs, sample.target):
                fout.write(np.ascontiguousarray(block, dtype="<u2").tobytes())


def read_dataset(path: str | Path) -> tuple[list[TrainingSample], DatasetManifest]:
    """Read an EBDS container back into memory, bit-exactly."""
    source = str(path)
    blob = Path(path).read_bytes()
    header = struct.calcsize("<4sI" + "IQQ")
    if len(blob) < header:
        raise FormatError(f"{source}: too short for a dataset header")
    magic, version = struct.unpack_from("<4sI", blob, 0)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic, not an EBDS dataset")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    qp_group, seed, count = struct.unpack_from("<IQQ", blob, 8)
    pos = header
    samples: list[TrainingSample] = []
    for index in range(count):
        if pos + 24 > len(blob):
            raise FormatError(f"{source}: truncated meta for sample {index}")
        seq_id, frame_index, x, y, rotation, size = struct.unpack_from("<6I", blob, pos)
        pos += 24
        block_bytes = 3 * size * size * 2
        blocks = []
        for _ in range(4):
            if pos + block_bytes > len(blob):
                raise FormatError(f"{source}: truncated block data in sample {index}")
            data = np.frombuffer(blob, dtype="<u2", count=3 * size * size, offset=pos)
            blocks.append(data.reshape(3, size, size).astype(np.uint16))
            pos += block_bytes
        samples.append(TrainingSample(
            inputs=(blocks[0], blocks[1], blocks[2]), target=blocks[3],
            sequence_id=seq_id, frame_index=frame_index, x=x, y=y,
            rotation=rotation,
        ))
    if pos != len(blob):
        raise FormatError(f"{source}: {len(blob) - pos} trailing bytes")
    manifest = DatasetManifest(qp_group=qp_group, sample_count=len(samples), seed=seed)
    return samples, manifest
