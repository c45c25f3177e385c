"""Raw planar YUV sequence I/O and in-memory frame representation.

Frames carry explicit bit-depth bookkeeping: the coding bit depth (CBD) is
the container depth the codec operates at, while the effective bit depth
(EBD) is the range actually occupied by sample values. Files are headerless
raw planar YUV, 8-bit containers for depths up to 8 and 16-bit little-endian
containers for 9..16 bits, matching common raw-video tool conventions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    BoundsError,
    MalformedFileError,
    ParameterError,
    SampleRangeError,
    ShapeError,
)


class Chroma(enum.Enum):
    """Chroma subsampling layout of a frame."""

    C420 = "420"
    C444 = "444"


@dataclass(frozen=True)
class BitDepthConfig:
    """Coding bit depth (container) and effective bit depth (value range).

    The shift is the number of bits removed by effective-bit-depth
    down-sampling; the common operating point is cbd=10, ebd=9, shift=1.
    """

    cbd: int
    ebd: int

    def __post_init__(self) -> None:
        if not (1 <= self.ebd <= self.cbd <= 16):
            raise ParameterError(
                f"bit depths must satisfy 1 <= ebd <= cbd <= 16, got "
                f"ebd={self.ebd} cbd={self.cbd}"
            )

    @property
    def shift(self) -> int:
        return self.cbd - self.ebd

    @property
    def cbd_max(self) -> int:
        return (1 << self.cbd) - 1

    @property
    def ebd_max(self) -> int:
        return (1 << self.ebd) - 1

    @property
    def bytes_per_sample(self) -> int:
        return 1 if self.cbd <= 8 else 2


@dataclass(frozen=True)
class VideoFormat:
    """Geometry and depth of a raw sequence; frame_rate is metadata only."""

    width: int
    height: int
    chroma: Chroma
    bit_depth: BitDepthConfig
    frame_count: int
    frame_rate: float = 30.0

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ParameterError(f"bad dimensions {self.width}x{self.height}")
        if self.chroma is Chroma.C420 and (self.width % 2 or self.height % 2):
            raise ParameterError(
                f"4:2:0 requires even dimensions, got {self.width}x{self.height}"
            )
        if self.frame_count < 1:
            raise ParameterError(f"frame_count must be >= 1, got {self.frame_count}")

    @property
    def chroma_size(self) -> tuple[int, int]:
        """(width, height) of each chroma plane."""
        if self.chroma is Chroma.C420:
            return self.width // 2, self.height // 2
        return self.width, self.height

    @property
    def samples_per_frame(self) -> int:
        cw, ch = self.chroma_size
        return self.width * self.height + 2 * cw * ch

    @property
    def bytes_per_frame(self) -> int:
        return self.samples_per_frame * self.bit_depth.bytes_per_sample


@dataclass
class Plane:
    """One row-major 2D array of unsigned integer samples."""

    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise ShapeError(f"plane data must be 2D, got shape {self.data.shape}")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def copy(self) -> "Plane":
        return Plane(self.data.copy())


@dataclass
class Frame:
    """Planar YCbCr picture plus its format and an effective-depth tag.

    ``reduced`` marks a frame whose samples live in the reduced EBD range
    (<= 2^ebd - 1) rather than the full coded range (<= 2^cbd - 1).
    """

    y: Plane
    cb: Plane
    cr: Plane
    format: VideoFormat
    reduced: bool = False

    def plane(self, selector: str) -> Plane:
        try:
            return {"y": self.y, "cb": self.cb, "cr": self.cr}[selector.lower()]
        except KeyError:
            raise ParameterError(f"unknown plane selector {selector!r}") from None

    @property
    def max_sample(self) -> int:
        """Largest value allowed by the current effective-depth tag."""
        bd = self.format.bit_depth
        return bd.ebd_max if self.reduced else bd.cbd_max

    def validate(self) -> None:
        """Check plane geometry and the sample-range invariant."""
        fmt = self.format
        cw, ch = fmt.chroma_size
        if (self.y.width, self.y.height) != (fmt.width, fmt.height):
            raise ShapeError(
                f"luma plane is {self.y.width}x{self.y.height}, "
                f"format says {fmt.width}x{fmt.height}"
            )
        for name, plane in (("cb", self.cb), ("cr", self.cr)):
            if (plane.width, plane.height) != (cw, ch):
                raise ShapeError(
                    f"{name} plane is {plane.width}x{plane.height}, expected {cw}x{ch}"
                )
        limit = self.max_sample
        for name, plane in (("y", self.y), ("cb", self.cb), ("cr", self.cr)):
            peak = int(plane.data.max()) if plane.data.size else 0
            if peak > limit:
                raise SampleRangeError(
                    f"{name} plane sample {peak} exceeds {limit} "
                    f"({'reduced' if self.reduced else 'full'} range)"
                )

    def copy(self) -> "Frame":
        return Frame(self.y.copy(), self.cb.copy(), self.cr.copy(),
                     self.format, self.reduced)

    def with_planes(self, y: np.ndarray, cb: np.ndarray, cr: np.ndarray,
                    reduced: bool | None = None) -> "Frame":
        """New frame with replaced sample arrays, same format."""
        return Frame(Plane(y), Plane(cb), Plane(cr), self.format,
                     self.reduced if reduced is None else reduced)


def _container_dtype(bit_depth: BitDepthConfig) -> np.dtype:
    return np.dtype("<u2") if bit_depth.bytes_per_sample == 2 else np.dtype("u1")


def read_yuv(path: str | Path, fmt: VideoFormat) -> Iterator[Frame]:
    """Yield ``fmt.frame_count`` frames from a headerless raw YUV file.

    The file size must be an exact multiple of the per-frame byte size;
    any sample above 2^cbd - 1 raises SampleRangeError.
    """
    path = Path(path)
    actual = path.stat().st_size
    expected = fmt.bytes_per_frame * fmt.frame_count
    if actual != expected:
        raise MalformedFileError(
            f"{path}: expected {expected} bytes "
            f"({fmt.frame_count} frames x {fmt.bytes_per_frame}), found {actual}"
        )

    dtype = _container_dtype(fmt.bit_depth)
    cw, ch = fmt.chroma_size
    n_y = fmt.width * fmt.height
    n_c = cw * ch
    limit = fmt.bit_depth.cbd_max

    def frames() -> Iterator[Frame]:
        with open(path, "rb") as fin:
            for index in range(fmt.frame_count):
                raw = fin.read(fmt.bytes_per_frame)
                samples = np.frombuffer(raw, dtype=dtype).astype(np.uint16)
                peak = int(samples.max())
                if peak > limit:
                    raise SampleRangeError(
                        f"{path} frame {index}: sample {peak} exceeds "
                        f"{limit} for cbd={fmt.bit_depth.cbd}"
                    )
                y = samples[:n_y].reshape(fmt.height, fmt.width)
                cb = samples[n_y:n_y + n_c].reshape(ch, cw)
                cr = samples[n_y + n_c:].reshape(ch, cw)
                yield Frame(Plane(y), Plane(cb), Plane(cr), fmt)

    return frames()


def read_all(path: str | Path, fmt: VideoFormat) -> list[Frame]:
    """Read a whole sequence into memory."""
    return list(read_yuv(path, fmt))


def write_yuv(path: str | Path, frames: Sequence[Frame]) -> int:
    """Write frames as headerless planar YUV; returns bytes written.

    All frames must share one VideoFormat (the reduced/full tag may vary,
    samples are stored in the shared container width either way).
    """
    frames = list(frames)
    if not frames:
        raise ParameterError("refusing to write an empty frame list")
    fmt = frames[0].format
    for i, frame in enumerate(frames):
        if frame.format != fmt:
            raise ShapeError(f"frame {i} format differs from frame 0")

    dtype = _container_dtype(fmt.bit_depth)
    path = Path(path)
    written = 0
    try:
        with open(path, "wb") as fout:
            for frame in frames:
                for plane in (frame.y, frame.cb, frame.cr):
                    buf = np.ascontiguousarray(plane.data, dtype=dtype).tobytes()
                    fout.write(buf)
                    written += len(buf)
    except OSError as exc:
        raise MalformedFileError(f"failed writing {path}: {exc}") from exc
    return written


def probe_frame_count(path: str | Path, width: int, height: int,
                      chroma: Chroma, bit_depth: BitDepthConfig) -> int:
    """Infer the frame count of a raw file from its byte size."""
    probe = VideoFormat(width, height, chroma, bit_depth, frame_count=1)
    size = Path(path).stat().st_size
    per_frame = probe.bytes_per_frame
    if size == 0 or size % per_frame:
        raise MalformedFileError(
            f"{path}: size {size} is not a multiple of the "
            f"{per_frame}-byte frame size for {width}x{height} "
            f"{chroma.value} cbd={bit_depth.cbd}"
        )
    return size // per_frame


def extract_block(frame: Frame, plane_selector: str,
                  x: int, y: int, w: int, h: int) -> Plane:
    """Copy a w x h block at plane-local offset (x, y) out of a frame."""
    plane = frame.plane(plane_selector)
    if w < 1 or h < 1:
        raise ParameterError(f"block size must be positive, got {w}x{h}")
    if x < 0 or y < 0 or x + w > plane.width or y + h > plane.height:
        raise BoundsError(
            f"block x={x} y={y} w={w} h={h} outside "
            f"{plane.width}x{plane.height} plane"
        )
    return Plane(plane.data[y:y + h, x:x + w].copy())


def make_frame(y: np.ndarray, cb: np.ndarray, cr: np.ndarray,
               bit_depth: BitDepthConfig, frame_rate: float = 30.0,
               reduced: bool = False) -> Frame:
    """Build a frame plus matching format from three sample arrays."""
    h, w = y.shape
    if cb.shape != cr.shape:
        raise ShapeError(f"chroma planes differ: {cb.shape} vs {cr.shape}")
    if cb.shape == y.shape:
        chroma = Chroma.C444
    elif cb.shape == (h // 2, w // 2) and h % 2 == 0 and w % 2 == 0:
        chroma = Chroma.C420
    else:
        raise ShapeError(
            f"chroma shape {cb.shape} matches neither 4:4:4 nor 4:2:0 "
            f"for luma {y.shape}"
        )
    fmt = VideoFormat(w, h, chroma, bit_depth, frame_count=1,
                      frame_rate=frame_rate)
    return Frame(Plane(np.asarray(y, dtype=np.uint16)),
                 Plane(np.asarray(cb, dtype=np.uint16)),
                 Plane(np.asarray(cr, dtype=np.uint16)),
                 fmt, reduced=reduced)
