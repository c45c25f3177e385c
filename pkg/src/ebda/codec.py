"""External codec wrapping plus a deterministic built-in mock codec.

External encoders/decoders are spawned from command templates with
placeholder substitution; encoding stats come from the bitstream byte size,
never from encoder logs. The mock codec quantizes samples with the H.26x
style step Q = 2^((qp-4)/6) and prices the result at the empirical
zero-order entropy of the quantized indices, which is enough to give QP
sweeps the usual rate/quality shape at desk scale. Mock bitstreams are a
small container of quantized indices so decode is bit-exact by construction.
"""

from __future__ import annotations

import math
import shlex
import struct
import subprocess
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CodecExitError,
    CodecOutputMissingError,
    CodecSpawnError,
    ConfigurationError,
    FormatError,
    ParameterError,
)
from .video import (
    BitDepthConfig,
    Chroma,
    Frame,
    Plane,
    VideoFormat,
    read_all,
    write_yuv,
)

__all__ = [
    "PLACEHOLDERS",
    "CodecConfig",
    "EncodeResult",
    "encode_external",
    "decode_external",
    "mock_codec",
    "mock_encode_file",
    "mock_decode_file",
]

PLACEHOLDERS = ("input", "output", "qp", "width", "height", "frames", "fps")

MOCK_MAGIC = b"EBMK"
MOCK_VERSION = 1


@dataclass(frozen=True)
class CodecConfig:
    """Command templates for an external codec; None templates select the
    built-in mock codec. The QP offset is applied exactly once, at encode."""

    encode_template: str | None = None
    decode_template: str | None = None
    qp_offset: int = -6
    workdir: str | None = None

    def __post_init__(self) -> None:
        if self.encode_template is not None:
            _check_template(self.encode_template, required=("input", "output", "qp"))
        if self.decode_template is not None:
            _check_template(self.decode_template, required=("input", "output"))

    @property
    def is_mock(self) -> bool:
        return self.encode_template is None


@dataclass(frozen=True)
class EncodeResult:
    bitstream_path: Path | None
    total_bits: int
    bitrate_kbps: float
    effective_qp: int

    @staticmethod
    def build(bitstream_path: Path | None, total_bits: int, frame_count: int,
              fps: float, effective_qp: int) -> "EncodeResult":
        kbps = total_bits * fps / frame_count / 1000.0
        return EncodeResult(bitstream_path, total_bits, kbps, effective_qp)


def _check_template(template: str, required: Sequence[str]) -> None:
    for name in required:
        if "{" + name + "}" not in template:
            raise ConfigurationError(
                f"codec template is missing the {{{name}}} placeholder: {template!r}"
            )


class _Strict(dict):
    def __missing__(self, key: str) -> str:
        raise ConfigurationError(f"unknown placeholder {{{key}}} in codec template")


def _render(template: str, values: dict[str, object]) -> list[str]:
    """Split first, substitute per token, so quoted paths survive spaces."""
    mapping = _Strict({k: str(v) for k, v in values.items()})
    return [token.format_map(mapping) for token in shlex.split(template)]


def _run(argv: list[str], log_path: Path, stage: str) -> None:
    try:
        with open(log_path, "wb") as log:
            proc = subprocess.run(argv, stdout=log, stderr=subprocess.STDOUT)
    except (FileNotFoundError, PermissionError) as exc:
        raise CodecSpawnError(f"{stage}: cannot spawn {argv[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        tail = log_path.read_bytes()[-2000:].decode("utf-8", "replace")
        raise CodecExitError(
            f"{stage}: {argv[0]!r} exited with status {proc.returncode}; "
            f"log tail:\n{tail}"
        )


def _run_dir(cfg: CodecConfig, prefix: str) -> Path:
    base = Path(cfg.workdir) if cfg.workdir else Path(tempfile.gettempdir())
    base.mkdir(parents=True, exist_ok=True)
    return Path(tempfile.mkdtemp(prefix=prefix, dir=base))


def encode_external(cfg: CodecConfig, input_frames: Sequence[Frame],
                    qp_base: int) -> EncodeResult:
    """Write raw input, run the encode template at qp_base + offset, and
    size the produced bitstream."""
    if cfg.encode_template is None:
        raise ConfigurationError("no encode template configured (mock codec?)")
    frames = list(input_frames)
    fmt = frames[0].format
    qp = qp_base + cfg.qp_offset
    rundir = _run_dir(cfg, f"enc_qp{qp_base}_")
    input_path = rundir / "input.yuv"
    bitstream = rundir / "bitstream.bin"
    write_yuv(input_path, frames)
    argv = _render(cfg.encode_template, {
        "input": input_path, "output": bitstream, "qp": qp,
        "width": fmt.width, "height": fmt.height,
        "frames": len(frames), "fps": f"{fmt.frame_rate:g}",
    })
    _run(argv, rundir / "encode.log", "encode")
    if not bitstream.exists():
        raise CodecOutputMissingError(f"encode: no bitstream at {bitstream}")
    total_bits = bitstream.stat().st_size * 8
    return EncodeResult.build(bitstream, total_bits, len(frames),
                              fmt.frame_rate, qp)


def decode_external(cfg: CodecConfig, bitstream: str | Path,
                    fmt: VideoFormat, frame_count: int) -> list[Frame]:
    """Run the decode template and read the raw reconstruction back."""
    if cfg.decode_template is None:
        raise ConfigurationError("no decode template configured (mock codec?)")
    bitstream = Path(bitstream)
    if not bitstream.exists():
        raise CodecOutputMissingError(f"decode: bitstream {bitstream} not found")
    rundir = _run_dir(cfg, "dec_")
    recon_path = rundir / "recon.yuv"
    argv = _render(cfg.decode_template, {
        "input": bitstream, "output": recon_path, "qp": 0,
        "width": fmt.width, "height": fmt.height,
        "frames": frame_count, "fps": f"{fmt.frame_rate:g}",
    })
    _run(argv, rundir / "decode.log", "decode")
    if not recon_path.exists():
        raise CodecOutputMissingError(f"decode: no reconstruction at {recon_path}")
    frames = read_all(recon_path, replace(fmt, frame_count=frame_count))
    return frames


def _step(qp: int) -> float:
    if not 0 <= qp <= 63:
        raise ParameterError(f"qp must be in [0, 63], got {qp}")
    return 2.0 ** ((qp - 4) / 6.0)


def _quantize(data: np.ndarray, q: float, peak: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.floor(data.astype(np.float64) / q + 0.5)
    recon = np.clip(np.floor(idx * q + 0.5), 0, peak)
    return idx.astype(np.uint32), recon.astype(np.uint16)


def _entropy_bits(idx: np.ndarray) -> float:
    _, counts = np.unique(idx, return_counts=True)
    p = counts / idx.size
    return float(-(p * np.log2(p)).sum() * idx.size)


def mock_codec(frames: Sequence[Frame], qp: int) -> tuple[list[Frame], int]:
    """Quantize every plane at step 2^((qp-4)/6); price at index entropy.

    Reconstruction clips to the frame's tagged range (reduced frames stay in
    [0, 2^ebd - 1]) so the effective-depth invariant survives coding noise.
    """
    q = _step(qp)
    recon_frames: list[Frame] = []
    bits = 0.0
    for frame in frames:
        planes = []
        for plane in (frame.y, frame.cb, frame.cr):
            idx, recon = _quantize(plane.data, q, frame.max_sample)
            bits += _entropy_bits(idx)
            planes.append(recon)
        recon_frames.append(frame.with_planes(*planes))
    return recon_frames, max(1, math.ceil(bits))


def mock_encode_file(path: str | Path, frames: Sequence[Frame],
                     qp: int) -> EncodeResult:
    """Write quantized indices to a mock bitstream; bits are entropy-priced."""
    q = _step(qp)
    frames = list(frames)
    fmt = frames[0].format
    bits = 0.0
    with open(path, "wb") as out:
        out.write(MOCK_MAGIC)
        out.write(struct.pack(
            "<IiII4BIf", MOCK_VERSION, qp, fmt.width, fmt.height,
            0 if fmt.chroma is Chroma.C420 else 1,
            fmt.bit_depth.cbd, fmt.bit_depth.ebd,
            1 if frames[0].reduced else 0,
            len(frames), fmt.frame_rate,
        ))
        for frame in frames:
            for plane in (frame.y, frame.cb, frame.cr):
                idx, _ = _quantize(plane.data, q, frame.max_sample)
                bits += _entropy_bits(idx)
                out.write(np.ascontiguousarray(idx, dtype="<u4").tobytes())
    return EncodeResult.build(Path(path), max(1, math.ceil(bits)),
                              len(frames), fmt.frame_rate, qp)


def mock_decode_file(path: str | Path) -> tuple[list[Frame], int]:
    """Reconstruct frames from a mock bitstream, matching mock_codec exactly."""
    source = str(path)
    blob = Path(path).read_bytes()
    head = struct.calcsize("<4sIiII4BIf")
    if len(blob) < head or blob[:4] != MOCK_MAGIC:
        raise FormatError(f"{source}: not a mock bitstream")
    (version, qp, width, height, chroma_code, cbd, ebd, reduced,
     frame_count, fps) = struct.unpack_from("<IiII4BIf", blob, 4)
    if version != MOCK_VERSION:
        raise FormatError(f"{source}: unsupported mock bitstream version {version}")
    chroma = Chroma.C420 if chroma_code == 0 else Chroma.C444
    fmt = VideoFormat(width, height, chroma, BitDepthConfig(cbd, ebd),
                      frame_count=frame_count, frame_rate=fps)
    q = _step(qp)
    peak = fmt.bit_depth.ebd_max if reduced else fmt.bit_depth.cbd_max
    cw, ch = fmt.chroma_size
    pos = head
    frames: list[Frame] = []
    for index in range(frame_count):
        planes = []
        for w, h in ((width, height), (cw, ch), (cw, ch)):
            nbytes = w * h * 4
            if pos + nbytes > len(blob):
                raise FormatError(f"{source}: truncated plane in frame {index}")
            idx = np.frombuffer(blob, dtype="<u4", count=w * h, offset=pos)
            pos += nbytes
            recon = np.clip(np.floor(idx.astype(np.float64) * q + 0.5), 0, peak)
            planes.append(Plane(recon.astype(np.uint16).reshape(h, w)))
        frames.append(Frame(planes[0], planes[1], planes[2], fmt,
                            reduced=bool(reduced)))
    if pos != len(blob):
        raise FormatError(f"{source}: {len(blob) - pos} trailing bytes")
    return frames, qp
