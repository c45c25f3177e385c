import struct

import numpy as np
import pytest

from ebda_trainer.formats import EBDS_MAGIC, VERSION, NetConfig, Sample

TINY = NetConfig(base_features=16, num_blocks=2, dense_layers_per_block=2,
                 growth=8)


@pytest.fixture(scope="session")
def tiny_net() -> NetConfig:
    return TINY


@pytest.fixture(scope="session")
def tensor_factory():
    """Random float32 tensors for every name a config requires."""
    from ebda_trainer.formats import expected_shapes

    def build(config: NetConfig, seed: int = 0) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        return {name: rng.normal(0, 0.05, shape).astype(np.float32)
                for name, shape in expected_shapes(config).items()}

    return build


@pytest.fixture(scope="session")
def sample_factory():
    """Random Sample builder: 9-bit inputs, 10-bit target."""

    def build(seed: int = 0, size: int = 16, **meta) -> Sample:
        rng = np.random.default_rng(seed)
        blocks = [rng.integers(0, 512, (3, size, size), dtype=np.uint16)
                  for _ in range(3)]
        target = rng.integers(0, 1024, (3, size, size), dtype=np.uint16)
        fields = {"sequence_id": 0, "frame_index": 1, "x": 0, "y": 0,
                  "rotation": 0}
        fields.update(meta)
        return Sample(inputs=tuple(blocks), target=target, **fields)

    return build


@pytest.fixture(scope="session")
def textured_sequence():
    """Mixed-frequency moving texture with mild sensor noise, written as a
    raw video file via the inference package. Quantization error dominates
    the noise floor, so enhancement has real structure to recover."""

    def build(path, count: int = 6, width: int = 128, height: int = 128,
              seed: int = 0):
        from ebda.video import (BitDepthConfig, Chroma, Frame, Plane,
                                VideoFormat, write_yuv)

        depth = BitDepthConfig(10, 9)
        fmt = VideoFormat(width, height, Chroma.C420, depth,
                          frame_count=count, frame_rate=30.0)
        rng = np.random.default_rng(seed)
        yy, xx = np.mgrid[0:height, 0:width]
        peak = depth.cbd_max
        frames = []
        for t in range(count):
            base = (peak * 0.5
                    + peak * 0.22 * np.sin((xx + 3 * t) / 14.0)
                    * np.cos((yy - 2 * t) / 11.0)
                    + peak * 0.11 * np.sin((2 * xx - yy + 5 * t) / 23.0)
                    + peak * 0.05 * np.cos((xx + 2 * yy - 4 * t) / 7.0))
            y = np.clip(base + rng.normal(0, peak / 800, (height, width)),
                        0, peak).astype(np.uint16)
            cyy, cxx = yy[::2, ::2], xx[::2, ::2]
            cb = np.clip(peak * 0.47
                         + peak * 0.05 * np.sin((cxx + 2 * t) / 9.0)
                         + rng.normal(0, peak / 1600, cxx.shape),
                         0, peak).astype(np.uint16)
            cr = np.clip(peak * 0.53
                         + peak * 0.05 * np.cos((cyy - t) / 8.0)
                         + rng.normal(0, peak / 1600, cyy.shape),
                         0, peak).astype(np.uint16)
            frames.append(Frame(Plane(y), Plane(cb), Plane(cr), fmt))
        write_yuv(path, frames)
        return fmt

    return build


@pytest.fixture(scope="session")
def ebds_writer():
    """Hand-packed EBDS writer, independent of any reader under test."""

    def write(path, samples: list[Sample], qp_group: int = 27,
              seed: int = 0) -> None:
        with open(path, "wb") as fout:
            fout.write(EBDS_MAGIC)
            fout.write(struct.pack("<I", VERSION))
            fout.write(struct.pack("<IQQ", qp_group, seed, len(samples)))
            for sample in samples:
                fout.write(struct.pack(
                    "<6I", sample.sequence_id, sample.frame_index,
                    sample.x, sample.y, sample.rotation, sample.block_size))
                for block in (*sample.inputs, sample.target):
                    fout.write(np.ascontiguousarray(
                        block, dtype="<u2").tobytes())

    return write
