import numpy as np
import pytest

from ebda.video import BitDepthConfig, Chroma, Frame, Plane, VideoFormat


@pytest.fixture(scope="session")
def bd10() -> BitDepthConfig:
    return BitDepthConfig(cbd=10, ebd=9)


@pytest.fixture(scope="session")
def frame_factory(bd10):
    """Random C420 frame builder: frame_factory(seed, w, h, reduced)."""

    def build(seed: int = 0, width: int = 32, height: int = 32,
              reduced: bool = False, bit_depth: BitDepthConfig | None = None) -> Frame:
        depth = bit_depth or bd10
        rng = np.random.default_rng(seed)
        peak = depth.ebd_max if reduced else depth.cbd_max
        fmt = VideoFormat(width, height, Chroma.C420, depth, frame_count=1)
        y = rng.integers(0, peak + 1, (height, width), dtype=np.uint16)
        cb = rng.integers(0, peak + 1, (height // 2, width // 2), dtype=np.uint16)
        cr = rng.integers(0, peak + 1, (height // 2, width // 2), dtype=np.uint16)
        return Frame(Plane(y), Plane(cb), Plane(cr), fmt, reduced=reduced)

    return build


@pytest.fixture(scope="session")
def sequence_factory(bd10):
    """Moving-texture C420 sequence builder: sequence_factory(n, w, h, seed)."""

    def build(count: int = 8, width: int = 96, height: int = 96,
              seed: int = 42, bit_depth: BitDepthConfig | None = None) -> list[Frame]:
        depth = bit_depth or bd10
        fmt = VideoFormat(width, height, Chroma.C420, depth,
                          frame_count=count, frame_rate=30.0)
        rng = np.random.default_rng(seed)
        yy, xx = np.mgrid[0:height, 0:width]
        peak = depth.cbd_max
        frames = []
        for t in range(count):
            base = peak / 2 + peak * 0.3 * np.sin((xx + 3 * t) / 14.0) \
                * np.cos((yy - 2 * t) / 11.0)
            y = np.clip(base + rng.normal(0, peak / 85, (height, width)),
                        0, peak).astype(np.uint16)
            cyy, cxx = yy[::2, ::2], xx[::2, ::2]
            cb = np.clip(peak * 0.47 + peak * 0.04 * np.sin((cxx + 2 * t) / 9.0)
                         + rng.normal(0, peak / 170, cxx.shape),
                         0, peak).astype(np.uint16)
            cr = np.clip(peak * 0.53 + peak * 0.04 * np.cos((cyy - t) / 8.0)
                         + rng.normal(0, peak / 170, cyy.shape),
                         0, peak).astype(np.uint16)
            frames.append(Frame(Plane(y), Plane(cb), Plane(cr), fmt))
        return frames

    return build
