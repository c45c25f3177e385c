"""Full-frame enhancement: align neighbors, run the network, restore depth.

The path is 4:2:0 -> 4:4:4 -> naive up-shift -> flow-align neighbors to the
center frame -> normalized network forward (tiled for large frames) ->
denormalize, clip, round -> back to 4:2:0. With all-zero weights the whole
chain collapses to the naive up-shift, which keeps the no-op case testable
bit-exactly on luma.
"""

from __future__ import annotations

import numpy as np

from .bitdepth import ebd_up_naive
from .dataset import yuv420_to_444, yuv444_to_420
from .errors import ShapeError
from .flow import FlowParams, estimate_flow, warp_frame
from .network import Model, forward
from .video import Chroma, Frame, make_frame

__all__ = [
    "TILE_SIZE",
    "TILE_OVERLAP",
    "FULL_FRAME_MAX_AREA",
    "run_tiled",
    "enhance_frame",
    "enhance_sequence",
]

TILE_SIZE = 96
TILE_OVERLAP = 16
# Frames up to 512x512 samples go through in one forward pass.
FULL_FRAME_MAX_AREA = 512 * 512


def _tile_starts(length: int, tile: int, stride: int) -> list[int]:
    """Stride grid of tile origins, last tile flush with the far edge."""
    if length <= tile:
        return [0]
    starts = list(range(0, length - tile + 1, stride))
    if starts[-1] != length - tile:
        starts.append(length - tile)
    return starts


def _axis_weights(start: int, size: int, length: int, overlap: int) -> np.ndarray:
    """Linear cross-fade ramp: 1 in the core, falling toward shared edges."""
    w = np.ones(size, dtype=np.float64)
    o = min(overlap, size)
    if start > 0:
        w[:o] = np.arange(1, o + 1, dtype=np.float64) / (o + 1)
    if start + size < length:
        w[-o:] = np.minimum(w[-o:], np.arange(o, 0, -1, dtype=np.float64) / (o + 1))
    return w


def run_tiled(model: Model, aligned_input: np.ndarray, baseline: np.ndarray,
              tile: int = TILE_SIZE, overlap: int = TILE_OVERLAP) -> np.ndarray:
    """Forward in overlapping tiles, cross-fading the overlap zones."""
    _, h, w = baseline.shape
    stride = tile - overlap
    accum = np.zeros((baseline.shape[0], h, w), dtype=np.float64)
    wsum = np.zeros((h, w), dtype=np.float64)
    for y0 in _tile_starts(h, tile, stride):
        th = min(tile, h)
        wy = _axis_weights(y0, th, h, overlap)
        for x0 in _tile_starts(w, tile, stride):
            tw = min(tile, w)
            out = forward(model, aligned_input[:, y0:y0 + th, x0:x0 + tw],
                          baseline[:, y0:y0 + th, x0:x0 + tw])
            wt = wy[:, None] * _axis_weights(x0, tw, w, overlap)[None, :]
            accum[:, y0:y0 + th, x0:x0 + tw] += out * wt
            wsum[y0:y0 + th, x0:x0 + tw] += wt
    return (accum / wsum).astype(np.float32)


def _to_444_full(frame: Frame, shift: int) -> Frame:
    full = yuv420_to_444(frame) if frame.format.chroma is Chroma.C420 else frame
    return ebd_up_naive(full, shift) if shift else full


def enhance_frame(model: Model, prev: Frame | None, cur: Frame,
                  nxt: Frame | None, flow_params: FlowParams | None = None) -> Frame:
    """Enhance the center frame of a reduced-EBD triplet to full EBD.

    Missing neighbors (sequence boundaries) are replaced by the center frame
    itself, which makes their flow exactly zero and the warp an identity.
    """
    params = flow_params or FlowParams()
    for name, neighbor in (("prev", prev), ("next", nxt)):
        if neighbor is not None and neighbor.format != cur.format:
            raise ShapeError(f"{name} frame format differs from center frame")

    fmt = cur.format
    shift = fmt.bit_depth.shift
    was_420 = fmt.chroma is Chroma.C420

    center = _to_444_full(cur, shift)

    def aligned(neighbor: Frame | None) -> Frame:
        if neighbor is None or neighbor is cur:
            return center
        full = _to_444_full(neighbor, shift)
        flow = estimate_flow(full.y, center.y, params)
        return warp_frame(full, flow)

    peak = float(fmt.bit_depth.cbd_max)
    planes = []
    for frame in (aligned(prev), center, aligned(nxt)):
        for plane in (frame.y, frame.cb, frame.cr):
            planes.append(plane.data.astype(np.float32) / peak)
    stacked = np.stack(planes)
    baseline = stacked[3:6]

    if fmt.width * fmt.height <= FULL_FRAME_MAX_AREA:
        out = forward(model, stacked, baseline)
    else:
        out = run_tiled(model, stacked, baseline)

    # Denormalize, clip, round half away from zero (values non-negative).
    samples = np.floor(np.clip(out.astype(np.float64) * peak, 0.0, peak) + 0.5)
    samples = samples.astype(np.uint16)
    result = make_frame(samples[0], samples[1], samples[2], fmt.bit_depth,
                        frame_rate=fmt.frame_rate)
    return yuv444_to_420(result) if was_420 else result


def enhance_sequence(model: Model, frames: list[Frame],
                     flow_params: FlowParams | None = None) -> list[Frame]:
    """Enhance every frame, replicating neighbors at sequence boundaries."""
    out = []
    for i, cur in enumerate(frames):
        prev = frames[i - 1] if i > 0 else None
        nxt = frames[i + 1] if i + 1 < len(frames) else None
        out.append(enhance_frame(model, prev, cur, nxt, flow_params))
    return out
