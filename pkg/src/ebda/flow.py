"""Low-complexity dense motion estimation and bilinear warping.

The estimator is a coarse-to-fine, patch-based inverse search: on each
pyramid level an inverse-compositional translation solve runs for every
patch of the target image (template gradients and the 2x2 normal matrix are
fixed per patch), and the per-patch displacements are densified by
residual-weighted averaging over their footprints. There is no variational
refinement stage. The field maps target coordinates to reference sample
locations, so ``warp(reference, flow) ~ target``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError, ShapeError
from .video import Chroma, Frame, Plane

__all__ = [
    "FlowParams",
    "FlowField",
    "estimate_flow",
    "warp_frame",
    "write_flow",
    "read_flow",
]

# Tikhonov floor added to the normal-matrix diagonal; keeps textureless
# patches finite instead of dividing by a singular system.
_DIAG_EPS = 1e-3


@dataclass(frozen=True)
class FlowParams:
    """Knobs of the patch-based estimator."""

    pyramid_levels: int = 4
    patch_size: int = 8
    patch_stride: int = 4
    iterations_per_patch: int = 12
    downscale_factor: float = 0.5

    def __post_init__(self) -> None:
        if self.pyramid_levels < 1:
            raise ParameterError(f"pyramid_levels must be >= 1, got {self.pyramid_levels}")
        if self.patch_size < 4:
            raise ParameterError(f"patch_size must be >= 4, got {self.patch_size}")
        if not (1 <= self.patch_stride <= self.patch_size):
            raise ParameterError(
                f"patch_stride must be in [1, patch_size], got {self.patch_stride}"
            )
        if self.iterations_per_patch < 1:
            raise ParameterError("iterations_per_patch must be >= 1")
        if not (0.0 < self.downscale_factor < 1.0):
            raise ParameterError(
                f"downscale_factor must be in (0, 1), got {self.downscale_factor}"
            )


@dataclass
class FlowField:
    """Per-pixel fractional displacements from target to reference."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ShapeError(
                f"flow components must share one 2D shape, got {self.u.shape} / {self.v.shape}"
            )

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample ``img`` at float coordinates with clamp-to-edge borders."""
    h, w = img.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _downscale(img: np.ndarray, factor: float) -> np.ndarray:
    h, w = img.shape
    if factor == 0.5:
        h2, w2 = h // 2, w // 2
        return img[: h2 * 2, : w2 * 2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))
    h2 = max(1, int(np.floor(h * factor)))
    w2 = max(1, int(np.floor(w * factor)))
    ys = (np.arange(h2) + 0.5) * (h / h2) - 0.5
    xs = (np.arange(w2) + 0.5) * (w / w2) - 0.5
    return bilinear_sample(img, xs[None, :].repeat(h2, axis=0), ys[:, None].repeat(w2, axis=1))


def _resize_flow(u: np.ndarray, v: np.ndarray, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear-resize a flow field and rescale its magnitudes to match."""
    h2, w2 = u.shape
    ys = (np.arange(h) + 0.5) * (h2 / h) - 0.5
    xs = (np.arange(w) + 0.5) * (w2 / w) - 0.5
    gx = xs[None, :].repeat(h, axis=0)
    gy = ys[:, None].repeat(w, axis=1)
    return (
        bilinear_sample(u, gx, gy) * (w / w2),
        bilinear_sample(v, gx, gy) * (h / h2),
    )


def _patch_origins(extent: int, patch: int, stride: int) -> np.ndarray:
    """Patch top-left offsets covering [0, extent), flush to the far edge."""
    last = extent - patch
    xs = list(range(0, last + 1, stride))
    if xs[-1] != last:
        xs.append(last)
    return np.asarray(xs, dtype=np.intp)


def _level_flow(ref: np.ndarray, tgt: np.ndarray, u: np.ndarray, v: np.ndarray,
                params: FlowParams) -> tuple[np.ndarray, np.ndarray]:
    """Refine an initial flow on one pyramid level."""
    h, w = tgt.shape
    p = min(params.patch_size, h, w)
    ox = _patch_origins(w, p, params.patch_stride)
    oy = _patch_origins(h, p, params.patch_stride)
    py, px = np.meshgrid(oy, ox, indexing="ij")
    px = px.ravel()
    py = py.ravel()
    n = px.size

    windows_t = np.lib.stride_tricks.sliding_window_view(tgt, (p, p))
    templates = windows_t[py, px].reshape(n, p * p)

    gy_img, gx_img = np.gradient(tgt)
    gx = np.lib.stride_tricks.sliding_window_view(gx_img, (p, p))[py, px].reshape(n, p * p)
    gy = np.lib.stride_tricks.sliding_window_view(gy_img, (p, p))[py, px].reshape(n, p * p)

    a11 = np.sum(gx * gx, axis=1) + _DIAG_EPS
    a12 = np.sum(gx * gy, axis=1)
    a22 = np.sum(gy * gy, axis=1) + _DIAG_EPS
    det = a11 * a22 - a12 * a12

    # pixel coordinate grids per patch, displaced by the running estimate
    local = np.arange(p, dtype=np.float64)
    lx, ly = np.meshgrid(local, local)
    base_x = (px[:, None, None] + lx[None]).reshape(n, p * p)
    base_y = (py[:, None, None] + ly[None]).reshape(n, p * p)

    cx = np.minimum(px + p // 2, w - 1)
    cy = np.minimum(py + p // 2, h - 1)
    dx = u[cy, cx].astype(np.float64)
    dy = v[cy, cx].astype(np.float64)

    bound = float(max(h, w))
    err = templates  # placeholder so the residual exists even for 0 iterations
    for _ in range(params.iterations_per_patch):
        sampled = bilinear_sample(ref, base_x + dx[:, None], base_y + dy[:, None])
        err = sampled - templates
        bx = np.sum(gx * err, axis=1)
        by = np.sum(gy * err, axis=1)
        step_x = np.clip((a22 * bx - a12 * by) / det, -p, p)
        step_y = np.clip((a11 * by - a12 * bx) / det, -p, p)
        dx = np.clip(dx - step_x, -bound, bound)
        dy = np.clip(dy - step_y, -bound, bound)

    mse = np.mean(err * err, axis=1)
    weights = 1.0 / (1e-4 + mse)

    acc_u = np.zeros((h, w), dtype=np.float64)
    acc_v = np.zeros((h, w), dtype=np.float64)
    acc_w = np.zeros((h, w), dtype=np.float64)
    for i in range(n):
        sl = (slice(py[i], py[i] + p), slice(px[i], px[i] + p))
        acc_u[sl] += weights[i] * dx[i]
        acc_v[sl] += weights[i] * dy[i]
        acc_w[sl] += weights[i]
    return acc_u / acc_w, acc_v / acc_w


def estimate_flow(reference_luma: Plane, target_luma: Plane,
                  params: FlowParams | None = None) -> FlowField:
    """Dense flow such that sampling the reference at (x+u, y+v) matches the target.

    Deterministic for fixed inputs and params; pyramid levels whose smaller
    dimension drops below the minimum patch extent are skipped.
    """
    params = params or FlowParams()
    if (reference_luma.width, reference_luma.height) != (target_luma.width, target_luma.height):
        raise ShapeError(
            f"plane dimensions differ: {reference_luma.width}x{reference_luma.height} "
            f"vs {target_luma.width}x{target_luma.height}"
        )
    min_dim = min(target_luma.width, target_luma.height)
    if min_dim < 2 ** (params.pyramid_levels - 1):
        raise ParameterError(
            f"plane {target_luma.width}x{target_luma.height} too small for "
            f"{params.pyramid_levels} pyramid levels"
        )

    ref = reference_luma.data.astype(np.float64)
    tgt = target_luma.data.astype(np.float64)
    pyramid = [(ref, tgt)]
    for _ in range(params.pyramid_levels - 1):
        nxt_ref = _downscale(pyramid[-1][0], params.downscale_factor)
        if min(nxt_ref.shape) < 4:
            break
        pyramid.append((nxt_ref, _downscale(pyramid[-1][1], params.downscale_factor)))

    coarsest = pyramid[-1][1].shape
    u = np.zeros(coarsest, dtype=np.float64)
    v = np.zeros(coarsest, dtype=np.float64)
    for level in range(len(pyramid) - 1, -1, -1):
        ref_l, tgt_l = pyramid[level]
        if u.shape != tgt_l.shape:
            u, v = _resize_flow(u, v, *tgt_l.shape)
        u, v = _level_flow(ref_l, tgt_l, u, v, params)
    return FlowField(u.astype(np.float32), v.astype(np.float32))


def _warp_plane(data: np.ndarray, u: np.ndarray, v: np.ndarray, limit: int) -> np.ndarray:
    h, w = data.shape
    x = np.arange(w, dtype=np.float64)[None, :] + u
    y = np.arange(h, dtype=np.float64)[:, None] + v
    sampled = bilinear_sample(data.astype(np.float64), x, y)
    return np.clip(np.floor(sampled + 0.5), 0, limit).astype(np.uint16)


def warp_frame(frame: Frame, flow: FlowField) -> Frame:
    """Bilinear motion compensation; chroma of 4:2:0 frames uses the luma
    flow subsampled 2x and halved in magnitude."""
    if (flow.width, flow.height) != (frame.y.width, frame.y.height):
        raise ShapeError(
            f"flow {flow.width}x{flow.height} does not match luma "
            f"{frame.y.width}x{frame.y.height}"
        )
    limit = frame.max_sample
    u = flow.u.astype(np.float64)
    v = flow.v.astype(np.float64)
    y = _warp_plane(frame.y.data, u, v, limit)
    if frame.format.chroma is Chroma.C420:
        uc = u[::2, ::2] * 0.5
        vc = v[::2, ::2] * 0.5
    else:
        uc, vc = u, v
    cb = _warp_plane(frame.cb.data, uc, vc, limit)
    cr = _warp_plane(frame.cr.data, uc, vc, limit)
    return frame.with_planes(y, cb, cr)


def write_flow(path: str | Path, flow: FlowField) -> None:
    """Dump a flow field: u32 width, u32 height, then float32 LE (u, v) pairs."""
    h, w = flow.u.shape
    header = np.asarray([w, h], dtype="<u4")
    body = np.empty((h, w, 2), dtype="<f4")
    body[..., 0] = flow.u
    body[..., 1] = flow.v
    with open(path, "wb") as fout:
        fout.write(header.tobytes())
        fout.write(body.tobytes())


def read_flow(path: str | Path) -> FlowField:
    """Read a flow dump written by :func:`write_flow`."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise FormatError(f"{path}: too short for a flow header")
    w, h = np.frombuffer(raw[:8], dtype="<u4")
    expected = 8 + int(w) * int(h) * 8
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {w}x{h}, found {len(raw)}")
    body = np.frombuffer(raw[8:], dtype="<f4").reshape(int(h), int(w), 2)
    return FlowField(body[..., 0].copy(), body[..., 1].copy())
