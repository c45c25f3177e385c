"""Effective-bit-depth shifting.

Down-sampling truncates with a logical right shift; the naive up-shift is a
plain left shift clipped to the coded range, with no LSB replication. That
keeps the zero-weight CNN path exactly equal to the naive path: the network
only has to reconstruct the residual the shift threw away.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidShiftError
from .video import Frame

__all__ = ["ebd_down", "ebd_up_naive"]


def _check_shift(frame: Frame, shift: int) -> None:
    if shift < 0:
        raise InvalidShiftError(f"shift must be >= 0, got {shift}")
    if shift >= frame.format.bit_depth.cbd:
        raise InvalidShiftError(
            f"shift {shift} consumes the whole {frame.format.bit_depth.cbd}-bit container"
        )


def ebd_down(frame: Frame, shift: int | None = None) -> Frame:
    """Right-shift every sample by ``shift`` bits; tags the result reduced-EBD.

    ``shift`` defaults to the cbd - ebd gap configured on the frame.
    """
    if shift is None:
        shift = frame.format.bit_depth.shift
    _check_shift(frame, shift)
    planes = [np.right_shift(p.data, shift) for p in (frame.y, frame.cb, frame.cr)]
    return frame.with_planes(*planes, reduced=True)


def ebd_up_naive(frame: Frame, shift: int | None = None) -> Frame:
    """Left-shift every sample by ``shift`` bits, clipped to 2^cbd - 1.

    ``shift`` defaults to the cbd - ebd gap configured on the frame.
    """
    if shift is None:
        shift = frame.format.bit_depth.shift
    _check_shift(frame, shift)
    limit = frame.format.bit_depth.cbd_max
    planes = [
        np.minimum(np.left_shift(p.data.astype(np.uint32), shift), limit).astype(np.uint16)
        for p in (frame.y, frame.cb, frame.cr)
    ]
    return frame.with_planes(*planes, reduced=False)
