"""Luma PSNR and Bjontegaard delta rate/quality over four-point RD curves.

BD fits are classic cubic interpolation. Curves carry exactly four points in
normal use (one per base QP), where the cubic is the interpolant, so the
identity, uniform-scaling, and antisymmetry properties hold to rounding
error rather than fit error. Lossless points use a 100 dB sentinel and are
excluded from BD fits with a warning.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    InsufficientPointsError,
    NonMonotoneCurveError,
    NonOverlappingCurvesError,
    ShapeError,
)
from .video import Frame

__all__ = [
    "PSNR_SENTINEL",
    "RDPoint",
    "RDCurve",
    "psnr_luma",
    "bd_rate",
    "bd_psnr",
    "write_rd_csv",
    "write_bd_csv",
]

PSNR_SENTINEL = 100.0
RD_CSV_FIELDS = ("sequence", "codec", "qp_base", "effective_qp",
                 "bitrate_kbps", "psnr_y")
BD_CSV_FIELDS = ("sequence", "anchor", "test", "bd_rate_percent", "bd_psnr_db")


@dataclass(frozen=True)
class RDPoint:
    bitrate: float
    quality: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.bitrate) and self.bitrate > 0):
            raise NonMonotoneCurveError(f"bitrate must be > 0, got {self.bitrate}")
        if not np.isfinite(self.quality):
            raise NonMonotoneCurveError(f"quality must be finite, got {self.quality}")


@dataclass(frozen=True)
class RDCurve:
    """RD points sorted by bitrate; rate strictly increasing, quality
    non-decreasing. Short curves are representable (incomplete runs get
    reported), but BD computation requires four usable points."""

    points: tuple[RDPoint, ...]

    def __init__(self, points: Sequence[RDPoint]) -> None:
        pts = tuple(sorted(points, key=lambda p: p.bitrate))
        if not pts:
            raise NonMonotoneCurveError("curve has no points")
        for a, b in zip(pts, pts[1:]):
            if b.bitrate <= a.bitrate:
                raise NonMonotoneCurveError(
                    f"bitrates not strictly increasing: {a.bitrate} then {b.bitrate}"
                )
            if b.quality < a.quality:
                raise NonMonotoneCurveError(
                    f"quality drops from {a.quality} to {b.quality} "
                    f"as bitrate rises"
                )
        object.__setattr__(self, "points", pts)

    def rates(self) -> np.ndarray:
        return np.array([p.bitrate for p in self.points])

    def qualities(self) -> np.ndarray:
        return np.array([p.quality for p in self.points])


def psnr_luma(a: Frame, b: Frame) -> float:
    """PSNR over the Y plane only; zero MSE maps to the 100 dB sentinel."""
    if a.y.data.shape != b.y.data.shape:
        raise ShapeError(
            f"luma shapes differ: {a.y.data.shape} vs {b.y.data.shape}"
        )
    if a.format.bit_depth.cbd != b.format.bit_depth.cbd:
        raise ShapeError("frames have different coding bit depths")
    diff = a.y.data.astype(np.float64) - b.y.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_SENTINEL
    peak = float(a.format.bit_depth.cbd_max)
    return 10.0 * np.log10(peak * peak / mse)


def _usable(curve: RDCurve, label: str) -> tuple[np.ndarray, np.ndarray]:
    rates, quals = curve.rates(), curve.qualities()
    keep = quals < PSNR_SENTINEL
    if not keep.all():
        warnings.warn(
            f"{label} curve: excluding {int((~keep).sum())} lossless "
            f"sentinel point(s) from the BD fit", stacklevel=3)
    rates, quals = rates[keep], quals[keep]
    if len(rates) < 4:
        raise InsufficientPointsError(
            f"{label} curve has {len(rates)} usable points; BD needs 4"
        )
    return np.log10(rates), quals


def _bd_average(x_a: np.ndarray, y_a: np.ndarray, x_b: np.ndarray,
                y_b: np.ndarray, what: str) -> float:
    """Average (fit_b - fit_a) over the shared x-range of two cubic fits."""
    lo = max(x_a.min(), x_b.min())
    hi = min(x_a.max(), x_b.max())
    if hi <= lo:
        raise NonOverlappingCurvesError(
            f"curves share no {what} range: [{x_a.min():.4f}, {x_a.max():.4f}] "
            f"vs [{x_b.min():.4f}, {x_b.max():.4f}]"
        )
    int_a = np.polyint(np.polyfit(x_a, y_a, 3))
    int_b = np.polyint(np.polyfit(x_b, y_b, 3))
    area = (np.polyval(int_b, hi) - np.polyval(int_b, lo)) \
        - (np.polyval(int_a, hi) - np.polyval(int_a, lo))
    return float(area / (hi - lo))


def bd_rate(anchor: RDCurve, test: RDCurve) -> float:
    """Average bitrate change of test vs anchor at equal quality, percent."""
    log_ra, qa = _usable(anchor, "anchor")
    log_rt, qt = _usable(test, "test")
    d = _bd_average(qa, log_ra, qt, log_rt, "PSNR")
    return (10.0 ** d - 1.0) * 100.0


def bd_psnr(anchor: RDCurve, test: RDCurve) -> float:
    """Average quality change of test vs anchor at equal bitrate, dB."""
    log_ra, qa = _usable(anchor, "anchor")
    log_rt, qt = _usable(test, "test")
    return _bd_average(log_ra, qa, log_rt, qt, "log-rate")


def write_rd_csv(path: str | Path, rows: Sequence[dict]) -> None:
    """RD point table; floats fixed to 6 decimals so reruns are
    byte-identical."""
    with open(path, "w", newline="") as out:
        writer = csv.DictWriter(out, fieldnames=RD_CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            formatted = dict(row)
            formatted["bitrate_kbps"] = f"{row['bitrate_kbps']:.6f}"
            formatted["psnr_y"] = f"{row['psnr_y']:.6f}"
            writer.writerow(formatted)


def write_bd_csv(path: str | Path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as out:
        writer = csv.DictWriter(out, fieldnames=BD_CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            formatted = dict(row)
            for key in ("bd_rate_percent", "bd_psnr_db"):
                value = row[key]
                formatted[key] = "" if value is None else f"{value:.6f}"
            writer.writerow(formatted)
