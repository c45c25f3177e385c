"""End-to-end orchestration: QP-banded model selection, anchor vs adapted
coding runs, dataset generation, and report emission.

Each base QP yields two coded branches: the anchor (host codec on the
original, no offset) and the adapted branch (bit-shift down, encode with the
QP offset, decode, CNN restoration). A naive up-shift curve is kept as a
diagnostic. QP points fan out to a bounded worker pool; results are
canonicalized by QP before any file is written so reruns are byte-identical
at any worker count.
"""

from __future__ import annotations

import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .bitdepth import ebd_down, ebd_up_naive
from .codec import CodecConfig, EncodeResult, decode_external, encode_external, mock_codec
from .dataset import (
    QP_GROUPS,
    DatasetManifest,
    TrainingSample,
    augment_rotate,
    extract_triplets,
    write_dataset,
)
from .enhance import enhance_sequence
from .errors import ConfigurationError, EbdaError, ParameterError
from .flow import FlowParams
from .metrics import RDCurve, RDPoint, bd_psnr, bd_rate, psnr_luma, write_bd_csv, write_rd_csv
from .network import Model, NetworkConfig, load_weights
from .video import Frame, VideoFormat, read_all

__all__ = [
    "MODEL_IDS",
    "ModelSelector",
    "PipelineConfig",
    "QPResult",
    "PipelineReport",
    "select_model",
    "run_pipeline",
    "run_gen_dataset",
    "write_rd_svg",
]

MODEL_IDS = ("M1", "M2", "M3", "M4")
DEFAULT_THRESHOLDS = (24.5, 29.5, 34.5)


@dataclass(frozen=True)
class ModelSelector:
    """QP-band to weight-file mapping; bands have inclusive upper bounds."""

    model_paths: dict[str, str] = field(default_factory=dict)
    thresholds: tuple[float, float, float] = DEFAULT_THRESHOLDS

    def __post_init__(self) -> None:
        t = self.thresholds
        if len(t) != 3 or not (t[0] < t[1] < t[2]):
            raise ConfigurationError(
                f"thresholds must be three strictly increasing values, got {t}"
            )
        unknown = set(self.model_paths) - set(MODEL_IDS)
        if unknown:
            raise ConfigurationError(f"unknown model ids: {sorted(unknown)}")

    def path_for(self, model_id: str) -> str:
        try:
            return self.model_paths[model_id]
        except KeyError:
            raise ConfigurationError(
                f"no weight file configured for {model_id}"
            ) from None


def select_model(qp_base: float,
                 thresholds: tuple[float, float, float] = DEFAULT_THRESHOLDS) -> str:
    """Band assignment on the base QP, before the encoder offset."""
    if qp_base <= thresholds[0]:
        return "M1"
    if qp_base <= thresholds[1]:
        return "M2"
    if qp_base <= thresholds[2]:
        return "M3"
    return "M4"


@dataclass
class PipelineConfig:
    video: VideoFormat
    codec: CodecConfig = field(default_factory=CodecConfig)
    flow: FlowParams = field(default_factory=FlowParams)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    selector: ModelSelector = field(default_factory=ModelSelector)
    qp_list: tuple[int, ...] = (22, 27, 32, 37)
    output_dir: Path = Path("ebda-out")
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.qp_list:
            raise ConfigurationError("qp_list must not be empty")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")
        self.output_dir = Path(self.output_dir)


@dataclass
class QPResult:
    qp_base: int
    effective_qp: int
    model_id: str
    anchor: RDPoint | None = None
    ebda: RDPoint | None = None
    naive: RDPoint | None = None
    error: str | None = None


@dataclass
class PipelineReport:
    sequence: str
    qp_results: list[QPResult]
    anchor_curve: RDCurve | None
    ebda_curve: RDCurve | None
    naive_curve: RDCurve | None
    bd_rate_percent: float | None
    bd_psnr_db: float | None
    diagnostics: list[str]
    output_dir: Path

    @property
    def complete(self) -> bool:
        return all(r.error is None for r in self.qp_results)


def _mean_psnr(reference: Sequence[Frame], test: Sequence[Frame]) -> float:
    return float(np.mean([psnr_luma(a, b) for a, b in zip(reference, test)]))


def _encode_decode(cfg: CodecConfig, frames: list[Frame],
                   qp_base: int) -> tuple[list[Frame], EncodeResult]:
    """One coded round trip; cfg.qp_offset is applied here and only here."""
    fmt = frames[0].format
    if cfg.is_mock:
        qp = qp_base + cfg.qp_offset
        recon, bits = mock_codec(frames, qp)
        result = EncodeResult.build(None, bits, len(frames), fmt.frame_rate, qp)
        return recon, result
    result = encode_external(cfg, frames, qp_base)
    decoded = decode_external(cfg, result.bitstream_path, fmt, len(frames))
    if frames[0].reduced:
        limit = fmt.bit_depth.ebd_max
        decoded = [f.with_planes(np.minimum(f.y.data, limit),
                                 np.minimum(f.cb.data, limit),
                                 np.minimum(f.cr.data, limit), reduced=True)
                   for f in decoded]
    return decoded, result


def _load_models(config: PipelineConfig) -> dict[str, Model]:
    """Load every band the QP list needs; fails before any encode runs."""
    models: dict[str, Model] = {}
    for qp in config.qp_list:
        model_id = select_model(qp, config.selector.thresholds)
        if model_id in models:
            continue
        path = config.selector.path_for(model_id)
        model = load_weights(path)
        if (model.config.input_frames != 3
                or model.config.channels_per_frame != 3):
            raise ConfigurationError(
                f"{model_id} ({path}) expects "
                f"{model.config.input_frames} frames x "
                f"{model.config.channels_per_frame} channels; "
                f"the pipeline feeds 3x3"
            )
        models[model_id] = model
    return models


def _run_qp_point(config: PipelineConfig, original: list[Frame],
                  models: dict[str, Model], qp_base: int) -> QPResult:
    model_id = select_model(qp_base, config.selector.thresholds)
    result = QPResult(qp_base=qp_base, effective_qp=qp_base + config.codec.qp_offset,
                      model_id=model_id)
    try:
        shift = config.video.bit_depth.shift
        anchor_cfg = replace(config.codec, qp_offset=0)
        anchor_recon, anchor_enc = _encode_decode(anchor_cfg, original, qp_base)
        result.anchor = RDPoint(anchor_enc.bitrate_kbps,
                                _mean_psnr(original, anchor_recon))

        reduced = [ebd_down(f, shift) for f in original]
        recon, enc = _encode_decode(config.codec, reduced, qp_base)
        result.effective_qp = enc.effective_qp

        enhanced = enhance_sequence(models[model_id], recon, config.flow)
        result.ebda = RDPoint(enc.bitrate_kbps, _mean_psnr(original, enhanced))

        naive = [ebd_up_naive(f, shift) for f in recon]
        result.naive = RDPoint(enc.bitrate_kbps, _mean_psnr(original, naive))
    except EbdaError as exc:
        result.error = f"qp {qp_base}: {exc}"
    except Exception as exc:  # stage failures must not sink other QP points
        result.error = f"qp {qp_base}: unexpected {type(exc).__name__}: {exc}\n" \
            + traceback.format_exc(limit=3)
    return result


def _curve(points: list[RDPoint | None], label: str,
           diagnostics: list[str]) -> RDCurve | None:
    usable = [p for p in points if p is not None]
    if not usable:
        diagnostics.append(f"{label} curve: no usable points")
        return None
    try:
        return RDCurve(usable)
    except EbdaError as exc:
        diagnostics.append(f"{label} curve rejected: {exc}")
        return None


def run_pipeline(config: PipelineConfig, input_path: str | Path) -> PipelineReport:
    """Full evaluation run over config.qp_list; writes CSVs, a text summary,
    and an RD plot under config.output_dir."""
    input_path = Path(input_path)
    sequence = input_path.stem
    original = read_all(input_path, config.video)
    models = _load_models(config)

    if config.workers == 1:
        results = [_run_qp_point(config, original, models, qp)
                   for qp in config.qp_list]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(
                lambda qp: _run_qp_point(config, original, models, qp),
                config.qp_list))
    results.sort(key=lambda r: r.qp_base)

    diagnostics = [r.error for r in results if r.error]
    anchor_curve = _curve([r.anchor for r in results], "anchor", diagnostics)
    ebda_curve = _curve([r.ebda for r in results], "adapted", diagnostics)
    naive_curve = _curve([r.naive for r in results], "naive", diagnostics)

    rate_delta = psnr_delta = None
    if anchor_curve and ebda_curve:
        try:
            rate_delta = bd_rate(anchor_curve, ebda_curve)
            psnr_delta = bd_psnr(anchor_curve, ebda_curve)
        except EbdaError as exc:
            diagnostics.append(f"BD computation failed: {exc}")

    report = PipelineReport(
        sequence=sequence, qp_results=results, anchor_curve=anchor_curve,
        ebda_curve=ebda_curve, naive_curve=naive_curve,
        bd_rate_percent=rate_delta, bd_psnr_db=psnr_delta,
        diagnostics=diagnostics, output_dir=config.output_dir,
    )
    _write_report(config, report)
    return report


def _write_report(config: PipelineConfig, report: PipelineReport) -> None:
    outdir = config.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    codec_name = "mock" if config.codec.is_mock else "external"

    rows = []
    for r in report.qp_results:
        for branch, point, eff in (("anchor", r.anchor, r.qp_base),
                                   ("ebda", r.ebda, r.effective_qp)):
            if point is None:
                continue
            rows.append({
                "sequence": report.sequence, "codec": f"{codec_name}-{branch}",
                "qp_base": r.qp_base, "effective_qp": eff,
                "bitrate_kbps": point.bitrate, "psnr_y": point.quality,
            })
    write_rd_csv(outdir / "rd_points.csv", rows)

    write_bd_csv(outdir / "bd_summary.csv", [{
        "sequence": report.sequence, "anchor": f"{codec_name}-anchor",
        "test": f"{codec_name}-ebda",
        "bd_rate_percent": report.bd_rate_percent,
        "bd_psnr_db": report.bd_psnr_db,
    }])

    curves = {}
    if report.anchor_curve:
        curves["anchor"] = report.anchor_curve
    if report.ebda_curve:
        curves["adapted"] = report.ebda_curve
    if report.naive_curve:
        curves["naive"] = report.naive_curve
    if curves:
        write_rd_svg(outdir / "rd_plot.svg", curves,
                     title=f"{report.sequence} rate-distortion")

    lines = [
        f"sequence: {report.sequence}",
        f"codec: {codec_name} (qp offset {config.codec.qp_offset})",
        f"format: {config.video.width}x{config.video.height} "
        f"cbd={config.video.bit_depth.cbd} ebd={config.video.bit_depth.ebd}",
        "",
        f"{'qp':>4} {'eff':>4} {'model':>5} | {'anchor kbps':>12} {'psnr':>8} | "
        f"{'ebda kbps':>12} {'psnr':>8} | {'naive psnr':>10}",
    ]
    for r in report.qp_results:
        if r.error:
            lines.append(f"{r.qp_base:>4}  FAILED: {r.error.splitlines()[0]}")
            continue
        lines.append(
            f"{r.qp_base:>4} {r.effective_qp:>4} {r.model_id:>5} | "
            f"{r.anchor.bitrate:>12.3f} {r.anchor.quality:>8.3f} | "
            f"{r.ebda.bitrate:>12.3f} {r.ebda.quality:>8.3f} | "
            f"{r.naive.quality:>10.3f}"
        )
    lines.append("")
    if report.bd_rate_percent is not None:
        lines.append(f"BD-rate (adapted vs anchor): {report.bd_rate_percent:+.3f}%")
        lines.append(f"BD-PSNR (adapted vs anchor): {report.bd_psnr_db:+.4f} dB")
    else:
        lines.append("BD metrics: unavailable")
    if report.diagnostics:
        lines.append("")
        lines.append("diagnostics:")
        lines.extend(f"  - {d}" for d in report.diagnostics)
    lines.append("")
    lines.append("status: " + ("complete" if report.complete else "INCOMPLETE"))
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")


_SVG_COLORS = {"anchor": "#1f6fb2", "adapted": "#c23b22", "naive": "#8a8a8a"}


def write_rd_svg(path: str | Path, curves: dict[str, RDCurve],
                 title: str = "rate-distortion") -> None:
    """Minimal static RD plot: one polyline per curve, kbps vs dB."""
    width, height, margin = 640, 480, 60
    rates = np.concatenate([c.rates() for c in curves.values()])
    quals = np.concatenate([c.qualities() for c in curves.values()])
    r_lo, r_hi = float(rates.min()), float(rates.max())
    q_lo, q_hi = float(quals.min()), float(quals.max())
    r_span = (r_hi - r_lo) or 1.0
    q_span = (q_hi - q_lo) or 1.0

    def sx(r: float) -> float:
        return margin + (r - r_lo) / r_span * (width - 2 * margin)

    def sy(q: float) -> float:
        return height - margin - (q - q_lo) / q_span * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 16}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">bitrate (kbps)</text>',
        f'<text x="18" y="{height / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 18 {height / 2:.1f})">PSNR-Y (dB)</text>',
    ]
    for i in range(5):
        r = r_lo + r_span * i / 4
        q = q_lo + q_span * i / 4
        parts.append(f'<text x="{sx(r):.1f}" y="{height - margin + 18}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="10">{r:.1f}</text>')
        parts.append(f'<text x="{margin - 8}" y="{sy(q) + 4:.1f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">{q:.2f}</text>')
    for li, (label, curve) in enumerate(sorted(curves.items())):
        color = _SVG_COLORS.get(label, "#444444")
        pts = " ".join(f"{sx(p.bitrate):.2f},{sy(p.quality):.2f}"
                       for p in curve.points)
        dash = ' stroke-dasharray="6 4"' if label == "naive" else ""
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="2"{dash}/>')
        for p in curve.points:
            parts.append(f'<circle cx="{sx(p.bitrate):.2f}" '
                         f'cy="{sy(p.quality):.2f}" r="3" fill="{color}"/>')
        parts.append(f'<text x="{width - margin - 130}" y="{margin + 16 + 16 * li}" '
                     f'font-family="sans-serif" font-size="12" '
                     f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def run_gen_dataset(config: PipelineConfig, sequence_paths: Sequence[str | Path],
                    qp_group: int, count_per_sequence: int, seed: int,
                    output_path: str | Path, rotations: int = 4) -> Path:
    """Build one training dataset for one QP group from raw sequence pairs.

    Each source sequence is bit-shifted down, coded at the group QP (offset
    applied), and sampled; every triplet is emitted at ``rotations`` quarter
    turns, so the total is len(sequences) x count x rotations samples.
    """
    if qp_group not in QP_GROUPS:
        raise ParameterError(f"qp_group must be one of {QP_GROUPS}, got {qp_group}")
    if not 1 <= rotations <= 4:
        raise ParameterError(f"rotations must be in [1, 4], got {rotations}")
    shift = config.video.bit_depth.shift
    samples: list[TrainingSample] = []
    names = []
    for index, seq_path in enumerate(sequence_paths):
        seq_path = Path(seq_path)
        names.append(seq_path.name)
        original = read_all(seq_path, config.video)
        reduced = [ebd_down(f, shift) for f in original]
        recon, _ = _encode_decode(config.codec, reduced, qp_group)
        triplets = extract_triplets(original, recon, count_per_sequence,
                                    seed=seed + index, sequence_id=index)
        for sample in triplets:
            for k in range(rotations):
                samples.append(augment_rotate(sample, k))
    manifest = DatasetManifest(qp_group=qp_group, sample_count=len(samples),
                               seed=seed, sequences=tuple(names))
    write_dataset(samples, manifest, output_path)
    return Path(output_path)
