"""Command-line front end.

All parameters live in one optional YAML config file; command-line flags
override file values, which override built-in defaults. Exit status is 0
only when every requested operation (every QP point, for pipeline runs)
succeeded.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
import yaml

from .bitdepth import ebd_down, ebd_up_naive
from .codec import CodecConfig
from .dataset import QP_GROUPS
from .enhance import enhance_sequence
from .errors import ConfigurationError, EbdaError
from .flow import FlowParams, estimate_flow, write_flow
from .metrics import RDCurve, RDPoint, bd_psnr, bd_rate, psnr_luma
from .network import NetworkConfig, load_weights
from .pipeline import (
    MODEL_IDS,
    ModelSelector,
    PipelineConfig,
    run_gen_dataset,
    run_pipeline,
)
from .video import (
    BitDepthConfig,
    Chroma,
    VideoFormat,
    probe_frame_count,
    read_all,
    write_yuv,
)

__all__ = ["main"]

_TOP_KEYS = {"video", "codec", "flow", "network", "models", "qp_list",
             "output_dir", "workers"}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fin:
        data = yaml.safe_load(fin) or {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: config root must be a mapping")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigurationError(
            f"{path}: unknown config keys {sorted(unknown)}; "
            f"expected keys from {sorted(_TOP_KEYS)}"
        )
    return data


def _pick(flag, cfg: dict, key: str, default):
    """Priority: command-line flag, then config file, then default."""
    if flag is not None:
        return flag
    if key in cfg:
        return cfg[key]
    return default


def _video_format(args, cfg: dict, input_path: str) -> VideoFormat:
    video = cfg.get("video", {})
    width = _pick(args.width, video, "width", None)
    height = _pick(args.height, video, "height", None)
    if width is None or height is None:
        raise ConfigurationError(
            "video dimensions required: pass --width/--height or a config file"
        )
    chroma_txt = str(_pick(args.chroma, video, "chroma", "420"))
    try:
        chroma = Chroma(chroma_txt)
    except ValueError:
        raise ConfigurationError(
            f"chroma must be 420 or 444, got {chroma_txt!r}") from None
    depth = BitDepthConfig(cbd=int(_pick(args.cbd, video, "cbd", 10)),
                           ebd=int(_pick(args.ebd, video, "ebd", 9)))
    fps = float(_pick(args.fps, video, "frame_rate", 30.0))
    count = args.frame_count
    if count is None:
        count = probe_frame_count(input_path, int(width), int(height),
                                  chroma, depth)
    return VideoFormat(int(width), int(height), chroma, depth,
                       frame_count=int(count), frame_rate=fps)


def _codec_config(cfg: dict) -> CodecConfig:
    codec = cfg.get("codec", {})
    return CodecConfig(
        encode_template=codec.get("encode_template"),
        decode_template=codec.get("decode_template"),
        qp_offset=int(codec.get("qp_offset", -6)),
        workdir=codec.get("workdir"),
    )


def _flow_params(cfg: dict) -> FlowParams:
    flow = cfg.get("flow", {})
    defaults = FlowParams()
    return FlowParams(
        pyramid_levels=int(flow.get("pyramid_levels", defaults.pyramid_levels)),
        patch_size=int(flow.get("patch_size", defaults.patch_size)),
        patch_stride=int(flow.get("patch_stride", defaults.patch_stride)),
        iterations_per_patch=int(flow.get("iterations_per_patch",
                                          defaults.iterations_per_patch)),
        downscale_factor=float(flow.get("downscale_factor",
                                        defaults.downscale_factor)),
    )


def _network_config(cfg: dict) -> NetworkConfig:
    net = cfg.get("network", {})
    defaults = NetworkConfig()
    return NetworkConfig(
        base_features=int(net.get("base_features", defaults.base_features)),
        num_blocks=int(net.get("num_blocks", defaults.num_blocks)),
        dense_layers_per_block=int(net.get("dense_layers_per_block",
                                           defaults.dense_layers_per_block)),
        growth=int(net.get("growth", defaults.growth)),
        leaky_slope=float(net.get("leaky_slope", defaults.leaky_slope)),
        input_frames=int(net.get("input_frames", defaults.input_frames)),
        channels_per_frame=int(net.get("channels_per_frame",
                                       defaults.channels_per_frame)),
    )


def _selector(cfg: dict, overrides: list[str] | None) -> ModelSelector:
    paths = dict(cfg.get("models", {}) or {})
    for item in overrides or []:
        model_id, _, path = item.partition("=")
        if not path or model_id not in MODEL_IDS:
            raise ConfigurationError(
                f"--model expects M1=path .. M4=path, got {item!r}"
            )
        paths[model_id] = path
    return ModelSelector(model_paths=paths)


def _mark_reduced(frames):
    return [f.with_planes(f.y.data, f.cb.data, f.cr.data, reduced=True)
            for f in frames]


def _add_video_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--width", type=int)
    parser.add_argument("--height", type=int)
    parser.add_argument("--chroma", choices=["420", "444"])
    parser.add_argument("--cbd", type=int, help="coding bit depth")
    parser.add_argument("--ebd", type=int, help="effective bit depth")
    parser.add_argument("--fps", type=float)
    parser.add_argument("--frame-count", type=int,
                        help="frames to read (default: probe from file size)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebda",
        description="Effective bit depth adaptation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("downsample", help="bit-shift a sequence down to EBD")
    _add_video_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("upsample-naive", help="bit-shift a sequence back up")
    _add_video_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("enhance", help="CNN restoration of a reduced sequence")
    _add_video_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--model", required=True, help="MFMR weight file")

    p = sub.add_parser("flow", help="estimate flow between two frames")
    _add_video_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--from-index", type=int, default=0,
                   help="reference frame index (default 0)")
    p.add_argument("--to-index", type=int, default=1,
                   help="target frame index (default 1)")
    p.add_argument("--output", required=True, help="flow dump file")

    p = sub.add_parser("gen-dataset", help="build a training dataset")
    _add_video_flags(p)
    p.add_argument("--output", required=True)
    p.add_argument("--qp-group", type=int, required=True,
                   help=f"one of {QP_GROUPS}")
    p.add_argument("--count", type=int, default=100,
                   help="triplets per sequence before rotation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rotations", type=int, default=4)
    p.add_argument("inputs", nargs="+", help="raw YUV sequences")

    p = sub.add_parser("pipeline", help="full anchor-vs-adapted evaluation")
    _add_video_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--qp", type=int, action="append",
                   help="base QP (repeatable; default 22 27 32 37)")
    p.add_argument("--model", action="append", metavar="ID=PATH",
                   help="weight file override, e.g. M2=weights/m2.mfmr")

    p = sub.add_parser("bdrate", help="BD metrics between two RD CSV files")
    p.add_argument("--anchor", required=True, help="CSV with bitrate_kbps,psnr_y")
    p.add_argument("--test", required=True)
    p.add_argument("--anchor-label",
                   help="keep only rows whose codec column equals this")
    p.add_argument("--test-label")

    p = sub.add_parser("psnr", help="per-frame luma PSNR between two sequences")
    _add_video_flags(p)
    p.add_argument("--reference", required=True)
    p.add_argument("--distorted", required=True)
    return parser


def _read_rd_csv(path: str, label: str | None) -> RDCurve:
    points = []
    with open(path, newline="") as fin:
        reader = csv.DictReader(fin)
        if reader.fieldnames is None or \
                not {"bitrate_kbps", "psnr_y"} <= set(reader.fieldnames):
            raise ConfigurationError(
                f"{path}: need columns bitrate_kbps and psnr_y"
            )
        for row in reader:
            if label is not None and row.get("codec") != label:
                continue
            points.append(RDPoint(float(row["bitrate_kbps"]),
                                  float(row["psnr_y"])))
    if not points:
        raise ConfigurationError(f"{path}: no RD points matched")
    return RDCurve(points)


def _cmd_downsample(args, cfg) -> int:
    fmt = _video_format(args, cfg, args.input)
    frames = read_all(args.input, fmt)
    shift = fmt.bit_depth.shift
    write_yuv(args.output, [ebd_down(f, shift) for f in frames])
    print(f"wrote {len(frames)} reduced frames (shift {shift}) to {args.output}")
    return 0


def _cmd_upsample_naive(args, cfg) -> int:
    fmt = _video_format(args, cfg, args.input)
    frames = _mark_reduced(read_all(args.input, fmt))
    shift = fmt.bit_depth.shift
    write_yuv(args.output, [ebd_up_naive(f, shift) for f in frames])
    print(f"wrote {len(frames)} up-shifted frames to {args.output}")
    return 0


def _cmd_enhance(args, cfg) -> int:
    fmt = _video_format(args, cfg, args.input)
    frames = _mark_reduced(read_all(args.input, fmt))
    model = load_weights(args.model)
    enhanced = enhance_sequence(model, frames, _flow_params(cfg))
    write_yuv(args.output, enhanced)
    print(f"enhanced {len(frames)} frames to {args.output}")
    return 0


def _cmd_flow(args, cfg) -> int:
    fmt = _video_format(args, cfg, args.input)
    frames = read_all(args.input, fmt)
    for name, idx in (("from-index", args.from_index), ("to-index", args.to_index)):
        if not 0 <= idx < len(frames):
            raise ConfigurationError(
                f"--{name} {idx} outside sequence of {len(frames)} frames"
            )
    flow = estimate_flow(frames[args.from_index].y, frames[args.to_index].y,
                         _flow_params(cfg))
    write_flow(args.output, flow)
    mean_u = float(np.mean(np.abs(flow.u)))
    mean_v = float(np.mean(np.abs(flow.v)))
    print(f"wrote flow {flow.width}x{flow.height} to {args.output} "
          f"(mean |u| {mean_u:.3f}, mean |v| {mean_v:.3f})")
    return 0


def _cmd_gen_dataset(args, cfg) -> int:
    fmt = _video_format(args, cfg, args.inputs[0])
    config = PipelineConfig(video=fmt, codec=_codec_config(cfg),
                            network=_network_config(cfg))
    out = run_gen_dataset(config, args.inputs, args.qp_group, args.count,
                          args.seed, args.output, rotations=args.rotations)
    total = len(args.inputs) * args.count * args.rotations
    print(f"wrote {total} samples (qp group {args.qp_group}) to {out}")
    return 0


def _cmd_pipeline(args, cfg) -> int:
    fmt = _video_format(args, cfg, args.input)
    qp_list = tuple(args.qp) if args.qp else tuple(cfg.get("qp_list", (22, 27, 32, 37)))
    config = PipelineConfig(
        video=fmt,
        codec=_codec_config(cfg),
        flow=_flow_params(cfg),
        network=_network_config(cfg),
        selector=_selector(cfg, args.model),
        qp_list=qp_list,
        output_dir=Path(_pick(args.output_dir, cfg, "output_dir", "ebda-out")),
        workers=int(_pick(args.workers, cfg, "workers", 1)),
    )
    report = run_pipeline(config, args.input)
    print((config.output_dir / "summary.txt").read_text(), end="")
    return 0 if report.complete else 1


def _cmd_bdrate(args, cfg) -> int:
    anchor = _read_rd_csv(args.anchor, args.anchor_label)
    test = _read_rd_csv(args.test, args.test_label)
    print(f"BD-rate: {bd_rate(anchor, test):+.4f}%")
    print(f"BD-PSNR: {bd_psnr(anchor, test):+.4f} dB")
    return 0


def _cmd_psnr(args, cfg) -> int:
    fmt = _video_format(args, cfg, args.reference)
    ref = read_all(args.reference, fmt)
    dist = read_all(args.distorted, fmt)
    if len(ref) != len(dist):
        raise ConfigurationError(
            f"frame counts differ: {len(ref)} vs {len(dist)}"
        )
    values = [psnr_luma(a, b) for a, b in zip(ref, dist)]
    for i, value in enumerate(values):
        print(f"frame {i}: {value:.4f} dB")
    print(f"mean: {float(np.mean(values)):.4f} dB")
    return 0


_COMMANDS = {
    "downsample": _cmd_downsample,
    "upsample-naive": _cmd_upsample_naive,
    "enhance": _cmd_enhance,
    "flow": _cmd_flow,
    "gen-dataset": _cmd_gen_dataset,
    "pipeline": _cmd_pipeline,
    "bdrate": _cmd_bdrate,
    "psnr": _cmd_psnr,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(getattr(args, "config", None))
        return _COMMANDS[args.command](args, cfg)
    except EbdaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
