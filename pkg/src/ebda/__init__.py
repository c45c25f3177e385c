"""Effective bit depth adaptation toolkit.

Reduce the effective bit depth of HDR video by bit-shifting before
encoding, encode at an offset QP, and restore the original depth after
decoding with a multi-frame CNN over flow-aligned neighbor frames. The
package covers the raw-video plumbing, the bit-depth operators, motion
estimation and warping, deterministic network inference, codec wrapping
with a built-in mock codec, training-dataset construction, RD metrics, and
a batch evaluation pipeline.
"""

from .bitdepth import ebd_down, ebd_up_naive
from .codec import CodecConfig, EncodeResult, mock_codec
from .dataset import (
    BLOCK_SIZE,
    QP_GROUPS,
    DatasetManifest,
    TrainingSample,
    augment_rotate,
    extract_triplets,
    read_dataset,
    write_dataset,
    yuv420_to_444,
    yuv444_to_420,
)
from .enhance import enhance_frame, enhance_sequence
from .errors import EbdaError
from .flow import FlowField, FlowParams, estimate_flow, warp_frame
from .metrics import RDCurve, RDPoint, bd_psnr, bd_rate, psnr_luma
from .network import (
    Model,
    NetworkConfig,
    forward,
    load_weights,
    random_model,
    save_weights,
    zero_model,
)
from .pipeline import (
    ModelSelector,
    PipelineConfig,
    PipelineReport,
    run_gen_dataset,
    run_pipeline,
    select_model,
)
from .video import (
    BitDepthConfig,
    Chroma,
    Frame,
    Plane,
    VideoFormat,
    extract_block,
    make_frame,
    read_all,
    read_yuv,
    write_yuv,
)

__version__ = "0.1.0"

__all__ = [
    "BLOCK_SIZE",
    "QP_GROUPS",
    "BitDepthConfig",
    "Chroma",
    "CodecConfig",
    "DatasetManifest",
    "EbdaError",
    "EncodeResult",
    "FlowField",
    "FlowParams",
    "Frame",
    "Model",
    "ModelSelector",
    "NetworkConfig",
    "PipelineConfig",
    "PipelineReport",
    "Plane",
    "RDCurve",
    "RDPoint",
    "TrainingSample",
    "VideoFormat",
    "augment_rotate",
    "bd_psnr",
    "bd_rate",
    "ebd_down",
    "ebd_up_naive",
    "enhance_frame",
    "enhance_sequence",
    "estimate_flow",
    "extract_block",
    "extract_triplets",
    "forward",
    "load_weights",
    "make_frame",
    "mock_codec",
    "psnr_luma",
    "random_model",
    "read_all",
    "read_dataset",
    "read_yuv",
    "run_gen_dataset",
    "run_pipeline",
    "save_weights",
    "select_model",
    "warp_frame",
    "write_dataset",
    "write_yuv",
    "yuv420_to_444",
    "yuv444_to_420",
    "zero_model",
]
