"""Training side of the effective bit depth adaptation toolkit.

Consumes EBDS dataset files, produces MFMR weight files; the inference
package is a separate install and is never imported here.
"""

from .errors import ConfigMismatchError, FormatError, TrainerError
from .formats import NetConfig, Sample, expected_shapes, read_ebds, read_mfmr, write_mfmr
from .model import MultiFrameNet, init_weights, load_tensors, tensors_from_model
from .parity import parity_check, run_weights
from .train import TrainConfig, TrainResult, prepare_batches, train

__version__ = "0.1.0"

__all__ = [
    "TrainerError",
    "FormatError",
    "ConfigMismatchError",
    "NetConfig",
    "Sample",
    "expected_shapes",
    "read_ebds",
    "read_mfmr",
    "write_mfmr",
    "MultiFrameNet",
    "init_weights",
    "load_tensors",
    "tensors_from_model",
    "parity_check",
    "run_weights",
    "TrainConfig",
    "TrainResult",
    "prepare_batches",
    "train",
]
