"""Cross-component guarantee: the trainer-side forward on exported weights
must match the inference engine on identical inputs."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .model import MultiFrameNet, load_tensors
from .formats import read_mfmr

__all__ = ["run_weights", "parity_check"]


def run_weights(weight_path: str | Path, aligned_inputs: np.ndarray,
                baselines: np.ndarray) -> np.ndarray:
    """Forward a batch through the torch net built from an MFMR file.

    ``aligned_inputs`` is (N, frames*channels, H, W) float32 normalized
    exactly as at inference; ``baselines`` is (N, channels, H, W).
    Returns float32 outputs of the same shape as ``baselines``.
    """
    config, tensors = read_mfmr(weight_path)
    model = MultiFrameNet(config)
    load_tensors(model, tensors)
    model.eval()
    with torch.no_grad():
        out = model(torch.from_numpy(np.ascontiguousarray(aligned_inputs)),
                    torch.from_numpy(np.ascontiguousarray(baselines)))
    return out.numpy().astype(np.float32)


def parity_check(weight_path: str | Path, aligned_inputs: np.ndarray,
                 baselines: np.ndarray, reference: np.ndarray) -> float:
    """Max abs difference between this forward and a reference output."""
    out = run_weights(weight_path, aligned_inputs, baselines)
    if out.shape != reference.shape:
        raise ValueError(
            f"reference shape {reference.shape} != output shape {out.shape}"
        )
    return float(np.abs(out - reference).max())
