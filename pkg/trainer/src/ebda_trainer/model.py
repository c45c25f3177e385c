"""Torch mirror of the inference engine's multi-frame restoration network.

Module attribute names are chosen so state_dict keys equal the MFMR tensor
names one for one (head, mfrb{b}.review/dense{i}/fuse, gff1, gff2, recon).
The forward pass is the same arithmetic as the numpy engine: review fusion
and both fuse convolutions are linear, only the dense convolutions carry a
leaky ReLU, each block adds a local residual, and the reconstruction is a
residual on top of the caller-supplied center baseline.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .errors import ConfigMismatchError
from .formats import NetConfig, expected_shapes

__all__ = ["MultiFrameNet", "init_weights", "tensors_from_model",
           "load_tensors"]


class _FeatureReviewBlock(nn.Module):
    def __init__(self, config: NetConfig, index: int):
        super().__init__()
        f = config.base_features
        g = config.growth
        rc = config.review_channels
        self.slope = config.leaky_slope
        self.dense_layers = config.dense_layers_per_block
        if index > 0:
            self.review = nn.Conv2d(f + rc, f, 1)
        for i in range(config.dense_layers_per_block):
            self.add_module(f"dense{i}", nn.Conv2d(f + i * g, g, 3, padding=1))
        self.fuse = nn.Conv2d(f + rc, f, 1)

    def forward(self, block_input: torch.Tensor,
                review_in: torch.Tensor | None) -> tuple[torch.Tensor, torch.Tensor]:
        feat = block_input
        if review_in is not None:
            feat = self.review(torch.cat([block_input, review_in], dim=1))
        state = feat
        dense_outs = []
        for i in range(self.dense_layers):
            conv = getattr(self, f"dense{i}")
            out = nn.functional.leaky_relu(conv(state), self.slope)
            dense_outs.append(out)
            state = torch.cat([state, out], dim=1)
        fused = self.fuse(state)
        return fused + block_input, torch.cat(dense_outs, dim=1)


class MultiFrameNet(nn.Module):
    def __init__(self, config: NetConfig):
        super().__init__()
        self.config = config
        f = config.base_features
        self.head = nn.Conv2d(config.input_channels, f, 3, padding=1)
        for b in range(config.num_blocks):
            self.add_module(f"mfrb{b}", _FeatureReviewBlock(config, b))
        self.gff1 = nn.Conv2d(config.num_blocks * f, f, 1)
        self.gff2 = nn.Conv2d(f, f, 3, padding=1)
        self.recon = nn.Conv2d(f, config.channels_per_frame, 3, padding=1)

    def forward(self, aligned_input: torch.Tensor,
                center_baseline: torch.Tensor) -> torch.Tensor:
        block_in = self.head(aligned_input)
        review = None
        block_outs = []
        for b in range(self.config.num_blocks):
            block = getattr(self, f"mfrb{b}")
            block_in, review = block(block_in, review if b > 0 else None)
            block_outs.append(block_in)
        fused = self.gff2(self.gff1(torch.cat(block_outs, dim=1)))
        return self.recon(fused) + center_baseline


def init_weights(model: MultiFrameNet, seed: int) -> None:
    """Fan-in-scaled normal initialization with a recorded seed.

    The reconstruction layer starts at zero so the untrained network is
    exactly the naive up-shift (global residual of zero); training then
    only moves away from the baseline where that lowers the loss.
    """
    gen = torch.Generator().manual_seed(seed)
    for module in model.modules():
        if isinstance(module, nn.Conv2d):
            fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
            std = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                module.weight.normal_(0.0, std, generator=gen)
                module.bias.zero_()
    with torch.no_grad():
        model.recon.weight.zero_()
        model.recon.bias.zero_()


def tensors_from_model(model: MultiFrameNet) -> dict[str, np.ndarray]:
    """state_dict as float32 numpy arrays keyed by MFMR tensor names."""
    return {name: value.detach().cpu().numpy().astype(np.float32)
            for name, value in model.state_dict().items()}


def load_tensors(model: MultiFrameNet, tensors: dict[str, np.ndarray]) -> None:
    """Load MFMR tensors into the torch module, strict on names/shapes."""
    expected = expected_shapes(model.config)
    if set(tensors) != set(expected):
        raise ConfigMismatchError(
            "tensor inventory does not match the model config"
        )
    for name, shape in expected.items():
        if tuple(tensors[name].shape) != shape:
            raise ConfigMismatchError(
                f"tensor {name!r} has shape {tuple(tensors[name].shape)}, "
                f"model requires {shape}"
            )
    state = {name: torch.from_numpy(np.ascontiguousarray(value))
             for name, value in tensors.items()}
    model.load_state_dict(state, strict=True)
