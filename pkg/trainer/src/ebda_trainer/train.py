"""Training loop: Adam + step-decayed learning rate + mean absolute error.

Normalization is identical to inference: reduced-depth inputs are naive
up-shifted (left shift, clipped to the coded range) and divided by
2^cbd - 1; targets are divided by 2^cbd - 1. The network output is a
residual on the normalized up-shifted center block, so an untrained model
starts from the naive up-shift rather than from noise. EBDS files do not
carry bit depths, so cbd/ebd are training configuration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigMismatchError
from .formats import NetConfig, Sample, read_ebds, write_mfmr
from .model import MultiFrameNet, init_weights, tensors_from_model

__all__ = ["TrainConfig", "TrainResult", "prepare_batches", "train"]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    lr_decay: float = 0.1
    lr_decay_epochs: int = 100
    epochs: int = 200
    batch_size: int = 16
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    seed: int = 0
    checkpoint_every: int = 10
    cbd: int = 10
    ebd: int = 9

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigMismatchError("epochs and batch_size must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ConfigMismatchError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if not 1 <= self.ebd <= self.cbd <= 16:
            raise ConfigMismatchError(
                f"need 1 <= ebd <= cbd <= 16, got cbd={self.cbd} ebd={self.ebd}"
            )

    @property
    def shift(self) -> int:
        return self.cbd - self.ebd


@dataclass
class TrainResult:
    weight_path: Path
    best_path: Path
    log_path: Path
    epoch_losses: list[float] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)


def _to_tensors(samples: list[Sample], net: NetConfig,
                cfg: TrainConfig) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Stack samples into (inputs, baselines, targets) float32 tensors."""
    if net.input_frames != 3 or net.channels_per_frame != 3:
        raise ConfigMismatchError(
            "datasets carry 3-frame, 3-channel samples; network config says "
            f"{net.input_frames} frames x {net.channels_per_frame} channels"
        )
    size = samples[0].block_size
    cbd_max = (1 << cfg.cbd) - 1
    ebd_max = (1 << cfg.ebd) - 1
    inputs, baselines, targets = [], [], []
    for index, sample in enumerate(samples):
        if sample.block_size != size:
            raise ConfigMismatchError(
                f"sample {index} block size {sample.block_size} != {size}"
            )
        blocks = []
        for block in sample.inputs:
            if int(block.max()) > ebd_max:
                raise ConfigMismatchError(
                    f"sample {index} input exceeds {cfg.ebd}-bit range; "
                    f"wrong cbd/ebd for this dataset?"
                )
            up = np.minimum(block.astype(np.uint32) << cfg.shift, cbd_max)
            blocks.append(up.astype(np.float32) / cbd_max)
        if int(sample.target.max()) > cbd_max:
            raise ConfigMismatchError(
                f"sample {index} target exceeds {cfg.cbd}-bit range"
            )
        stacked = np.concatenate(blocks, axis=0)
        inputs.append(stacked)
        baselines.append(stacked[3:6])
        targets.append(sample.target.astype(np.float32) / cbd_max)
    return (torch.from_numpy(np.stack(inputs)),
            torch.from_numpy(np.stack(baselines)),
            torch.from_numpy(np.stack(targets)))


def prepare_batches(dataset_path: str | Path, net: NetConfig,
                    cfg: TrainConfig) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Load an EBDS file into normalized training tensors."""
    samples, _ = read_ebds(dataset_path)
    if not samples:
        raise ConfigMismatchError(f"{dataset_path}: dataset is empty")
    return _to_tensors(samples, net, cfg)


def _checkpoint_name(output: Path, tag: str) -> Path:
    return output.with_name(f"{output.stem}.{tag}{output.suffix}")


def train(dataset_path: str | Path, net: NetConfig, cfg: TrainConfig,
          output_path: str | Path, log_path: str | Path | None = None) -> TrainResult:
    """Train one model on one dataset and export MFMR weights.

    Writes the final weights to ``output_path``, the best-loss epoch to
    ``<stem>.best.mfmr``, checkpoints to ``<stem>.ep<NNNN>.mfmr`` every
    ``checkpoint_every`` epochs, and a per-epoch loss log CSV
    (epoch, lr, mean_l1). Fixed seeds give a reproducible loss curve
    within torch CPU determinism limits.
    """
    output_path = Path(output_path)
    log_path = Path(log_path) if log_path else output_path.with_suffix(".loss.csv")
    inputs, baselines, targets = prepare_batches(dataset_path, net, cfg)

    torch.manual_seed(cfg.seed)
    model = MultiFrameNet(net)
    init_weights(model, cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr,
                                 betas=(cfg.adam_beta1, cfg.adam_beta2))
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=cfg.lr_decay_epochs, gamma=cfg.lr_decay)
    loss_fn = torch.nn.L1Loss()
    shuffler = torch.Generator().manual_seed(cfg.seed)

    result = TrainResult(weight_path=output_path,
                         best_path=_checkpoint_name(output_path, "best"),
                         log_path=log_path)
    count = inputs.shape[0]
    best_loss = float("inf")
    with open(log_path, "w", newline="") as log:
        writer = csv.writer(log)
        writer.writerow(["epoch", "lr", "mean_l1"])
        for epoch in range(1, cfg.epochs + 1):
            order = torch.randperm(count, generator=shuffler)
            epoch_loss = 0.0
            for start in range(0, count, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                optimizer.zero_grad()
                out = model(inputs[idx], baselines[idx])
                loss = loss_fn(out, targets[idx])
                loss.backward()
                optimizer.step()
                epoch_loss += float(loss.detach()) * len(idx)
            mean_l1 = epoch_loss / count
            lr_now = optimizer.param_groups[0]["lr"]
            writer.writerow([epoch, f"{lr_now:.8g}", f"{mean_l1:.8f}"])
            result.epoch_losses.append(mean_l1)
            scheduler.step()

            if mean_l1 < best_loss:
                best_loss = mean_l1
                write_mfmr(result.best_path, net, tensors_from_model(model))
            if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
                ck = _checkpoint_name(output_path, f"ep{epoch:04d}")
                write_mfmr(ck, net, tensors_from_model(model))
                result.checkpoints.append(ck)

    write_mfmr(output_path, net, tensors_from_model(model))
    return result
