"""Command-line training front end: one dataset in, one weight file out."""

from __future__ import annotations

import argparse
import sys

from .errors import TrainerError
from .formats import NetConfig
from .train import TrainConfig, train

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebda-train",
        description="Train a multi-frame restoration model on an EBDS dataset",
    )
    parser.add_argument("--dataset", required=True, help="EBDS dataset file")
    parser.add_argument("--output", required=True, help="MFMR weight file")
    parser.add_argument("--log", help="loss log CSV (default: <output>.loss.csv)")

    net = NetConfig()
    parser.add_argument("--features", type=int, default=net.base_features)
    parser.add_argument("--blocks", type=int, default=net.num_blocks)
    parser.add_argument("--dense", type=int, default=net.dense_layers_per_block)
    parser.add_argument("--growth", type=int, default=net.growth)
    parser.add_argument("--leaky-slope", type=float, default=net.leaky_slope)

    cfg = TrainConfig()
    parser.add_argument("--lr", type=float, default=cfg.lr)
    parser.add_argument("--epochs", type=int, default=cfg.epochs)
    parser.add_argument("--batch-size", type=int, default=cfg.batch_size)
    parser.add_argument("--seed", type=int, default=cfg.seed)
    parser.add_argument("--checkpoint-every", type=int,
                        default=cfg.checkpoint_every)
    parser.add_argument("--cbd", type=int, default=cfg.cbd,
                        help="coding bit depth of the dataset's source video")
    parser.add_argument("--ebd", type=int, default=cfg.ebd,
                        help="effective bit depth of the reduced inputs")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        net = NetConfig(base_features=args.features, num_blocks=args.blocks,
                        dense_layers_per_block=args.dense, growth=args.growth,
                        leaky_slope=args.leaky_slope)
        cfg = TrainConfig(lr=args.lr, epochs=args.epochs,
                          batch_size=args.batch_size, seed=args.seed,
                          checkpoint_every=args.checkpoint_every,
                          cbd=args.cbd, ebd=args.ebd)
        result = train(args.dataset, net, cfg, args.output, args.log)
    except (TrainerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    first, last = result.epoch_losses[0], result.epoch_losses[-1]
    print(f"trained {cfg.epochs} epochs: mean l1 {first:.6f} -> {last:.6f}")
    print(f"weights: {result.weight_path}")
    print(f"best:    {result.best_path}")
    print(f"log:     {result.log_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
