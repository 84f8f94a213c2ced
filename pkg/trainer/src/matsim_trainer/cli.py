"""Command line: train an encoder, export descriptor files."""

from __future__ import annotations

import argparse
import sys

from .export import export_benchmark_descriptors, export_descriptors
from .model import EncoderConfig, build_encoder
from .train import load_checkpoint, train


def cmd_train(args) -> int:
    config = EncoderConfig(backbone=args.backbone, input_size=args.input_size,
                           learning_rate=args.lr, steps=args.steps,
                           augment_probability=args.augment_prob, seed=args.seed)
    result = train(args.dataset, config, seed=args.seed,
                   checkpoint_path=args.checkpoint, log_path=args.log)
    last = result["log"][-1] if result["log"] else {}
    print(f"trained {config.steps} steps; final window mean loss "
          f"{last.get('mean_loss', float('nan')):.4f}", file=sys.stderr)
    return 0


def cmd_export(args) -> int:
    model, config = load_checkpoint(args.checkpoint)
    if (args.dataset is None) == (args.benchmark is None):
        print("export: pass exactly one of --dataset / --benchmark", file=sys.stderr)
        return 2
    if args.dataset:
        n = export_descriptors(model, args.dataset, args.out,
                               input_size=config.input_size, mode=args.mode)
    else:
        n = export_benchmark_descriptors(model, args.benchmark, args.out,
                                         input_size=config.input_size, mode=args.mode)
    print(f"wrote {n} descriptors to {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matsim-train")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune the encoder on a dataset tree")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", default="encoder.pt")
    p.add_argument("--log", default=None, help="JSONL training log path")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backbone", choices=("smallconv", "resnet18"), default="smallconv")
    p.add_argument("--input-size", type=int, default=64)
    p.add_argument("--augment-prob", type=float, default=0.1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export", help="write a descriptor file for a dataset or benchmark")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--benchmark", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("none", "crop", "mask", "crop_mask"),
                   default="none")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
