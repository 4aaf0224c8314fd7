"""Command-line entry points: ``trainer-adapter train`` and ``infer``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .adapter import InferenceOutcome, TrainRunConfig, run_inference, run_training
from .errors import LayoutError, TrainerError

EXIT_OK = 0
EXIT_TRAINER = 1
EXIT_INPUT = 2
EXIT_IO = 3


def _parse_overrides(pairs) -> dict[str, float]:
    overrides = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep:
            raise ValueError(f"override must look like key=value, got {pair!r}")
        try:
            overrides[key] = float(value)
        except ValueError as exc:
            raise ValueError(f"override {key!r} needs a numeric value") from exc
    return overrides


def cmd_train(args) -> int:
    config = TrainRunConfig(
        layout_dir=Path(args.layout),
        out_dir=Path(args.out),
        checkpoint=args.checkpoint,
        epochs=args.epochs,
        image_size=args.image_size,
        batch_size=args.batch_size,
        seed=args.seed,
        overrides=_parse_overrides(args.override),
    )
    outcome = run_training(config)
    print(f"trained {args.epochs} epochs; weights at {outcome.weights}")
    print(f"epoch log at {outcome.epoch_log}")
    return EXIT_OK


def cmd_infer(args) -> int:
    outcome: InferenceOutcome = run_inference(
        args.weights, args.val_list, args.out, conf_floor=args.conf
    )
    print(
        f"wrote {outcome.detections} detections for {outcome.images} images "
        f"to {outcome.predictions}"
    )
    if outcome.errors is not None:
        print(f"{outcome.failed} unreadable images listed in {outcome.errors}",
              file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="trainer-adapter",
        description="train a detector on an exported split layout",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and write weights plus an epoch log")
    p.add_argument("--layout", required=True, help="split layout directory")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--checkpoint", default="scratch-tiny",
                   help="checkpoint identifier or local model directory")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--image-size", type=int, default=640, dest="image_size")
    p.add_argument("--batch-size", type=int, default=8, dest="batch_size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="optimizer hyper-parameter pass-through (lr, weight_decay)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="write predictions JSONL for a val list")
    p.add_argument("--weights", required=True, help="weights bundle from train")
    p.add_argument("--val-list", required=True, dest="val_list",
                   help="list of image paths, relative to the list file")
    p.add_argument("--out", required=True, help="predictions JSONL path")
    p.add_argument("--conf", type=float, default=0.25, help="confidence floor")
    p.set_defaults(func=cmd_infer)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainerError as exc:
        print(f"trainer failed: {exc}", file=sys.stderr)
        for line in exc.log_tail:
            print(f"  {line}", file=sys.stderr)
        return EXIT_TRAINER
    except (LayoutError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
