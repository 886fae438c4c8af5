"""Trainer CLI: `chmtrainer train` and `chmtrainer predict`.

Consumes tomochm dataset directories; writes a checkpoint, history.json,
and preds_{split}.npy files in the evaluation kit's expected layout.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .data import load_patch_data
from .train import (TrainConfig, load_checkpoint, predict, save_checkpoint,
                    seed_everything, train, write_history)
from .unet import ModelConfig, build_model


def cmd_train(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = load_patch_data(args.dataset)
    model_cfg = ModelConfig(arch=args.arch, in_channels=data.n_channels,
                            base_width=args.base_width)
    train_cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size,
                            max_epochs=args.max_epochs,
                            early_stop_patience=args.patience,
                            seed=args.seed,
                            deterministic=not args.no_deterministic)
    seed_everything(train_cfg.seed, train_cfg.deterministic)
    model = build_model(model_cfg)
    model, history = train(model, args.dataset, train_cfg,
                           log=lambda m: print(m, file=sys.stderr))
    save_checkpoint(model, train_cfg, out / "checkpoint.pt")
    write_history(history, out / "history.json")
    for split in ("val", "test"):
        tensors = data.split(split)
        preds = predict(model, tensors.features)
        with open(out / f"preds_{split}.npy", "wb") as fh:
            np.save(fh, preds, allow_pickle=False)
    best = min(history, key=lambda h: h["val_mae"])
    print(f"best val_mae={best['val_mae']:.4f} at epoch {best['epoch']}; "
          f"artifacts in {out}")
    return 0


def cmd_predict(args):
    model, _ = load_checkpoint(args.checkpoint)
    data = load_patch_data(args.dataset)
    tensors = data.split(args.split)
    preds = predict(model, tensors.features)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as fh:
        np.save(fh, preds, allow_pickle=False)
    print(f"wrote {preds.shape} predictions to {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="chmtrainer", description="U-Net canopy height trainer")
    subs = parser.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("train", help="fit a model on a dataset directory")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True, help="run directory")
    sp.add_argument("--arch", default="deep", choices=("deep", "shallow"))
    sp.add_argument("--base-width", type=int, default=32)
    sp.add_argument("--lr", type=float, default=7e-4)
    sp.add_argument("--batch-size", type=int, default=16)
    sp.add_argument("--max-epochs", type=int, default=150)
    sp.add_argument("--patience", type=int, default=15)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--no-deterministic", action="store_true",
                    help="allow nondeterministic kernels")

    sp = subs.add_parser("predict", help="run a checkpoint over a split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--split", default="test",
                    choices=("train", "val", "test"))
    sp.add_argument("--out", required=True, help="output .npy path")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {"train": cmd_train, "predict": cmd_predict}
    try:
        return handlers[args.command](args)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
