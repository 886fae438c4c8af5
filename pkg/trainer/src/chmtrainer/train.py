"""Training loop: masked MSE, Adam, early stopping on validation MAE.

The loss is computed on meter-valued targets so reported errors stay in
meters. Masked-out pixels contribute nothing to the loss or its gradient.
The validation metric follows the evaluation protocol: tiles come in at
half-patch stride and only the central P/2 crop of each prediction is
scored (crops are non-overlapping, so this equals the mosaic MAE).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch

from .data import PatchData, load_patch_data
from .unet import ModelConfig, build_model


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 7e-4
    batch_size: int = 16
    max_epochs: int = 150
    early_stop_patience: int = 15
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def seed_everything(seed, deterministic=True):
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True)


def masked_mse(pred, target, mask):
    """Mean squared error over masked-in pixels only."""
    weight = mask.to(pred.dtype)
    denom = weight.sum()
    if denom == 0:
        raise ValueError("batch has no masked-in pixels")
    return ((pred - target) ** 2 * weight).sum() / denom


def _crop(t, patch_size):
    off = patch_size // 4
    s = patch_size // 2
    return t[:, :, off:off + s, off:off + s]


@torch.no_grad()
def centered_val_mae(model, split, patch_size, batch_size=64):
    """Central-crop MAE over the val/test tiling (equals the mosaic MAE)."""
    model.eval()
    total_abs = 0.0
    total_cnt = 0
    feats = torch.from_numpy(split.features)
    tgts = torch.from_numpy(split.targets)
    mask = torch.from_numpy(split.mask)
    for k in range(0, feats.shape[0], batch_size):
        sl = slice(k, k + batch_size)
        pred = model(feats[sl])
        err = torch.abs(_crop(pred, patch_size) - _crop(tgts[sl], patch_size))
        m = _crop(mask[sl], patch_size)
        total_abs += float((err * m).sum())
        total_cnt += int(m.sum())
    if total_cnt == 0:
        raise ValueError("validation split has no masked-in crop pixels")
    return total_abs / total_cnt


def train(model, dataset_dir, cfg: TrainConfig, log=print):
    """Fit on the train split, early-stop on val MAE, restore best weights.

    Returns (model, history): history is a list of per-epoch dicts with
    train_loss and val_mae.
    """
    data = load_patch_data(dataset_dir)
    train_split = data.split("train")
    val_split = data.split("val")
    if train_split.features.shape[0] == 0 or val_split.features.shape[0] == 0:
        raise ValueError("train and val splits must be non-empty")
    if train_split.features.shape[1] != model.cfg.in_channels:
        raise ValueError(
            f"model expects {model.cfg.in_channels} channels, dataset has "
            f"{train_split.features.shape[1]}")

    seed_everything(cfg.seed, cfg.deterministic)
    feats = torch.from_numpy(train_split.features)
    tgts = torch.from_numpy(train_split.targets)
    mask = torch.from_numpy(train_split.mask)
    if bool(mask.any()):
        seen = tgts[mask]
        model.init_output_stats(seen.mean(), seen.std())
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    n = feats.shape[0]
    sampler = torch.Generator().manual_seed(cfg.seed)

    history = []
    best = {"val_mae": float("inf"), "epoch": -1, "state": None}
    since_best = 0
    for epoch in range(cfg.max_epochs):
        model.train()
        order = torch.randperm(n, generator=sampler)
        losses = []
        for k in range(0, n, cfg.batch_size):
            idx = order[k:k + cfg.batch_size]
            if not bool(mask[idx].any()):
                continue
            optimizer.zero_grad()
            loss = masked_mse(model(feats[idx]), tgts[idx], mask[idx])
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}: loss={loss}")
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        val_mae = centered_val_mae(model, val_split, data.patch_size)
        history.append({"epoch": epoch,
                        "train_loss": float(np.mean(losses)),
                        "val_mae": val_mae})
        if val_mae < best["val_mae"]:
            best = {"val_mae": val_mae, "epoch": epoch,
                    "state": {k: v.detach().clone()
                              for k, v in model.state_dict().items()}}
            since_best = 0
        else:
            since_best += 1
            if since_best > cfg.early_stop_patience:
                log(f"early stop at epoch {epoch} "
                    f"(best val MAE {best['val_mae']:.3f} "
                    f"@ {best['epoch']})")
                break
    if best["state"] is not None:
        model.load_state_dict(best["state"])
    return model, history


def save_checkpoint(model, train_cfg, path):
    torch.save({"model_cfg": asdict(model.cfg),
                "train_cfg": asdict(train_cfg),
                "state_dict": model.state_dict()}, path)


def load_checkpoint(path):
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = build_model(ModelConfig(**payload["model_cfg"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload


@torch.no_grad()
def predict(model, features, batch_size=64):
    """Deterministic inference: (num, C, P, P) -> (num, 1, P, P) float32."""
    model.eval()
    feats = torch.from_numpy(np.asarray(features, dtype=np.float32))
    if feats.shape[1] != model.cfg.in_channels:
        raise ValueError(f"model expects {model.cfg.in_channels} channels, "
                         f"got {feats.shape[1]}")
    chunks = [model(feats[k:k + batch_size]).numpy()
              for k in range(0, feats.shape[0], batch_size)]
    if not chunks:
        return np.zeros((0, 1) + feats.shape[2:], dtype=np.float32)
    return np.concatenate(chunks).astype(np.float32)


def write_history(history, path):
    Path(path).write_text(json.dumps(history, indent=2) + "\n")
