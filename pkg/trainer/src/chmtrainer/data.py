"""Reader for the tomochm dataset directory format.

The exported directory holds patches_{split}.npy (num, C, P, P) float32,
targets_{split}.npy (num, 1, P, P) float32 meters, mask_{split}.npy bool,
and index.json (positions, strides, scaler, subset indices, config hash).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class SplitTensors:
    features: np.ndarray
    targets: np.ndarray
    mask: np.ndarray
    positions: np.ndarray


@dataclass(frozen=True)
class PatchData:
    splits: dict
    patch_size: int
    n_channels: int
    raster_shape: tuple
    index: dict

    def split(self, name) -> SplitTensors:
        return self.splits[name]


def load_patch_data(directory) -> PatchData:
    directory = Path(directory)
    with open(directory / "index.json") as fh:
        index = json.load(fh)
    splits = {}
    for name in SPLITS:
        feats = np.load(directory / f"patches_{name}.npy",
                        allow_pickle=False)
        tgts = np.load(directory / f"targets_{name}.npy", allow_pickle=False)
        mask = np.load(directory / f"mask_{name}.npy", allow_pickle=False)
        pos = np.asarray(index["splits"][name]["positions"],
                         dtype=np.int64).reshape(-1, 2)
        splits[name] = SplitTensors(feats, tgts, mask, pos)
    return PatchData(splits, index["patch_size"], index["n_channels"],
                     tuple(index["raster_shape"]), index)
