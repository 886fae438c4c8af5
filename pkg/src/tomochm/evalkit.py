"""Evaluation protocol: masked metrics, strided center-crop MAE, mosaics.

Prediction quality is measured on a mosaic of central crops: the region is
tiled at half-patch stride, each tile is predicted, and only the central
(P/2)^2 of every tile is kept. The crops are non-overlapping by
construction and cover the region minus a P/4 border, so edge effects
never enter the metric.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import HeightRaster


def _masked(pred, truth, mask):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not (pred.shape == truth.shape == mask.shape):
        raise ValueError("pred/truth/mask shapes must match")
    mask = mask & np.isfinite(pred) & np.isfinite(truth)
    if not mask.any():
        raise ValueError("no valid pixels under the mask")
    return pred[mask], truth[mask]


def mae(pred, truth, mask=None):
    p, t = _masked(pred, truth, mask)
    return float(np.abs(p - t).mean())


def rmse(pred, truth, mask=None):
    p, t = _masked(pred, truth, mask)
    return float(np.sqrt(((p - t) ** 2).mean()))


def r2(pred, truth, mask=None):
    """1 - SS_res / SS_tot about the masked truth mean."""
    p, t = _masked(pred, truth, mask)
    if p.size < 2:
        raise ValueError("r2 needs at least two valid pixels")
    ss_tot = ((t - t.mean()) ** 2).sum()
    if ss_tot == 0:
        raise ValueError("r2 undefined for zero-variance truth")
    ss_res = ((p - t) ** 2).sum()
    return float(1.0 - ss_res / ss_tot)


def crop_offset(patch_size):
    if patch_size % 4 != 0:
        raise ValueError("patch size must be divisible by 4")
    return patch_size // 4


def centered_strided_error(predict, features, truth, mask, region,
                           patch_size):
    """Strided center-crop evaluation of a patch -> patch predictor.

    `predict` maps a (C, P, P) feature patch to a (P, P) prediction.
    `region` is (row0, col0, height, width) in raster coordinates (None
    means the full raster). Tiles start at stride P/2; partial edge tiles
    are dropped. Returns (mae, rmse, mosaic) where the mosaic is a
    region-shaped array, NaN outside the assembled crops.
    """
    p = int(patch_size)
    off = crop_offset(p)
    s = p // 2
    data = np.asarray(getattr(features, "data", features))
    if data.ndim == 2:
        data = data[:, :, None]
    tvals = truth.values if isinstance(truth, HeightRaster) else \
        np.asarray(truth, dtype=np.float64)
    if region is None:
        region = (0, 0) + tvals.shape
    r0, c0, rh, rw = region
    if rh < p or rw < p:
        raise ValueError("region smaller than one patch")
    if mask is None:
        mask = np.ones(tvals.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)

    mosaic = np.full((rh, rw), np.nan)
    for rr in range(r0, r0 + rh - p + 1, s):
        for cc in range(c0, c0 + rw - p + 1, s):
            patch = np.moveaxis(data[rr:rr + p, cc:cc + p, :], -1, 0)
            pred = np.asarray(predict(patch), dtype=np.float64)
            pred = pred.reshape(p, p)
            crop = pred[off:off + s, off:off + s]
            mosaic[rr - r0 + off:rr - r0 + off + s,
                   cc - c0 + off:cc - c0 + off + s] = crop

    truth_reg = tvals[r0:r0 + rh, c0:c0 + rw]
    mask_reg = mask[r0:r0 + rh, c0:c0 + rw] & np.isfinite(mosaic)
    return (mae(mosaic, truth_reg, mask_reg),
            rmse(mosaic, truth_reg, mask_reg),
            mosaic)


def central_crops(patches, positions, patch_size):
    """Central (P/2)^2 crops of (num, 1, P, P) patches + crop positions."""
    patches = np.asarray(patches)
    off = crop_offset(patch_size)
    s = patch_size // 2
    crops = patches[:, 0, off:off + s, off:off + s]
    pos = np.asarray(positions, dtype=np.int64) + off
    return crops, pos


def mosaic_reconstruction(crops, positions, region_shape):
    """Assemble non-overlapping crops into a raster; NaN where uncovered.

    Overlapping crops are rejected.
    """
    h, w = region_shape
    out = np.full((h, w), np.nan)
    cover = np.zeros((h, w), dtype=np.int32)
    for crop, (r, c) in zip(crops, positions):
        crop = np.asarray(crop, dtype=np.float64)
        ch, cw = crop.shape
        if r < 0 or c < 0 or r + ch > h or c + cw > w:
            raise ValueError(f"crop at ({r}, {c}) falls outside the region")
        cover[r:r + ch, c:c + cw] += 1
        out[r:r + ch, c:c + cw] = crop
    if (cover > 1).any():
        raise ValueError("overlapping crops")
    return out


@dataclass(frozen=True)
class EvalReport:
    """One evaluation row: metrics plus the run descriptors."""
    test_mae: float
    test_rmse: float
    test_r2: float
    val_mae: float | None = None
    n_slc: int = 0
    polarization: str = ""
    heading: str = ""
    height_filter_m: float = 0.0
    model: str = ""
    config_hash: str = ""
    border_excluded_px: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.test_mae < 0 or self.test_rmse < self.test_mae:
            raise ValueError("requires rmse >= mae >= 0")
        if self.test_r2 > 1.0 + 1e-12:
            raise ValueError("r2 cannot exceed 1")

    FIELDS = ("val_mae", "test_mae", "test_rmse", "test_r2", "n_slc",
              "polarization", "heading", "height_filter_m", "model",
              "config_hash", "border_excluded_px")

    def to_dict(self):
        d = {name: getattr(self, name) for name in self.FIELDS}
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kwargs = {name: d.pop(name) for name in cls.FIELDS if name in d}
        return cls(extra=d, **kwargs)


def write_report(report, json_path, csv_path=None):
    """Write the report as JSON (fixed field order) and append a CSV row."""
    payload = report.to_dict()
    json_path = Path(json_path)
    try:
        with open(json_path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        if csv_path is not None:
            csv_path = Path(csv_path)
            new = not csv_path.exists()
            with open(csv_path, "a", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(payload))
                if new:
                    writer.writeheader()
                writer.writerow(payload)
    except OSError as exc:
        raise OSError(f"failed writing report {json_path}: {exc}") from exc


def read_report(json_path):
    with open(json_path) as fh:
        return EvalReport.from_dict(json.load(fh))
