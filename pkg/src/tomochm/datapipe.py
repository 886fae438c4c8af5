"""Dataset machinery: raster alignment, splits, scaling, patches, export.

The split geometry generalizes the quadrant scheme: the azimuth axis is
divided into a leading train band, a middle evaluation band, and a
trailing train band; the middle band is split along range into the
validation block and then the test block, with any leftover middle cells
returned to train. The 64/20/16 patch proportions are the binding
contract, not the exact quadrant drawing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import HeightRaster

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "val", "test")
UNASSIGNED = -1


def resample_to_radar(raster, mapping, out_shape=None):
    """Resample a map-coordinate raster onto the SLC grid.

    `mapping` is either a (2, 3) affine taking radar (row, col, 1) to
    fractional source pixel coordinates (bilinear, nodata-aware: any
    contributing corner that is nodata yields nodata), or an (H, W, 2)
    per-pixel lookup table of source coordinates (nearest-neighbor; NaN
    entries yield nodata). Raises if any grid pixel maps outside the
    source raster, reporting the uncovered fraction.
    """
    src = np.asarray(raster.values, dtype=np.float64)
    hs, ws = src.shape
    mapping = np.asarray(mapping, dtype=np.float64)

    if mapping.ndim == 3 and mapping.shape[-1] == 2:
        h, w = mapping.shape[:2]
        src_r = mapping[..., 0]
        src_c = mapping[..., 1]
        nodata_in = ~np.isfinite(src_r) | ~np.isfinite(src_c)
        rr = np.round(src_r)
        cc = np.round(src_c)
        outside = (~nodata_in) & ((rr < 0) | (rr > hs - 1)
                                  | (cc < 0) | (cc > ws - 1))
        if outside.any():
            frac = outside.sum() / outside.size
            raise ValueError(f"mapping leaves {frac:.1%} of the grid "
                             f"outside the source raster")
        out = np.full((h, w), np.nan)
        ok = ~nodata_in
        out[ok] = src[rr[ok].astype(int), cc[ok].astype(int)]
        return HeightRaster(out, kind=raster.kind)

    if mapping.shape != (2, 3):
        raise ValueError("mapping must be a (2, 3) affine or an (H, W, 2) LUT")
    if out_shape is None:
        raise ValueError("affine resampling needs the output (H, W) shape")
    h, w = out_shape
    r = np.arange(h, dtype=np.float64)[:, None]
    c = np.arange(w, dtype=np.float64)[None, :]
    src_r = mapping[0, 0] * r + mapping[0, 1] * c + mapping[0, 2]
    src_c = mapping[1, 0] * r + mapping[1, 1] * c + mapping[1, 2]
    eps = 1e-9
    outside = ((src_r < -eps) | (src_r > hs - 1 + eps)
               | (src_c < -eps) | (src_c > ws - 1 + eps))
    if outside.any():
        frac = outside.sum() / outside.size
        raise ValueError(f"mapping leaves {frac:.1%} of the grid outside "
                         f"the source raster")
    src_r = np.clip(src_r, 0.0, hs - 1)
    src_c = np.clip(src_c, 0.0, ws - 1)
    r0 = np.minimum(np.floor(src_r).astype(int), hs - 2) if hs > 1 else \
        np.zeros_like(src_r, dtype=int)
    c0 = np.minimum(np.floor(src_c).astype(int), ws - 2) if ws > 1 else \
        np.zeros_like(src_c, dtype=int)
    r1 = np.minimum(r0 + 1, hs - 1)
    c1 = np.minimum(c0 + 1, ws - 1)
    fr = src_r - r0
    fc = src_c - c0
    corners = (src[r0, c0], src[r0, c1], src[r1, c0], src[r1, c1])
    weights = ((1 - fr) * (1 - fc), (1 - fr) * fc,
               fr * (1 - fc), fr * fc)
    out = np.zeros(src_r.shape)
    bad = np.zeros(src_r.shape, dtype=bool)
    for v, wgt in zip(corners, weights):
        out += np.where(wgt > 0, wgt * np.nan_to_num(v), 0.0)
        bad |= (wgt > 0) & ~np.isfinite(v)
    out[bad] = np.nan
    return HeightRaster(out, kind=raster.kind)


@dataclass(frozen=True)
class SplitAssignment:
    """Patch-cell split labels over the tiled grid.

    `labels` has shape (H // P, W // P) with values TRAIN/VAL/TEST.
    Raster pixels outside the tiled area belong to no split.
    """
    raster_shape: tuple
    patch_size: int
    labels: np.ndarray
    fractions: tuple

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "raster_shape", tuple(self.raster_shape))
        object.__setattr__(self, "fractions", tuple(self.fractions))

    def counts(self):
        return {name: int((self.labels == code).sum())
                for code, name in enumerate(SPLIT_NAMES)}

    def achieved_fractions(self):
        total = self.labels.size
        return tuple((self.labels == code).sum() / total for code in range(3))

    def pixel_labels(self):
        """Per-pixel split codes (H, W); UNASSIGNED outside the patch grid."""
        h, w = self.raster_shape
        p = self.patch_size
        out = np.full((h, w), UNASSIGNED, dtype=np.int8)
        pr, pc = self.labels.shape
        expanded = np.repeat(np.repeat(self.labels, p, axis=0), p, axis=1)
        out[:pr * p, :pc * p] = expanded
        return out


def quadrant_split(shape, patch_size, fractions=(0.64, 0.20, 0.16)):
    """Assign patch cells to train/val/test bands at the target fractions.

    Validation and test counts are the nearest integers to their targets
    (train takes the remainder). The evaluation band height is the
    smallest number of patch rows that holds them; inside the band, cells
    are filled along range, validation first, remaining cells returning
    to train.
    """
    h, w = shape
    p = int(patch_size)
    if p < 1:
        raise ValueError("patch_size must be >= 1")
    pr, pc = h // p, w // p
    if pr < 1 or pc < 1:
        raise ValueError("raster smaller than one patch")
    tf, vf, sf = fractions
    if min(tf, vf, sf) < 0 or abs(tf + vf + sf - 1.0) > 1e-9:
        raise ValueError("fractions must be non-negative and sum to 1")
    total = pr * pc
    n_val = int(round(vf * total))
    n_test = int(round(sf * total))
    labels = np.full((pr, pc), TRAIN, dtype=np.int8)
    if n_val + n_test > 0:
        band = math.ceil((n_val + n_test) / pc)
        if pr - band < 2:
            raise ValueError("grid too small for train/eval/train bands")
        lead = (pr - band) // 2
        k = 0
        for c in range(pc):
            for r in range(lead, lead + band):
                if k < n_val:
                    labels[r, c] = VAL
                elif k < n_val + n_test:
                    labels[r, c] = TEST
                k += 1
    return SplitAssignment((h, w), p, labels, tuple(fractions))


@dataclass(frozen=True)
class ScalerParams:
    """Per-channel min/max fitted on the train split only."""
    mins: np.ndarray
    maxs: np.ndarray
    fitted_on: str = "train"

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64)
        maxs = np.asarray(self.maxs, dtype=np.float64)
        if mins.shape != maxs.shape or mins.ndim != 1:
            raise ValueError("mins/maxs must be matching 1-D vectors")
        if (maxs < mins).any():
            raise ValueError("max must be >= min per channel")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)


def _feature_array(features):
    data = getattr(features, "data", features)
    data = np.asarray(data)
    if data.ndim != 3:
        raise ValueError("features must be (H, W, C)")
    return data


def fit_scaler(features, assignment):
    """Per-channel min/max over train-labeled pixels."""
    data = _feature_array(features)
    mask = assignment.pixel_labels() == TRAIN
    if not mask.any():
        raise ValueError("cannot fit a scaler on an empty train split")
    sel = data[mask]  # (n_train_px, C)
    return ScalerParams(sel.min(axis=0), sel.max(axis=0))


def apply_scaler(features, params):
    """x' = (x - min) / (max - min); degenerate channels map to 0.

    Values outside the train range are not clamped.
    """
    data = _feature_array(features)
    span = params.maxs - params.mins
    out = np.zeros_like(data, dtype=np.float64)
    ok = span > 0
    out[..., ok] = (data[..., ok] - params.mins[ok]) / span[ok]
    return out


def invert_scaler(scaled, params):
    data = np.asarray(scaled)
    span = params.maxs - params.mins
    out = data * span + params.mins
    out[..., span == 0] = params.mins[span == 0]
    return out


def height_mask(chm, threshold_m):
    """True where the canopy is at least threshold_m and not nodata."""
    values = chm.values if isinstance(chm, HeightRaster) else np.asarray(chm)
    return np.isfinite(values) & (values >= threshold_m)


@dataclass(frozen=True)
class PatchDataset:
    """Split-labelled (C, P, P) feature patches with (1, P, P) targets.

    Targets are meters; mask-false cells carry target 0 and are excluded
    from every loss and metric downstream.
    """
    features: np.ndarray   # (num, C, P, P) float32
    targets: np.ndarray    # (num, 1, P, P) float32
    mask: np.ndarray       # (num, 1, P, P) bool
    positions: np.ndarray  # (num, 2) int32, patch top-left (row, col)
    labels: np.ndarray     # (num,) int8
    patch_size: int
    strides: dict
    raster_shape: tuple
    dropped: int = 0

    def __post_init__(self):
        if self.patch_size % 2 != 0:
            raise ValueError("patch size must be even")
        n = self.features.shape[0]
        if not (self.targets.shape[0] == self.mask.shape[0]
                == self.positions.shape[0] == self.labels.shape[0] == n):
            raise ValueError("patch arrays disagree on patch count")
        object.__setattr__(self, "raster_shape", tuple(self.raster_shape))

    def split_indices(self, split):
        code = SPLIT_NAMES.index(split)
        return np.flatnonzero(self.labels == code)

    def split_arrays(self, split):
        idx = self.split_indices(split)
        return (self.features[idx], self.targets[idx], self.mask[idx],
                self.positions[idx])


def _strided_starts(lo, hi, patch, stride):
    """Anchored starts covering [lo, hi): stride steps plus an end-flush."""
    if hi - lo < patch:
        return []
    starts = list(range(lo, hi - patch + 1, stride))
    flush = hi - patch
    if starts[-1] != flush:
        starts.append(flush)
    return starts


def _axis_runs(present):
    """Maximal [a, b) runs of True in a 1-D boolean vector."""
    runs = []
    a = None
    for i, flag in enumerate(present):
        if flag and a is None:
            a = i
        elif not flag and a is not None:
            runs.append((a, i))
            a = None
    if a is not None:
        runs.append((a, len(present)))
    return runs


def patchify(features, targets, mask, assignment, patch_size,
             stride=None, eval_stride=None):
    """Cut split-pure patches: train at `stride`, val/test at `eval_stride`.

    Default strides are P for train and P/2 for val/test (the evaluation
    tiling rule). A patch is emitted only if its P x P footprint lies
    entirely inside one split's region; candidates overlapping a split
    but not contained in it are dropped and counted. `assignment` is a
    SplitAssignment or a raw (H, W) array of per-pixel split codes.
    """
    p = int(patch_size)
    stride = p if stride is None else int(stride)
    eval_stride = p // 2 if eval_stride is None else int(eval_stride)
    for s in (stride, eval_stride):
        if s not in (p, p // 2):
            raise ValueError("stride must be P or P/2")
    data = _feature_array(features)
    h, w, n_chan = data.shape
    tvals = targets.values if isinstance(targets, HeightRaster) else \
        np.asarray(targets, dtype=np.float64)
    if tvals.shape != (h, w):
        raise ValueError("targets shape must match features")
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    mask = np.asarray(mask, dtype=bool) & np.isfinite(tvals)
    tclean = np.where(np.isfinite(tvals), tvals, 0.0)

    pix = (assignment.pixel_labels() if isinstance(assignment,
                                                   SplitAssignment)
           else np.asarray(assignment, dtype=np.int8))
    if pix.shape != (h, w):
        raise ValueError("assignment shape must match features")
    feats_cf = np.ascontiguousarray(np.moveaxis(data, -1, 0),
                                    dtype=np.float32)  # (C, H, W)

    out_feat, out_tgt, out_mask, out_pos, out_lab = [], [], [], [], []
    dropped = 0
    for code in (TRAIN, VAL, TEST):
        s = stride if code == TRAIN else eval_stride
        inside = (pix == code)
        if not inside.any():
            continue
        # integral image of membership for O(1) footprint checks
        acc = np.zeros((h + 1, w + 1), dtype=np.int64)
        np.cumsum(inside, axis=0, out=acc[1:, 1:])
        np.cumsum(acc[1:, 1:], axis=1, out=acc[1:, 1:])

        def count(r, c):
            return (acc[r + p, c + p] - acc[r, c + p]
                    - acc[r + p, c] + acc[r, c])

        row_starts = []
        for a, b in _axis_runs(inside.any(axis=1)):
            row_starts.extend(_strided_starts(a, b, p, s))
        col_starts = []
        for a, b in _axis_runs(inside.any(axis=0)):
            col_starts.extend(_strided_starts(a, b, p, s))
        for r in row_starts:
            for c in col_starts:
                cnt = count(r, c)
                if cnt == p * p:
                    out_feat.append(feats_cf[:, r:r + p, c:c + p])
                    out_tgt.append(tclean[r:r + p, c:c + p])
                    out_mask.append(mask[r:r + p, c:c + p])
                    out_pos.append((r, c))
                    out_lab.append(code)
                elif cnt > 0:
                    dropped += 1

    if out_feat:
        feat_arr = np.stack(out_feat).astype(np.float32)
        tgt_arr = np.stack(out_tgt).astype(np.float32)[:, None, :, :]
        mask_arr = np.stack(out_mask)[:, None, :, :]
        pos_arr = np.asarray(out_pos, dtype=np.int32)
        lab_arr = np.asarray(out_lab, dtype=np.int8)
    else:
        feat_arr = np.zeros((0, n_chan, p, p), dtype=np.float32)
        tgt_arr = np.zeros((0, 1, p, p), dtype=np.float32)
        mask_arr = np.zeros((0, 1, p, p), dtype=bool)
        pos_arr = np.zeros((0, 2), dtype=np.int32)
        lab_arr = np.zeros((0,), dtype=np.int8)
    return PatchDataset(feat_arr, tgt_arr, mask_arr, pos_arr, lab_arr, p,
                        {"train": stride, "val": eval_stride,
                         "test": eval_stride},
                        (h, w), dropped)


def export_dataset(dataset, directory, scaler=None, subset_indices=None,
                   config_hash="", height_filter_m=0.0):
    """Write the dataset directory: per-split NPY arrays plus index.json.

    Re-reading reproduces every array bit-exactly.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        index = {
            "schema": 1,
            "patch_size": dataset.patch_size,
            "strides": dataset.strides,
            "raster_shape": list(dataset.raster_shape),
            "n_channels": int(dataset.features.shape[1]),
            "dropped": dataset.dropped,
            "height_filter_m": height_filter_m,
            "config_hash": config_hash,
            "subset_indices": (list(subset_indices)
                               if subset_indices is not None else None),
            "scaler": None if scaler is None else {
                "mins": [float(v) for v in scaler.mins],
                "maxs": [float(v) for v in scaler.maxs],
                "fitted_on": scaler.fitted_on,
            },
            "splits": {},
        }
        for split in SPLIT_NAMES:
            feats, tgts, msk, pos = dataset.split_arrays(split)
            index["splits"][split] = {
                "count": int(feats.shape[0]),
                "positions": [[int(r), int(c)] for r, c in pos],
            }
            for stem, arr in (("patches", feats), ("targets", tgts),
                              ("mask", msk)):
                with open(directory / f"{stem}_{split}.npy", "wb") as fh:
                    np.save(fh, np.ascontiguousarray(arr), allow_pickle=False)
        with open(directory / "index.json", "w") as fh:
            json.dump(index, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"dataset export to {directory} failed: {exc}") from exc
    return index


def load_dataset(directory):
    """Read a dataset directory back into (PatchDataset, index dict)."""
    directory = Path(directory)
    with open(directory / "index.json") as fh:
        index = json.load(fh)
    p = index["patch_size"]
    feats, tgts, msks, poss, labs = [], [], [], [], []
    for code, split in enumerate(SPLIT_NAMES):
        f = np.load(directory / f"patches_{split}.npy", allow_pickle=False)
        t = np.load(directory / f"targets_{split}.npy", allow_pickle=False)
        m = np.load(directory / f"mask_{split}.npy", allow_pickle=False)
        feats.append(f)
        tgts.append(t)
        msks.append(m)
        poss.append(np.asarray(index["splits"][split]["positions"],
                               dtype=np.int32).reshape(-1, 2))
        labs.append(np.full(f.shape[0], code, dtype=np.int8))
    dataset = PatchDataset(
        np.concatenate(feats), np.concatenate(tgts), np.concatenate(msks),
        np.concatenate(poss), np.concatenate(labs), p,
        dict(index["strides"]), tuple(index["raster_shape"]),
        index.get("dropped", 0))
    return dataset, index
