"""Partial tomographic processing: steering, covariance, features, subsets.

The product of this stage is the per-pixel 3n-channel feature stack built
from the multilooked covariance matrix: the diagonal (variances), and the
real and imaginary parts of the master row (row 0).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .model import HeightRaster, SLCStack  # noqa: F401


@dataclass(frozen=True)
class CovarianceField:
    """Per-pixel N x N Hermitian covariance over an (H, W) grid.

    `data` has shape (H, W, N, N), complex128. `window` is the (azimuth,
    range) multilook window; border pixels use the clamped (shrunk)
    window, normalized by the actual sample count.
    """
    data: np.ndarray
    window: tuple
    normalized: bool = False

    @property
    def n_images(self):
        return self.data.shape[-1]

    @property
    def shape(self):
        return self.data.shape[:2]


@dataclass(frozen=True)
class FeatureStack:
    """(H, W, 3n) real features: [diag | Re(row 0) | Im(row 0)].

    `indices` records which stack images the n channels refer to.
    """
    data: np.ndarray
    indices: tuple

    @property
    def n_images(self):
        return len(self.indices)

    @property
    def n_channels(self):
        return self.data.shape[-1]

    @property
    def shape(self):
        return self.data.shape[:2]


@dataclass(frozen=True)
class SubsetSelection:
    """Deterministic image subset: master plus n-1 shuffled picks, sorted."""
    n: int
    indices: tuple
    seed: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if len(idx) != self.n:
            raise ValueError("index count must equal n")
        if not idx or idx[0] != 0:
            raise ValueError("subset must start with the master (index 0)")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("indices must be strictly increasing")


def ground_steer(stack, dtm):
    """Remove the terrain phase: u'_i(p) = u_i(p) * exp(-j kz_i dtm(p)).

    Magnitudes are preserved exactly and the master image (kz = 0) is
    returned unchanged. The DTM must cover the full grid with no nodata.
    """
    if dtm.shape != stack.shape:
        raise ValueError(f"dtm shape {dtm.shape} != stack shape {stack.shape}")
    values = dtm.values
    if not np.isfinite(values).all():
        raise ValueError("dtm contains nodata inside the processed region")
    kz = stack.geometry.kz
    layers = []
    for i, layer in enumerate(stack.layers):
        if kz[i] == 0.0:
            layers.append(layer)
        else:
            layers.append(layer * np.exp(-1j * kz[i] * values))
    return stack.with_layers(layers)


def _window_bounds(n, half):
    idx = np.arange(n)
    lo = np.maximum(0, idx - half)
    hi = np.minimum(n, idx + half + 1)
    return lo, hi


def _window_mean(x, wa, wr):
    """Clamped-window mean via an integral image; exact sample counts."""
    h, w = x.shape
    s = np.zeros((h + 1, w + 1), dtype=x.dtype)
    np.cumsum(x, axis=0, out=s[1:, 1:])
    np.cumsum(s[1:, 1:], axis=1, out=s[1:, 1:])
    r0, r1 = _window_bounds(h, wa // 2)
    c0, c1 = _window_bounds(w, wr // 2)
    total = (s[np.ix_(r1, c1)] - s[np.ix_(r0, c1)]
             - s[np.ix_(r1, c0)] + s[np.ix_(r0, c0)])
    counts = np.outer(r1 - r0, c1 - c0)
    return total / counts


def estimate_covariance(stack, window=(9, 9), normalized=False, threads=1):
    """Multilooked sample covariance R(p) = mean over W(p) of u(q) u(q)^H.

    The window is clamped at raster borders (shrinking window, true-count
    normalization). With `normalized` the entries become coherences
    R_ij / sqrt(R_ii R_jj) (0/0 maps to 0). Channel pairs are independent,
    so the optional thread pool cannot change any output bit.
    """
    wa, wr = window
    if wa < 1 or wr < 1 or wa % 2 == 0 or wr % 2 == 0:
        raise ValueError("window dimensions must be odd and >= 1")
    data = stack.data  # (N, H, W) complex128
    n, h, w = data.shape
    cov = np.empty((h, w, n, n), dtype=np.complex128)

    pairs = [(i, j) for i in range(n) for j in range(i, n)]

    def fill(pair):
        i, j = pair
        if i == j:
            # keep the diagonal exactly real (power, not a cross product)
            power = data[i].real ** 2 + data[i].imag ** 2
            cov[:, :, i, i] = _window_mean(power, wa, wr)
        else:
            m = _window_mean(data[i] * np.conj(data[j]), wa, wr)
            cov[:, :, i, j] = m
            cov[:, :, j, i] = np.conj(m)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, pairs))
    else:
        for pair in pairs:
            fill(pair)

    if normalized:
        diag = np.sqrt(np.abs(np.einsum("hwii->hwi", cov)))
        denom = diag[:, :, :, None] * diag[:, :, None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            cov = np.where(denom > 0, cov / denom, 0.0 + 0.0j)
    return CovarianceField(cov, (wa, wr), normalized)


def extract_features(cov, indices=None):
    """Stack [diag | Re(row 0) | Im(row 0)] into an (H, W, 3n) float array."""
    n = cov.n_images
    if indices is None:
        indices = tuple(range(n))
    diag = np.einsum("hwii->hwi", cov.data).real
    row0 = cov.data[:, :, 0, :]
    feats = np.concatenate([diag, row0.real, row0.imag], axis=-1)
    return FeatureStack(np.ascontiguousarray(feats), tuple(indices))


def select_subset(n, n_total, seed):
    """Pick n image indices out of n_total, always keeping the master.

    A Fisher-Yates partial shuffle of [1, n_total) driven by a splitmix64
    stream seeded with `seed` picks n-1 indices; they are sorted ascending
    and the master index 0 is prepended. Pure function of (n, n_total,
    seed).
    """
    if not 1 <= n <= n_total:
        raise ValueError(f"n must lie in [1, {n_total}]")
    stream = rng.SplitMix64(seed)
    pool = list(range(1, n_total))
    for k in range(n - 1):
        j = k + stream.randbelow(len(pool) - k)
        pool[k], pool[j] = pool[j], pool[k]
    chosen = sorted(pool[:n - 1])
    return SubsetSelection(n, tuple([0] + chosen), int(seed))


def slice_features(features, selection):
    """Keep only the selected indices in each of the three feature groups.

    This slices the full-stack features; the covariance is not recomputed
    on the subset (row 0 of a master-first subset covariance equals the
    sliced row 0 of the full covariance).
    """
    n_full = features.n_images
    idx = np.asarray(selection.indices)
    if idx.max() >= n_full:
        raise IndexError("selection index out of range for feature stack")
    groups = [features.data[:, :, g * n_full + idx] for g in range(3)]
    data = np.concatenate(groups, axis=-1)
    return FeatureStack(np.ascontiguousarray(data),
                        tuple(int(i) for i in idx))


def save_features(features, directory, window, normalized,
                  stack_hash="", config_hash=""):
    """Write features.npy (float32) + features.json metadata."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(features.data, dtype=np.float32)
    with open(directory / "features.npy", "wb") as fh:
        np.save(fh, np.ascontiguousarray(arr), allow_pickle=False)
    meta = {
        "schema": 1,
        "shape": list(arr.shape),
        "window": list(window),
        "normalized": bool(normalized),
        "subset_indices": list(features.indices),
        "stack_hash": stack_hash,
        "config_hash": config_hash,
    }
    with open(directory / "features.json", "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    return meta


def load_features(directory):
    directory = Path(directory)
    with open(directory / "features.json") as fh:
        meta = json.load(fh)
    data = np.load(directory / "features.npy", allow_pickle=False)
    return FeatureStack(data.astype(np.float64),
                        tuple(meta["subset_indices"])), meta
