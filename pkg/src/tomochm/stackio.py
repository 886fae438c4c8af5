"""Stack directory and raster file I/O.

Layout: `stack.json` (geometry, shape, dtype) plus one `slc_###.npy` per
image (NPY v1.0, little-endian complex64, C order). Height rasters are
float32 NPY files with NaN as nodata.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .model import AcquisitionGeometry, HeightRaster, SLCStack

STACK_MANIFEST = "stack.json"


def _save_npy(path, arr):
    with open(path, "wb") as fh:
        np.save(fh, np.ascontiguousarray(arr), allow_pickle=False)


def save_raster(raster, path):
    """Write a HeightRaster as float32 NPY, NaN nodata."""
    _save_npy(path, np.asarray(raster.values, dtype=np.float32))


def load_raster(path, kind="CHM"):
    values = np.load(path, allow_pickle=False)
    return HeightRaster(values.astype(np.float64), kind=kind)


def save_stack(stack, directory, config_hash=None):
    """Write an SLC stack directory; returns the manifest dict."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema": 1,
        "geometry": stack.geometry.to_dict(),
        "shape": list(stack.shape),
        "n_images": stack.n_images,
        "dtype": "complex64",
    }
    if config_hash is not None:
        manifest["config_hash"] = config_hash
    for i, layer in enumerate(stack.layers):
        _save_npy(directory / f"slc_{i:03d}.npy",
                  np.asarray(layer, dtype=np.complex64))
    with open(directory / STACK_MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def load_stack(directory):
    directory = Path(directory)
    with open(directory / STACK_MANIFEST) as fh:
        manifest = json.load(fh)
    geometry = AcquisitionGeometry.from_dict(manifest["geometry"])
    layers = []
    for i in range(manifest["n_images"]):
        layers.append(np.load(directory / f"slc_{i:03d}.npy",
                              allow_pickle=False))
    return SLCStack(geometry, tuple(layers))


def stack_digest(stack):
    """Stable content hash of layers + geometry, for provenance fields."""
    h = hashlib.sha256()
    h.update(json.dumps(stack.geometry.to_dict(), sort_keys=True).encode())
    for layer in stack.layers:
        h.update(np.ascontiguousarray(
            np.asarray(layer, dtype=np.complex64)).tobytes())
    return h.hexdigest()[:16]
