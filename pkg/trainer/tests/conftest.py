import numpy as np
import pytest

import tomochm as tc


def build_dataset(directory, shape=(128, 128), n_images=7, n_slc=None,
                  chm=None, patch=32, snr_db=10.0, seed=42,
                  fractions=(0.64, 0.20, 0.16), height_filter_m=0.0):
    """Simulate a scene and export a tomochm dataset directory."""
    geometry = tc.synthetic_geometry(n_images, 3.0)
    scene = tc.SceneSpec(
        shape=shape,
        dtm=tc.RasterRecipe("constant", value=0.0),
        chm=chm or tc.RasterRecipe("blocks", values=(8.0, 24.0), block=32),
        ground_amplitude=1.0, canopy_amplitude=1.0,
        speckle=True, snr_db=snr_db, rng_seed=seed)
    stack, dtm, truth = tc.synthesize_slc_stack(scene, geometry)
    features = tc.extract_features(
        tc.estimate_covariance(tc.ground_steer(stack, dtm), (9, 9)))
    subset = None
    if n_slc is not None and n_slc < n_images:
        selection = tc.select_subset(n_slc, n_images, seed=42)
        features = tc.slice_features(features, selection)
        subset = list(selection.indices)
    assignment = tc.quadrant_split(truth.shape, patch, fractions)
    scaler = tc.fit_scaler(features, assignment)
    scaled = tc.apply_scaler(features, scaler)
    mask = tc.height_mask(truth, height_filter_m)
    dataset = tc.patchify(scaled, truth, mask, assignment, patch)
    tc.export_dataset(dataset, directory, scaler=scaler,
                      subset_indices=subset or list(features.indices),
                      config_hash="trainer-fixture",
                      height_filter_m=height_filter_m)
    return directory


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """25-cell grid: exactly 16 train patches (nearest-integer 64/20/16)."""
    root = tmp_path_factory.mktemp("small_ds")
    return build_dataset(root, shape=(160, 160), n_images=7, patch=32,
                         snr_db=15.0, seed=1)
