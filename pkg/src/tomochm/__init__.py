"""Partial-tomography canopy height toolkit.

Pipeline stages: synthetic SLC stacks with known truth (`simulate`),
ground steering / covariance / feature extraction (`tomoproc`), classical
beamforming and Capon comparators (`specest`), dataset splitting, scaling
and patch export (`datapipe`), and the strided center-crop evaluation
protocol (`evalkit`). The `tomochm` CLI exposes each stage as a
subcommand driven by one TOML config.
"""

from .model import (AcquisitionGeometry, HeightRaster, ImageRecord, SLCStack,
                    kz_from_geometry, rayleigh_resolution, synthetic_geometry,
                    validate_stack)
from .simulate import RasterRecipe, SceneSpec, synthesize_slc_stack
from .tomoproc import (CovarianceField, FeatureStack, SubsetSelection,
                       estimate_covariance, extract_features, ground_steer,
                       select_subset, slice_features)
from .specest import (PowerProfile, VerticalGrid, beamforming_spectrum,
                      capon_spectrum, chm_from_profile, default_grid,
                      mainlobe_width, steering_vector, tomo_chm_baseline)
from .datapipe import (PatchDataset, ScalerParams, SplitAssignment,
                       apply_scaler, export_dataset, fit_scaler, height_mask,
                       invert_scaler, load_dataset, patchify, quadrant_split,
                       resample_to_radar)
from .evalkit import (EvalReport, centered_strided_error, mae,
                      mosaic_reconstruction, r2, rmse, write_report)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionGeometry", "ImageRecord", "SLCStack", "HeightRaster",
    "kz_from_geometry", "rayleigh_resolution", "synthetic_geometry",
    "validate_stack",
    "RasterRecipe", "SceneSpec", "synthesize_slc_stack",
    "CovarianceField", "FeatureStack", "SubsetSelection",
    "ground_steer", "estimate_covariance", "extract_features",
    "select_subset", "slice_features",
    "VerticalGrid", "PowerProfile", "steering_vector",
    "beamforming_spectrum", "capon_spectrum", "chm_from_profile",
    "mainlobe_width", "tomo_chm_baseline", "default_grid",
    "SplitAssignment", "ScalerParams", "PatchDataset",
    "quadrant_split", "fit_scaler", "apply_scaler", "invert_scaler",
    "height_mask", "patchify", "export_dataset", "load_dataset",
    "resample_to_radar",
    "EvalReport", "mae", "rmse", "r2", "centered_strided_error",
    "mosaic_reconstruction", "write_report",
]
