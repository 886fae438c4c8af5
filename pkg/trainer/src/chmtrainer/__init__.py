"""U-Net canopy height regressor for tomochm patch datasets."""

from .data import PatchData, load_patch_data
from .train import (TrainConfig, centered_val_mae, load_checkpoint,
                    masked_mse, predict, save_checkpoint, train)
from .unet import ModelConfig, UNet, build_model, parameter_count

__version__ = "0.1.0"

__all__ = [
    "ModelConfig", "UNet", "build_model", "parameter_count",
    "TrainConfig", "train", "predict", "masked_mse", "centered_val_mae",
    "save_checkpoint", "load_checkpoint",
    "PatchData", "load_patch_data",
]
