"""2D U-Net regressor heads: a deep (4-level) and a shallow (3-level) cut.

Each level is a DoubleConv block (two 3x3 conv -> batch norm -> ReLU
stages); levels are joined by 2x max-pool downsampling and bilinear
upsampling with skip concatenation. A final 1x1 projection produces the
single height channel, so the output keeps the input's spatial shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

ARCH_LEVELS = {"deep": 4, "shallow": 3}


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "deep"
    in_channels: int = 21
    base_width: int = 32
    out_channels: int = 1

    def __post_init__(self):
        if self.arch not in ARCH_LEVELS:
            raise ValueError(f"arch must be one of {tuple(ARCH_LEVELS)}")
        if self.in_channels < 1 or self.base_width < 1:
            raise ValueError("channel counts must be positive")

    @property
    def levels(self):
        return ARCH_LEVELS[self.arch]

    @property
    def widths(self):
        # channel doubling per level: 32/64/128/256 for deep
        return tuple(self.base_width * 2 ** i for i in range(self.levels))


class DoubleConv(nn.Module):
    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, kernel_size=3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class UNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        widths = cfg.widths
        self.stem = DoubleConv(cfg.in_channels, widths[0])
        self.downs = nn.ModuleList(
            DoubleConv(widths[i - 1], widths[i])
            for i in range(1, len(widths)))
        self.pool = nn.MaxPool2d(2)
        self.up = nn.Upsample(scale_factor=2, mode="bilinear",
                              align_corners=False)
        self.ups = nn.ModuleList(
            DoubleConv(widths[i] + widths[i - 1], widths[i - 1])
            for i in range(len(widths) - 1, 0, -1))
        self.head = nn.Conv2d(widths[0], cfg.out_channels, kernel_size=1)
        # affine output in meters; train() initializes these from the
        # train-target statistics so the backbone regresses O(1) residuals
        self.out_scale = nn.Parameter(torch.ones(1))
        self.out_bias = nn.Parameter(torch.zeros(1))

    def init_output_stats(self, mean, std):
        with torch.no_grad():
            self.out_scale.fill_(max(float(std), 1e-3))
            self.out_bias.fill_(float(mean))

    def forward(self, x):
        p = 2 ** (self.cfg.levels - 1)
        if x.shape[-1] % p or x.shape[-2] % p:
            raise ValueError(f"input size must be divisible by {p} "
                             f"for the {self.cfg.arch} model")
        skips = [self.stem(x)]
        for down in self.downs:
            skips.append(down(self.pool(skips[-1])))
        y = skips.pop()
        for up in self.ups:
            y = self.up(y)
            y = up(torch.cat([y, skips.pop()], dim=1))
        return self.head(y) * self.out_scale + self.out_bias


def build_model(cfg: ModelConfig) -> UNet:
    """Instantiate the U-Net; output shape equals input shape, one channel."""
    return UNet(cfg)


def parameter_count(model) -> int:
    return sum(p.numel() for p in model.parameters())
