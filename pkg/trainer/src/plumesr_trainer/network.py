"""RRDB super-resolution generator.

Residual-in-residual dense blocks with residual scaling 0.2, a trunk skip
connection, two nearest-neighbour x2 upsampling stages with convolutions for
the overall x4, and a reconstruction head. Fully convolutional, so the same
weights serve 16x16 training patches and full frames. No adversarial branch:
training uses pixel and physics terms only.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

RESIDUAL_SCALE = 0.2


@dataclass(frozen=True)
class NetworkConfig:
    n_rrdb_blocks: int = 8          # desk default; paper-scale runs use 23
    base_features: int = 64
    growth: int = 32
    upscale: int = 4
    in_channels: int = 3
    out_channels: int = 3

    def __post_init__(self):
        if self.upscale != 4:
            raise ValueError("the pipeline is defined for 4x upscaling")
        if self.in_channels != 3 or self.out_channels != 3:
            raise ValueError("stacks are 3-channel at both ends")


class DenseBlock(nn.Module):
    def __init__(self, features: int, growth: int):
        super().__init__()
        self.convs = nn.ModuleList([
            nn.Conv2d(features + i * growth, growth, 3, padding=1)
            for i in range(4)
        ])
        self.fuse = nn.Conv2d(features + 4 * growth, features, 3, padding=1)

    def forward(self, x):
        feats = [x]
        for conv in self.convs:
            feats.append(F.leaky_relu(conv(torch.cat(feats, dim=1)), 0.2))
        out = self.fuse(torch.cat(feats, dim=1))
        return x + RESIDUAL_SCALE * out


class RRDB(nn.Module):
    def __init__(self, features: int, growth: int):
        super().__init__()
        self.blocks = nn.Sequential(*[DenseBlock(features, growth) for _ in range(3)])

    def forward(self, x):
        return x + RESIDUAL_SCALE * self.blocks(x)


class Generator(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        nf = cfg.base_features
        self.conv_first = nn.Conv2d(cfg.in_channels, nf, 3, padding=1)
        self.trunk = nn.Sequential(*[RRDB(nf, cfg.growth)
                                     for _ in range(cfg.n_rrdb_blocks)])
        self.trunk_conv = nn.Conv2d(nf, nf, 3, padding=1)
        self.up1 = nn.Conv2d(nf, nf, 3, padding=1)
        self.up2 = nn.Conv2d(nf, nf, 3, padding=1)
        self.hr_conv = nn.Conv2d(nf, nf, 3, padding=1)
        self.conv_last = nn.Conv2d(nf, cfg.out_channels, 3, padding=1)
        # zero-initialized head: the initial output is the bias path alone,
        # which keeps early physics residuals finite
        nn.init.zeros_(self.conv_last.weight)
        nn.init.zeros_(self.conv_last.bias)

    def forward(self, x):
        feat = self.conv_first(x)
        feat = feat + self.trunk_conv(self.trunk(feat))
        feat = F.leaky_relu(self.up1(F.interpolate(feat, scale_factor=2,
                                                   mode="nearest")), 0.2)
        feat = F.leaky_relu(self.up2(F.interpolate(feat, scale_factor=2,
                                                   mode="nearest")), 0.2)
        return self.conv_last(F.leaky_relu(self.hr_conv(feat), 0.2))


def build_network(cfg: NetworkConfig) -> Generator:
    return Generator(cfg)
