"""Dual-branch discriminator.

The conditional branch injects the per-scale label embeddings (reversed, so
the embedding for scale i is applied while the feature map is at resolution
i) through modulated downsampling convolutions; the unconditional branch is
a plain residual convolution stack that never sees the labels. Each branch
ends in its own minibatch-statistics layer and dense head producing one
realism score.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import torch
import torch.nn as nn

from .layers import (EqualizedConv2d, EqualizedLinear, ModulatedConv2d,
                     lrelu, minibatch_stddev, reset_model)
from .generator import channel_map
from .sle import scale_list


class ScorePair(NamedTuple):
    """Conditional and unconditional realism scores, shape [batch] each.

    `s_uc` is None when the unconditional branch is disabled."""
    s_c: torch.Tensor
    s_uc: Optional[torch.Tensor]


@dataclass
class DiscriminatorConfig:
    resolution: int = 64
    embed_dim: int = 256
    channel_base: int = 16384
    channel_max: int = 512
    group_size: int = 4           # minibatch-statistics grouping
    stddev_eps: float = 1e-8
    uncond_branch: bool = True

    @property
    def scales(self) -> list[int]:
        return scale_list(self.resolution)


class CondBlock(nn.Module):
    """Conditional-branch block at scale s: two convolutions modulated by
    te_s, the second with stride 2 for downsampling."""

    def __init__(self, in_channels, out_channels, embed_dim):
        super().__init__()
        self.conv = ModulatedConv2d(in_channels, in_channels, 3, embed_dim)
        self.bias1 = nn.Parameter(torch.zeros(in_channels))
        self.conv_down = ModulatedConv2d(in_channels, out_channels, 3,
                                         embed_dim, mode="down")
        self.bias2 = nn.Parameter(torch.zeros(out_channels))

    def init_params(self, g: torch.Generator) -> None:
        with torch.no_grad():
            self.bias1.zero_()
            self.bias2.zero_()

    def forward(self, x, te):
        x = lrelu(self.conv(x, te) + self.bias1[None, :, None, None])
        x = lrelu(self.conv_down(x, te) + self.bias2[None, :, None, None])
        return x


class UncondBlock(nn.Module):
    """Residual downsampling block of the base architecture."""

    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv1 = EqualizedConv2d(in_channels, in_channels, 3)
        self.conv2 = EqualizedConv2d(in_channels, out_channels, 3, stride=2)
        self.skip = EqualizedConv2d(in_channels, out_channels, 1, stride=2,
                                    bias=False)

    def forward(self, x):
        y = lrelu(self.conv1(x))
        y = lrelu(self.conv2(y))
        return (y + self.skip(x)) * (0.5 ** 0.5)


class DiscriminatorHead(nn.Module):
    """Final stage of a branch: minibatch statistics, a convolution and two
    dense layers down to a single score."""

    def __init__(self, in_channels, group_size, stddev_eps):
        super().__init__()
        self.group_size = group_size
        self.stddev_eps = stddev_eps
        self.conv = EqualizedConv2d(in_channels + 1, in_channels, 3)
        self.dense = EqualizedLinear(in_channels * 16, in_channels)
        self.out = EqualizedLinear(in_channels, 1)

    def forward(self, x):
        x = minibatch_stddev(x, self.group_size, self.stddev_eps)
        x = lrelu(self.conv(x))
        x = lrelu(self.dense(x.flatten(1)))
        return self.out(x).squeeze(1)


class DualBranchDiscriminator(nn.Module):
    def __init__(self, cfg: DiscriminatorConfig, seed: int | None = None):
        super().__init__()
        self.cfg = cfg
        channels = channel_map(cfg.resolution, cfg.channel_base, cfg.channel_max)
        self.scales_desc = list(reversed(cfg.scales))

        self.from_rgb_c = EqualizedConv2d(3, channels[cfg.resolution], 1)
        self.cond_blocks = nn.ModuleList(
            CondBlock(channels[s], channels[s // 2], cfg.embed_dim)
            for s in self.scales_desc[:-1])
        # te_4 is injected at the 4x4 feature map, ahead of the head.
        self.cond_final = ModulatedConv2d(channels[4], channels[4], 3,
                                          cfg.embed_dim)
        self.cond_final_bias = nn.Parameter(torch.zeros(channels[4]))
        self.head_c = DiscriminatorHead(channels[4], cfg.group_size,
                                        cfg.stddev_eps)

        if cfg.uncond_branch:
            self.from_rgb_u = EqualizedConv2d(3, channels[cfg.resolution], 1)
            self.uncond_blocks = nn.ModuleList(
                UncondBlock(channels[s], channels[s // 2])
                for s in self.scales_desc[:-1])
            self.head_u = DiscriminatorHead(channels[4], cfg.group_size,
                                            cfg.stddev_eps)
        if seed is not None:
            reset_model(self, seed)

    def init_params(self, g: torch.Generator) -> None:
        with torch.no_grad():
            self.cond_final_bias.zero_()

    def forward(self, y, te: dict[int, torch.Tensor]) -> ScorePair:
        r = self.cfg.resolution
        if y.shape[-1] != r or y.shape[-2] != r:
            raise ValueError(f"expected {r}x{r} input, got {tuple(y.shape[-2:])}")
        missing = [s for s in self.cfg.scales if s not in te]
        if missing:
            raise ValueError(f"label embeddings missing for scales {missing}")

        x = lrelu(self.from_rgb_c(y))
        for s, block in zip(self.scales_desc[:-1], self.cond_blocks):
            x = block(x, te[s])
        x = lrelu(self.cond_final(x, te[4]) + self.cond_final_bias[None, :, None, None])
        s_c = self.head_c(x)

        s_uc = None
        if self.cfg.uncond_branch:
            u = lrelu(self.from_rgb_u(y))
            for block in self.uncond_blocks:
                u = block(u)
            s_uc = self.head_u(u)
        return ScorePair(s_c, s_uc)
