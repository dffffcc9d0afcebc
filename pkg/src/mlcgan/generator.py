"""Style-based conditional generator.

The generator is composed of the scalewise label encoder, a mapping network
turning style noise z into an intermediate latent w, and a synthesis network
whose modulated convolutions are driven, at each scale i, by the
concatenation of that scale's label embedding with w. An exponential moving
average of w supports truncation at inference time.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import ModulatedConv2d, EqualizedLinear, lrelu, pixel_norm, reset_model
from .sle import ScalewiseLabelEncoder, scale_list


def channel_map(resolution: int, channel_base: int = 16384,
                channel_max: int = 512) -> dict[int, int]:
    """Feature-map width per scale: channel_base/scale, capped at channel_max."""
    return {s: min(channel_base // s, channel_max) for s in scale_list(resolution)}


@dataclass
class GeneratorConfig:
    resolution: int = 64
    label_dim: int = 10
    embed_dim: int = 256          # T, width of each scale's label embedding
    latent_dim: int = 256         # L, width of z and w
    mapping_layers: int = 8
    mapping_lr_mul: float = 0.01
    sle_depth: int = 1
    channel_base: int = 16384
    channel_max: int = 512
    use_noise: bool = False       # per-detail noise inputs, off by default
    # Ablation wiring (mutually checked in __post_init__):
    disable_mapping: bool = False
    disable_sle: bool = False
    sle_before_mapping: bool = False

    def __post_init__(self):
        if self.sle_before_mapping and self.disable_mapping:
            raise ValueError(
                "sle_before_mapping requires the mapping network; "
                "it cannot be combined with disable_mapping")
        if self.sle_before_mapping and self.disable_sle:
            raise ValueError(
                "sle_before_mapping already implies a single shared encoder; "
                "do not also set disable_sle")

    @property
    def style_dim(self) -> int:
        # Every variant feeds the synthesis affines a vector of width T+L.
        return self.embed_dim + self.latent_dim

    @property
    def scales(self) -> list[int]:
        return scale_list(self.resolution)


class MappingNetwork(nn.Module):
    """MLP mapping normalized style noise z to the intermediate latent w."""

    def __init__(self, in_dim, out_dim, num_layers=8, lr_mul=0.01):
        super().__init__()
        dims = [in_dim] + [out_dim] * num_layers
        self.layers = nn.ModuleList(
            EqualizedLinear(dims[i], dims[i + 1], lr_mul=lr_mul)
            for i in range(num_layers))

    def forward(self, z):
        x = pixel_norm(z)
        for layer in self.layers:
            x = lrelu(layer(x))
        return x


class SynthesisBlock(nn.Module):
    """One scale of the synthesis network.

    The first block (scale 4) applies a single convolution to the learned
    constant; later blocks upsample with a transposed modulated convolution
    and refine with a second one. Each block contributes an RGB skip image.
    """

    def __init__(self, scale, in_channels, out_channels, style_dim, eps=1e-8):
        super().__init__()
        self.scale = scale
        self.is_first = scale == 4
        if not self.is_first:
            self.conv_up = ModulatedConv2d(in_channels, out_channels, 3,
                                           style_dim, mode="up", eps=eps)
            self.noise_up = nn.Parameter(torch.zeros(()))
            self.bias_up = nn.Parameter(torch.zeros(out_channels))
        self.conv = ModulatedConv2d(out_channels, out_channels, 3, style_dim,
                                    eps=eps)
        self.noise = nn.Parameter(torch.zeros(()))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        self.to_rgb = ModulatedConv2d(out_channels, 3, 1, style_dim,
                                      demodulate=False, eps=eps)
        self.rgb_bias = nn.Parameter(torch.zeros(3))

    def init_params(self, g: torch.Generator) -> None:
        with torch.no_grad():
            if not self.is_first:
                self.noise_up.zero_()
                self.bias_up.zero_()
            self.noise.zero_()
            self.bias.zero_()
            self.rgb_bias.zero_()

    def _add_noise(self, x, strength, noise):
        if noise is None:
            return x
        return x + strength * noise

    def forward(self, x, style, rgb, noise_maps=None):
        n_up, n = (noise_maps if noise_maps is not None else (None, None))
        if not self.is_first:
            x = self.conv_up(x, style)
            x = self._add_noise(x, self.noise_up, n_up)
            x = lrelu(x + self.bias_up[None, :, None, None])
        x = self.conv(x, style)
        x = self._add_noise(x, self.noise, n)
        x = lrelu(x + self.bias[None, :, None, None])
        y = self.to_rgb(x, style) + self.rgb_bias[None, :, None, None]
        if rgb is not None:
            rgb = F.interpolate(rgb, scale_factor=2, mode="bilinear",
                                align_corners=False)
            y = y + rgb
        return x, y


class SynthesisNetwork(nn.Module):
    """Scale pyramid from the learned 4x4 constant up to the output image.

    ``forward`` takes per-scale style vectors; how those vectors are built
    (label embedding concatenated with w, or an ablation variant) is the
    caller's concern.
    """

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        channels = channel_map(cfg.resolution, cfg.channel_base, cfg.channel_max)
        self.scales = cfg.scales
        self.const = nn.Parameter(torch.randn(channels[4], 4, 4))
        blocks = []
        prev = channels[4]
        for s in self.scales:
            blocks.append(SynthesisBlock(s, prev, channels[s], cfg.style_dim))
            prev = channels[s]
        self.blocks = nn.ModuleList(blocks)

    def init_params(self, g: torch.Generator) -> None:
        with torch.no_grad():
            self.const.normal_(0.0, 1.0, generator=g)

    def forward(self, styles: dict[int, torch.Tensor], noise=None):
        missing = [s for s in self.scales if s not in styles]
        if missing:
            raise ValueError(f"styles missing for scales {missing}")
        batch = styles[self.scales[0]].shape[0]
        x = self.const.unsqueeze(0).expand(batch, -1, -1, -1)
        rgb = None
        for block in self.blocks:
            maps = noise.get(block.scale) if noise is not None else None
            x, rgb = block(x, styles[block.scale], rgb, maps)
        return rgb


def truncate(w, w_avg, psi):
    """Pull w toward its running average: w_avg + psi * (w - w_avg)."""
    if not 0.0 <= psi <= 1.0:
        raise ValueError(f"truncation psi must lie in [0, 1], got {psi}")
    if psi == 1.0:    # exact identity, not subject to rounding
        return w
    return w_avg + psi * (w - w_avg)


class ConditionalGenerator(nn.Module):
    """Full generator: label encoder + mapping network + synthesis network.

    Ablation variants rewire how the per-scale style vectors are formed:

    * default          style_i = concat(te_i, w),  w = f(z)
    * disable_mapping  style_i = concat(te_i, z)
    * disable_sle      one shared embedding te for every scale
    * sle_before_mapping
                       style_i = w = f(concat(te, z)) with a shared te
    """

    def __init__(self, cfg: GeneratorConfig, seed: int | None = None):
        super().__init__()
        self.cfg = cfg
        shared = cfg.disable_sle or cfg.sle_before_mapping
        self.sle = ScalewiseLabelEncoder(cfg.label_dim, cfg.embed_dim,
                                         cfg.resolution, depth=cfg.sle_depth,
                                         shared=shared)
        if cfg.disable_mapping:
            self.mapping = None
        elif cfg.sle_before_mapping:
            self.mapping = MappingNetwork(cfg.style_dim, cfg.style_dim,
                                          cfg.mapping_layers, cfg.mapping_lr_mul)
        else:
            self.mapping = MappingNetwork(cfg.latent_dim, cfg.latent_dim,
                                          cfg.mapping_layers, cfg.mapping_lr_mul)
        self.synthesis = SynthesisNetwork(cfg)
        self.register_buffer("w_avg", torch.zeros(self.latent_width))
        if seed is not None:
            reset_model(self, seed)

    @property
    def latent_width(self) -> int:
        """Width of the vector truncation operates on."""
        if self.cfg.sle_before_mapping:
            return self.cfg.style_dim
        return self.cfg.latent_dim

    @property
    def scales(self) -> list[int]:
        return self.cfg.scales

    def mapping_forward(self, z, te=None):
        """z -> w. For the sle_before_mapping variant the shared label
        embedding is concatenated to z ahead of the mapping network."""
        if z.shape[-1] != self.cfg.latent_dim:
            raise ValueError(
                f"z width {z.shape[-1]} != latent_dim {self.cfg.latent_dim}")
        if self.cfg.disable_mapping:
            return z
        if self.cfg.sle_before_mapping:
            if te is None:
                raise ValueError("sle_before_mapping needs the label embedding")
            return self.mapping(torch.cat([te, z], dim=1))
        return self.mapping(z)

    def styles_from(self, te: dict[int, torch.Tensor], w):
        if self.cfg.sle_before_mapping:
            return {s: w for s in self.scales}
        return {s: torch.cat([te[s], w], dim=1) for s in self.scales}

    def forward(self, x, z, psi: float = 1.0, noise=None,
                update_w_avg: bool = False):
        te = self.sle(x)
        shared_te = te[self.scales[0]] if self.cfg.sle_before_mapping else None
        w = self.mapping_forward(z, shared_te)
        if update_w_avg:
            self.update_w_avg(w)
        if psi != 1.0:
            w = truncate(w, self.w_avg, psi)
        return self.synthesis(self.styles_from(te, w), noise=noise)

    @torch.no_grad()
    def update_w_avg(self, w, decay: float = 0.995):
        self.w_avg.copy_(torch.lerp(w.detach().mean(dim=0), self.w_avg, decay))
