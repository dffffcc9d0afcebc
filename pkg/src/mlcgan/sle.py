"""Scalewise label encoder: one small MLP per synthesis scale mapping the
binary label vector to that scale's embedding."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import EqualizedLinear, reset_model


def scale_list(resolution: int) -> list[int]:
    """Powers of two from 4 up to `resolution` inclusive."""
    if resolution < 4 or resolution & (resolution - 1):
        raise ValueError(f"resolution must be a power of two >= 4, got {resolution}")
    scales = []
    s = 4
    while s <= resolution:
        scales.append(s)
        s *= 2
    return scales


class ScaleEncoder(nn.Module):
    """Encoder for a single scale: `depth` fully-connected layers with ReLU."""

    def __init__(self, label_dim, embed_dim, depth=1):
        super().__init__()
        dims = [label_dim] + [embed_dim] * depth
        self.layers = nn.ModuleList(
            EqualizedLinear(dims[i], dims[i + 1]) for i in range(depth))

    def forward(self, x):
        for layer in self.layers:
            x = F.relu(layer(x))
        return x


class ScalewiseLabelEncoder(nn.Module):
    """Maps a label vector to one embedding per synthesis scale.

    With ``shared=True`` a single encoder produces one embedding that is
    reused at every scale (the ablation that removes scalewise encoding).

    Forward returns a dict ``{scale: tensor of shape [batch, embed_dim]}``.
    """

    def __init__(self, label_dim, embed_dim, resolution, depth=1,
                 shared=False, seed=None):
        super().__init__()
        self.label_dim = label_dim
        self.embed_dim = embed_dim
        self.scales = scale_list(resolution)
        self.shared = shared
        n_enc = 1 if shared else len(self.scales)
        self.encoders = nn.ModuleList(
            ScaleEncoder(label_dim, embed_dim, depth) for _ in range(n_enc))
        if seed is not None:
            reset_model(self, seed)

    def forward(self, x: torch.Tensor) -> dict[int, torch.Tensor]:
        if x.shape[-1] != self.label_dim:
            raise ValueError(
                f"label vector width {x.shape[-1]} != encoder input width {self.label_dim}")
        if self.shared:
            e = self.encoders[0](x)
            return {s: e for s in self.scales}
        return {s: enc(x) for s, enc in zip(self.scales, self.encoders)}
