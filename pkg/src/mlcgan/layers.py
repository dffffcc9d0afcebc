"""Shared network building blocks: equalized layers, weight (de)modulation,
minibatch statistics.

All layers expose ``init_params(generator)`` so that a whole network can be
re-initialized from a single seeded ``torch.Generator`` in a reproducible
order (see :func:`reset_model`).
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def reset_model(module: nn.Module, seed: int) -> None:
    """Re-initialize every layer of `module` from one seeded generator.

    Iteration follows registration order, so two models built from the same
    code and seed get bitwise-identical parameters.
    """
    g = torch.Generator().manual_seed(seed)
    for m in module.modules():
        if hasattr(m, "init_params"):
            m.init_params(g)


def pixel_norm(x, eps: float = 1e-8):
    """Rescale each feature vector to norm sqrt(dim)."""
    return x * torch.rsqrt(torch.mean(x * x, dim=1, keepdim=True) + eps)


def lrelu(x, gain: float = math.sqrt(2.0)):
    return F.leaky_relu(x, 0.2) * gain


class EqualizedLinear(nn.Module):
    """Fully-connected layer with equalized learning rate.

    Weights are stored as unit-variance draws and multiplied by
    ``lr_mul / sqrt(fan_in)`` at run time, the convention of the base
    style-based architecture.
    """

    def __init__(self, in_features, out_features, bias=True, bias_init=0.0,
                 lr_mul=1.0):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.lr_mul = lr_mul
        self.scale = lr_mul / math.sqrt(in_features)
        self.bias_init = float(bias_init)
        self.weight = nn.Parameter(torch.randn(out_features, in_features) / lr_mul)
        self.bias = (nn.Parameter(torch.full((out_features,), self.bias_init / lr_mul))
                     if bias else None)

    def init_params(self, g: torch.Generator) -> None:
        with torch.no_grad():
            self.weight.normal_(0.0, 1.0 / self.lr_mul, generator=g)
            if self.bias is not None:
                self.bias.fill_(self.bias_init / self.lr_mul)

    def forward(self, x):
        b = self.bias * self.lr_mul if self.bias is not None else None
        return F.linear(x, self.weight * self.scale, b)

    def extra_repr(self):
        return f"in={self.in_features}, out={self.out_features}, lr_mul={self.lr_mul}"


def modulate_demodulate(weight, styles, eps: float = 1e-8, demodulate: bool = True):
    """Scale a convolution kernel per input channel, then renormalize each
    output channel to unit norm.

    Args:
        weight: kernel of shape [out_ch, in_ch, k, k].
        styles: per-sample scales of shape [batch, in_ch].
        eps: added inside the square root; must be > 0.
        demodulate: skip the renormalization when False (toRGB layers).

    Returns:
        Per-sample kernels of shape [batch, out_ch, in_ch, k, k].
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if styles.shape[1] != weight.shape[1]:
        raise ValueError(
            f"style width {styles.shape[1]} != kernel in_channels {weight.shape[1]}")
    w = weight.unsqueeze(0) * styles[:, None, :, None, None]
    if demodulate:
        d = torch.rsqrt(w.pow(2).sum(dim=(2, 3, 4)) + eps)
        w = w * d[:, :, None, None, None]
    return w


class ModulatedConv2d(nn.Module):
    """Convolution whose kernel is modulated per sample by a style vector.

    `mode` selects plain convolution, 2x upsampling (transposed conv,
    stride 2) or 2x downsampling (stride-2 conv). Evaluation is grouped per
    batch sample so every sample sees its own demodulated kernel.
    """

    def __init__(self, in_channels, out_channels, kernel_size, style_dim,
                 mode="none", demodulate=True, eps=1e-8):
        super().__init__()
        if mode not in ("none", "up", "down"):
            raise ValueError(f"unknown mode {mode!r}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.mode = mode
        self.demodulate = demodulate
        self.eps = eps
        self.scale = 1.0 / math.sqrt(in_channels * kernel_size * kernel_size)
        self.weight = nn.Parameter(
            torch.randn(out_channels, in_channels, kernel_size, kernel_size))
        # Affine from the style vector to per-input-channel scales; bias 1 so
        # modulation starts at identity.
        self.affine = EqualizedLinear(style_dim, in_channels, bias_init=1.0)

    def init_params(self, g: torch.Generator) -> None:
        with torch.no_grad():
            self.weight.normal_(0.0, 1.0, generator=g)

    def forward(self, x, style):
        batch, _, h, w_in = x.shape
        s = self.affine(style)
        w = modulate_demodulate(self.weight * self.scale, s, self.eps,
                                self.demodulate)
        k = self.kernel_size
        pad = (k - 1) // 2
        x = x.reshape(1, batch * self.in_channels, h, w_in)
        if self.mode == "up":
            w = w.transpose(1, 2).reshape(
                batch * self.in_channels, self.out_channels, k, k)
            out = F.conv_transpose2d(x, w, stride=2, padding=pad,
                                     output_padding=1, groups=batch)
        elif self.mode == "down":
            w = w.reshape(batch * self.out_channels, self.in_channels, k, k)
            out = F.conv2d(x, w, stride=2, padding=pad, groups=batch)
        else:
            w = w.reshape(batch * self.out_channels, self.in_channels, k, k)
            out = F.conv2d(x, w, padding=pad, groups=batch)
        return out.reshape(batch, self.out_channels, out.shape[2], out.shape[3])

    def extra_repr(self):
        return (f"in={self.in_channels}, out={self.out_channels}, "
                f"k={self.kernel_size}, mode={self.mode}, demod={self.demodulate}")


class EqualizedConv2d(nn.Module):
    """Plain (style-free) convolution with equalized learning rate."""

    def __init__(self, in_channels, out_channels, kernel_size, stride=1,
                 bias=True):
        super().__init__()
        self.stride = stride
        self.padding = (kernel_size - 1) // 2
        self.scale = 1.0 / math.sqrt(in_channels * kernel_size * kernel_size)
        self.weight = nn.Parameter(
            torch.randn(out_channels, in_channels, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_channels)) if bias else None

    def init_params(self, g: torch.Generator) -> None:
        with torch.no_grad():
            self.weight.normal_(0.0, 1.0, generator=g)
            if self.bias is not None:
                self.bias.zero_()

    def forward(self, x):
        return F.conv2d(x, self.weight * self.scale, self.bias,
                        stride=self.stride, padding=self.padding)


def minibatch_stddev(features, group_size: int = 4, eps: float = 1e-8):
    """Append one channel holding the per-group feature standard deviation.

    The batch is split into groups of `group_size` consecutive samples
    (clamped to the batch when it does not divide it). For each group the
    per-element standard deviation is averaged over channels and space and
    broadcast spatially as a constant extra channel.
    """
    b, c, h, w = features.shape
    if b < 2:
        raise ValueError("minibatch statistics require a batch of at least 2")
    g = min(group_size, b)
    if b % g != 0:
        g = b
    y = features.reshape(b // g, g, c, h, w)
    y = y - y.mean(dim=1, keepdim=True)
    y = (y.pow(2).mean(dim=1) + eps).sqrt()           # [b//g, c, h, w]
    y = y.mean(dim=(1, 2, 3), keepdim=True)           # [b//g, 1, 1, 1]
    y = y.repeat_interleave(g, dim=0)
    return torch.cat([features, y.expand(b, 1, h, w)], dim=1)
