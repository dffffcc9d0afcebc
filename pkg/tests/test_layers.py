import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from mlcgan.layers import (EqualizedConv2d, EqualizedLinear, ModulatedConv2d,
                           lrelu, minibatch_stddev, modulate_demodulate,
                           pixel_norm, reset_model)


class TestPixelNorm:
    def test_hand_example(self):
        # [3, 4] has mean square 12.5; oracle computed by hand
        x = torch.tensor([[3.0, 4.0]])
        expected = torch.tensor([[3.0, 4.0]]) / math.sqrt(12.5 + 1e-8)
        assert torch.allclose(pixel_norm(x), expected)

    def test_output_norm_is_sqrt_dim(self):
        x = torch.randn(32, 7, dtype=torch.float64)
        out = pixel_norm(x)
        norms = out.norm(dim=1)
        assert torch.allclose(norms, torch.full((32,), math.sqrt(7.0),
                                                dtype=torch.float64), atol=1e-6)

    def test_zero_vector_stays_finite(self):
        out = pixel_norm(torch.zeros(2, 5))
        assert torch.isfinite(out).all()
        assert (out == 0).all()

    def test_scale_invariance(self):
        x = torch.randn(4, 6, dtype=torch.float64)
        assert torch.allclose(pixel_norm(x), pixel_norm(3.7 * x), atol=1e-9)


class TestLrelu:
    def test_positive_and_negative_slopes(self):
        x = torch.tensor([2.0, -2.0])
        out = lrelu(x)
        assert out[0] == pytest.approx(2.0 * math.sqrt(2.0))
        assert out[1] == pytest.approx(-0.4 * math.sqrt(2.0))


class TestEqualizedLinear:
    def test_forward_matches_manual_affine(self):
        layer = EqualizedLinear(3, 2, bias_init=0.5, lr_mul=0.01)
        x = torch.randn(4, 3)
        manual = x @ (layer.weight * layer.lr_mul / math.sqrt(3)).T \
            + layer.bias * layer.lr_mul
        assert torch.allclose(layer(x), manual, atol=1e-6)

    def test_bias_starts_at_bias_init(self):
        layer = EqualizedLinear(5, 3, bias_init=1.0)
        out = layer(torch.zeros(1, 5))
        assert torch.allclose(out, torch.ones(1, 3))

    def test_reset_is_reproducible(self):
        a = EqualizedLinear(6, 6)
        b = EqualizedLinear(6, 6)
        reset_model(a, 123)
        reset_model(b, 123)
        assert torch.equal(a.weight, b.weight)
        reset_model(b, 124)
        assert not torch.equal(a.weight, b.weight)

    def test_lr_mul_preserves_effective_init_scale(self):
        # stored weights are 1/lr_mul larger but the runtime scale cancels it
        torch.manual_seed(0)
        a = EqualizedLinear(512, 512, lr_mul=1.0)
        torch.manual_seed(0)
        b = EqualizedLinear(512, 512, lr_mul=0.01)
        x = torch.randn(8, 512)
        assert torch.allclose(a(x), b(x), atol=1e-4)


class TestModulateDemodulate:
    def test_scalar_oracle(self):
        # 1x1x1x1 kernel w=2, style 3: modulated 6, demodulated 6/sqrt(36+eps)
        w = torch.tensor([[[[2.0]]]], dtype=torch.float64)
        s = torch.tensor([[3.0]], dtype=torch.float64)
        out = modulate_demodulate(w, s, demodulate=False)
        assert out.item() == pytest.approx(6.0)
        out = modulate_demodulate(w, s, demodulate=True)
        assert out.item() == pytest.approx(6.0 / math.sqrt(36.0 + 1e-8), abs=1e-12)

    def test_output_channel_norms_are_one(self):
        w = torch.randn(4, 3, 3, 3, dtype=torch.float64)
        s = torch.rand(5, 3, dtype=torch.float64) + 0.5
        out = modulate_demodulate(w, s)
        norms = out.pow(2).sum(dim=(2, 3, 4))
        assert ((norms > 1 - 1e-4) & (norms <= 1 + 1e-9)).all()

    def test_style_width_mismatch_raises(self):
        with pytest.raises(ValueError, match="style width"):
            modulate_demodulate(torch.randn(2, 3, 1, 1), torch.randn(1, 4))

    def test_nonpositive_eps_raises(self):
        with pytest.raises(ValueError, match="eps"):
            modulate_demodulate(torch.randn(2, 3, 1, 1), torch.randn(1, 3), eps=0.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.sampled_from([1, 3]),
           st.integers(0, 2 ** 31 - 1))
    def test_demodulated_norm_property(self, out_ch, in_ch, k, seed):
        g = torch.Generator().manual_seed(seed)
        w = torch.randn(out_ch, in_ch, k, k, generator=g, dtype=torch.float64)
        s = torch.randn(2, in_ch, generator=g, dtype=torch.float64)
        norms = modulate_demodulate(w, s).pow(2).sum(dim=(2, 3, 4))
        assert (norms <= 1 + 1e-9).all()


class TestModulatedConv2d:
    @staticmethod
    def _conv_oracle(x, kernels, pad):
        """Plain-loop cross-correlation, one kernel per sample."""
        b, cin, h, w = x.shape
        _, cout, _, k, _ = kernels.shape
        xp = np.zeros((b, cin, h + 2 * pad, w + 2 * pad))
        xp[:, :, pad:pad + h, pad:pad + w] = x
        out = np.zeros((b, cout, h, w))
        for n in range(b):
            for oc in range(cout):
                for i in range(h):
                    for j in range(w):
                        out[n, oc, i, j] = np.sum(
                            xp[n, :, i:i + k, j:j + k] * kernels[n, oc])
        return out

    def test_matches_loop_oracle(self):
        layer = ModulatedConv2d(2, 3, 3, style_dim=4)
        reset_model(layer, 5)
        x = torch.randn(2, 2, 5, 5, dtype=torch.float64)
        style = torch.randn(2, 4, dtype=torch.float64)
        layer = layer.double()
        out = layer(x, style)

        kernels = modulate_demodulate(layer.weight * layer.scale,
                                      layer.affine(style)).detach().numpy()
        expected = self._conv_oracle(x.numpy(), kernels, pad=1)
        assert np.allclose(out.detach().numpy(), expected, atol=1e-10)

    @staticmethod
    def _up_oracle(x, kernels, pad):
        """Plain-loop transposed convolution, stride 2, output_padding 1."""
        b, cin, h, w = x.shape
        _, cout, _, k, _ = kernels.shape
        oh, ow = 2 * h, 2 * w
        out = np.zeros((b, cout, oh, ow))
        for n in range(b):
            for ic in range(cin):
                for i in range(h):
                    for j in range(w):
                        for di in range(k):
                            for dj in range(k):
                                oi, oj = 2 * i - pad + di, 2 * j - pad + dj
                                if 0 <= oi < oh and 0 <= oj < ow:
                                    out[n, :, oi, oj] += (
                                        x[n, ic, i, j] * kernels[n, :, ic, di, dj])
        return out

    def test_up_mode_matches_loop_oracle(self):
        layer = ModulatedConv2d(2, 3, 3, style_dim=4, mode="up")
        reset_model(layer, 6)
        x = torch.randn(2, 2, 4, 4, dtype=torch.float64)
        style = torch.randn(2, 4, dtype=torch.float64)
        layer = layer.double()
        out = layer(x, style)
        assert out.shape == (2, 3, 8, 8)

        kernels = modulate_demodulate(layer.weight * layer.scale,
                                      layer.affine(style)).detach().numpy()
        expected = self._up_oracle(x.numpy(), kernels, pad=1)
        assert np.allclose(out.detach().numpy(), expected, atol=1e-10)

    def test_down_mode_halves_resolution(self):
        layer = ModulatedConv2d(4, 4, 3, style_dim=4, mode="down")
        out = layer(torch.randn(3, 4, 8, 8), torch.randn(3, 4))
        assert out.shape == (3, 4, 4, 4)

    def test_per_sample_kernels_are_independent(self):
        # changing one sample's style must not affect the other's output
        layer = ModulatedConv2d(2, 2, 3, style_dim=4)
        x = torch.randn(2, 2, 6, 6)
        s1 = torch.randn(2, 4)
        s2 = s1.clone()
        s2[1] += 1.0
        out1, out2 = layer(x, s1), layer(x, s2)
        assert torch.equal(out1[0], out2[0])
        assert not torch.equal(out1[1], out2[1])

    def test_unknown_mode_raises(self):
        with pytest.raises(ValueError, match="mode"):
            ModulatedConv2d(2, 2, 3, style_dim=4, mode="sideways")


class TestEqualizedConv2d:
    def test_zero_bias_zero_input(self):
        layer = EqualizedConv2d(3, 5, 3)
        out = layer(torch.zeros(2, 3, 8, 8))
        assert (out == 0).all()
        assert out.shape == (2, 5, 8, 8)

    def test_stride(self):
        layer = EqualizedConv2d(3, 5, 3, stride=2)
        assert layer(torch.zeros(2, 3, 8, 8)).shape == (2, 5, 4, 4)


class TestMinibatchStddev:
    def test_two_constant_images_oracle(self):
        # values {0, 2}: mean 1, per-element variance 1, std sqrt(1+eps)
        f = torch.stack([torch.zeros(1, 4, 4), torch.full((1, 4, 4), 2.0)])
        out = minibatch_stddev(f, group_size=4)
        assert out.shape == (2, 2, 4, 4)
        expected = math.sqrt(1.0 + 1e-8)
        assert torch.allclose(out[:, 1], torch.full((2, 4, 4), expected))

    def test_identical_batch_appends_near_zero(self):
        f = torch.ones(4, 3, 8, 8)
        out = minibatch_stddev(f)
        assert torch.allclose(out[:, 3], torch.full((4, 8, 8), 1e-4), atol=1e-5)

    def test_groups_are_consecutive(self):
        # first two samples identical, last two spread: the appended stats
        # must differ between the groups and be zero-ish for the first
        f = torch.zeros(4, 1, 2, 2)
        f[2] += 1.0
        f[3] -= 1.0
        out = minibatch_stddev(f, group_size=2)
        assert torch.allclose(out[0, 1], out[1, 1])
        assert torch.allclose(out[2, 1], out[3, 1])
        assert out[0, 1, 0, 0] < 1e-3
        assert out[2, 1, 0, 0] == pytest.approx(1.0, abs=1e-4)

    def test_non_dividing_batch_falls_back_to_full_batch(self):
        f = torch.randn(6, 2, 4, 4)
        out = minibatch_stddev(f, group_size=4)
        # all samples share one group, so the appended channel is constant
        assert torch.allclose(out[:, 2], out[0, 2].expand(6, 4, 4))

    def test_batch_of_one_raises(self):
        with pytest.raises(ValueError, match="at least 2"):
            minibatch_stddev(torch.randn(1, 2, 4, 4))
