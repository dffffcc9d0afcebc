import pytest
import torch

from mlcgan.sle import ScalewiseLabelEncoder, scale_list


class TestScaleList:
    def test_known_ladders(self):
        assert scale_list(4) == [4]
        assert scale_list(32) == [4, 8, 16, 32]
        assert scale_list(256) == [4, 8, 16, 32, 64, 128, 256]

    @pytest.mark.parametrize("bad", [0, 2, 3, 6, 48, 100])
    def test_invalid_resolutions_raise(self, bad):
        with pytest.raises(ValueError):
            scale_list(bad)


class TestScalewiseLabelEncoder:
    def test_one_embedding_per_scale(self):
        enc = ScalewiseLabelEncoder(10, 16, resolution=64, seed=0)
        te = enc(torch.zeros(3, 10))
        assert sorted(te) == [4, 8, 16, 32, 64]
        assert all(t.shape == (3, 16) for t in te.values())

    def test_embeddings_are_nonnegative(self):
        enc = ScalewiseLabelEncoder(6, 12, resolution=32, seed=1)
        te = enc(torch.rand(5, 6))
        assert all((t >= 0).all() for t in te.values())

    def test_scales_get_distinct_encoders(self):
        enc = ScalewiseLabelEncoder(6, 12, resolution=32, seed=2)
        te = enc(torch.ones(1, 6))
        values = [te[s] for s in sorted(te)]
        for a, b in zip(values, values[1:]):
            assert not torch.equal(a, b)

    def test_shared_encoder_repeats_one_embedding(self):
        enc = ScalewiseLabelEncoder(6, 12, resolution=32, shared=True, seed=2)
        te = enc(torch.rand(2, 6))
        first = te[4]
        assert all(torch.equal(t, first) for t in te.values())

    def test_label_width_mismatch_raises(self):
        enc = ScalewiseLabelEncoder(6, 12, resolution=16, seed=0)
        with pytest.raises(ValueError, match="width"):
            enc(torch.zeros(2, 7))

    def test_seeded_construction_is_reproducible(self):
        a = ScalewiseLabelEncoder(5, 8, resolution=16, seed=9)
        b = ScalewiseLabelEncoder(5, 8, resolution=16, seed=9)
        x = torch.rand(4, 5)
        ta, tb = a(x), b(x)
        assert all(torch.equal(ta[s], tb[s]) for s in ta)

    def test_depth_stacks_layers(self):
        shallow = ScalewiseLabelEncoder(5, 8, resolution=16, depth=1, seed=3)
        deep = ScalewiseLabelEncoder(5, 8, resolution=16, depth=3, seed=3)
        assert len(list(deep.parameters())) == 3 * len(list(shallow.parameters()))
        te = deep(torch.rand(2, 5))
        assert te[16].shape == (2, 8)

    def test_different_labels_embed_differently(self):
        enc = ScalewiseLabelEncoder(6, 12, resolution=16, seed=4)
        a = enc(torch.tensor([[1., 0., 0., 0., 0., 0.]]))
        b = enc(torch.tensor([[0., 1., 0., 0., 0., 0.]]))
        assert any((a[s] - b[s]).abs().sum() > 0 for s in a)
