import pytest
import torch

from conftest import (tiny_discriminator_config, tiny_generator_config)
from mlcgan.discriminator import DualBranchDiscriminator, ScorePair
from mlcgan.generator import ConditionalGenerator
from mlcgan.sle import ScalewiseLabelEncoder


def _embeddings(batch, resolution=16, embed_dim=8, seed=0):
    enc = ScalewiseLabelEncoder(4, embed_dim, resolution, seed=seed)
    x = (torch.rand(batch, 4, generator=torch.Generator().manual_seed(seed))
         > 0.5).float()
    return enc(x)


class TestDualBranchDiscriminator:
    def test_score_shapes(self, tiny_discriminator):
        y = torch.randn(3, 3, 16, 16)
        scores = tiny_discriminator(y, _embeddings(3))
        assert isinstance(scores, ScorePair)
        assert scores.s_c.shape == (3,)
        assert scores.s_uc.shape == (3,)

    def test_unconditional_score_ignores_labels(self, tiny_discriminator):
        y = torch.randn(4, 3, 16, 16)
        for trial in range(20):
            a = tiny_discriminator(y, _embeddings(4, seed=trial))
            b = tiny_discriminator(y, _embeddings(4, seed=trial + 100))
            assert torch.equal(a.s_uc, b.s_uc)

    def test_conditional_score_reads_labels(self, tiny_discriminator):
        y = torch.randn(4, 3, 16, 16)
        a = tiny_discriminator(y, _embeddings(4, seed=1))
        b = tiny_discriminator(y, _embeddings(4, seed=2))
        assert not torch.equal(a.s_c, b.s_c)

    def test_uncond_branch_removable(self):
        disc = DualBranchDiscriminator(
            tiny_discriminator_config(uncond_branch=False), seed=0)
        scores = disc(torch.randn(2, 3, 16, 16), _embeddings(2))
        assert scores.s_uc is None
        assert scores.s_c.shape == (2,)

    def test_wrong_resolution_raises(self, tiny_discriminator):
        with pytest.raises(ValueError, match="16x16"):
            tiny_discriminator(torch.randn(2, 3, 32, 32), _embeddings(2))

    def test_missing_scale_embedding_raises(self, tiny_discriminator):
        te = _embeddings(2)
        del te[8]
        with pytest.raises(ValueError, match="missing"):
            tiny_discriminator(torch.randn(2, 3, 16, 16), te)

    def test_batch_of_one_rejected_by_stats(self, tiny_discriminator):
        with pytest.raises(ValueError, match="at least 2"):
            tiny_discriminator(torch.randn(1, 3, 16, 16), _embeddings(1))

    def test_seeded_construction_is_reproducible(self):
        cfg = tiny_discriminator_config()
        a = DualBranchDiscriminator(cfg, seed=3)
        b = DualBranchDiscriminator(cfg, seed=3)
        y, te = torch.randn(2, 3, 16, 16), _embeddings(2)
        sa, sb = a(y, te), b(y, te)
        assert torch.equal(sa.s_c, sb.s_c)
        assert torch.equal(sa.s_uc, sb.s_uc)

    def test_end_to_end_with_generator(self, tiny_discriminator):
        gen = ConditionalGenerator(tiny_generator_config(), seed=0)
        x = (torch.rand(2, 4) > 0.5).float()
        img = gen(x, torch.randn(2, 8))
        scores = tiny_discriminator(img, gen.sle(x))
        assert torch.isfinite(scores.s_c).all()
        assert torch.isfinite(scores.s_uc).all()

    def test_gradients_reach_both_branches(self, tiny_discriminator):
        y = torch.randn(2, 3, 16, 16)
        scores = tiny_discriminator(y, _embeddings(2))
        (scores.s_c.sum() + scores.s_uc.sum()).backward()
        grads = [p.grad for p in tiny_discriminator.parameters()]
        assert any(g is not None and g.abs().sum() > 0 for g in grads)
