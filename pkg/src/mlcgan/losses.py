"""Training objectives.

Adversarial terms use the non-saturating logistic (softplus) form. The
generator additionally pays a binary-cross-entropy penalty for generated
images whose predicted ingredient probabilities disagree with the
conditioning labels; the discriminator sees fake, real and mismatched
("wrong") pairs and is smoothed by a lazy R1 gradient penalty on real
images.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .discriminator import ScorePair


@dataclass
class LossWeights:
    lambda_uncond: float = 1.0
    lambda_clf: float = 1.0
    lambda_r1: float = 10.0
    lambda_wrong: float = 1.0
    r1_interval: int = 16

    def __post_init__(self):
        for name in ("lambda_uncond", "lambda_clf", "lambda_r1", "lambda_wrong"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.r1_interval < 1:
            raise ValueError("r1_interval must be a positive integer")


def _mean(t):
    return t.mean() if t.dim() > 0 else t


def adversarial_g_loss(fake: ScorePair, weights: LossWeights):
    """softplus(-s_c) + lambda_uncond * softplus(-s_uc), averaged over the batch."""
    loss = _mean(F.softplus(-fake.s_c))
    if weights.lambda_uncond > 0 and fake.s_uc is not None:
        loss = loss + weights.lambda_uncond * _mean(F.softplus(-fake.s_uc))
    return loss


def classification_regularizer(x, predicted_logits):
    """Mean binary cross entropy between the conditioning bits and the
    classifier's per-ingredient probabilities for the generated image."""
    if predicted_logits.shape != x.shape:
        raise ValueError(
            f"logits shape {tuple(predicted_logits.shape)} != labels shape {tuple(x.shape)}")
    return F.binary_cross_entropy_with_logits(predicted_logits, x.to(predicted_logits.dtype))


def generator_loss(fake: ScorePair, x=None, clf_logits=None,
                   weights: LossWeights | None = None):
    weights = weights or LossWeights()
    loss = adversarial_g_loss(fake, weights)
    if weights.lambda_clf > 0:
        if clf_logits is None:
            raise ValueError("lambda_clf > 0 requires classifier logits")
        loss = loss + weights.lambda_clf * classification_regularizer(x, clf_logits)
    return loss


def discriminator_loss(real: ScorePair, fake: ScorePair, wrong_s_c=None,
                       weights: LossWeights | None = None):
    """Fake and wrong pairs are pushed down, real pairs up; mismatched
    images contribute only through the conditional score."""
    weights = weights or LossWeights()
    loss = _mean(F.softplus(-real.s_c)) + _mean(F.softplus(fake.s_c))
    if weights.lambda_wrong > 0:
        if wrong_s_c is None:
            raise ValueError("lambda_wrong > 0 requires the wrong-pair score")
        loss = loss + weights.lambda_wrong * _mean(F.softplus(wrong_s_c))
    if weights.lambda_uncond > 0 and real.s_uc is not None:
        loss = loss + weights.lambda_uncond * (
            _mean(F.softplus(-real.s_uc)) + _mean(F.softplus(fake.s_uc)))
    return loss


def r1_penalty(disc, y_real, te, weights: LossWeights):
    """(lambda_r1 / 2) * mean over the batch of the squared gradient norms of
    both branch scores with respect to the real images.

    The caller applies this lazily every `r1_interval` steps and multiplies
    by the interval to compensate.
    """
    y = y_real.detach().requires_grad_(True)
    scores = disc(y, te)
    grad_c, = torch.autograd.grad(scores.s_c.sum(), y, create_graph=True)
    penalty = grad_c.pow(2).sum(dim=(1, 2, 3))
    if scores.s_uc is not None:
        grad_u, = torch.autograd.grad(scores.s_uc.sum(), y, create_graph=True)
        penalty = penalty + grad_u.pow(2).sum(dim=(1, 2, 3))
    return 0.5 * weights.lambda_r1 * penalty.mean()
