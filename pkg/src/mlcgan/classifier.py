"""Multilabel ingredient classifier and average-precision metrics.

The classifier is a small residual convolutional network trained with
binary cross entropy on real (image, label) pairs; during GAN training it
is frozen and used only to regularize the generator. Its penultimate
features double as the desk-scale feature extractor for distribution
metrics.
"""

import json
import logging
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def average_precision(scores, labels) -> float:
    """Information-retrieval average precision for one ranked list.

    Scores are sorted descending (ties broken by stable index order); AP is
    the mean of precision-at-rank over the ranks where a positive sits.
    Raises ValueError when there is no positive label.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("average precision is undefined without positives")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order].astype(bool)
    hits = np.cumsum(ranked)
    ranks = np.arange(1, len(ranked) + 1)
    return float((hits[ranked] / ranks[ranked]).sum() / n_pos)


def mean_average_precision(score_matrix, label_matrix) -> float:
    """Mean per-class AP over classes that have at least one positive."""
    scores = np.asarray(score_matrix, dtype=np.float64)
    labels = np.asarray(label_matrix)
    if scores.shape != labels.shape:
        raise ValueError(
            f"score shape {scores.shape} != label shape {labels.shape}")
    aps = per_class_average_precision(scores, labels)
    valid = [ap for ap in aps.values() if not np.isnan(ap)]
    if not valid:
        raise ValueError("no class has a positive label")
    return float(np.mean(valid))


def per_class_average_precision(score_matrix, label_matrix) -> dict[int, float]:
    """AP per class index; NaN where a class has no positives."""
    scores = np.asarray(score_matrix, dtype=np.float64)
    labels = np.asarray(label_matrix)
    out = {}
    for c in range(scores.shape[1]):
        if labels[:, c].sum() == 0:
            out[c] = float("nan")
        else:
            out[c] = average_precision(scores[:, c], labels[:, c])
    return out


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

@dataclass
class ClassifierConfig:
    resolution: int = 64
    num_labels: int = 10
    width: int = 32
    seed: int = 0
    epochs: int = 8
    batch_size: int = 32
    learning_rate: float = 2e-3
    split: float = 0.8


class ResidualBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = (nn.Conv2d(in_ch, out_ch, 1, stride=stride)
                     if (stride != 1 or in_ch != out_ch) else nn.Identity())

    def forward(self, x):
        y = F.relu(self.conv1(x))
        y = self.conv2(y)
        return F.relu(y + self.skip(x))


class MultilabelClassifier(nn.Module):
    """Small residual CNN: stem, stride-2 stages down to 4x4, global average
    pool, dense head to C logits. `features` exposes the pooled penultimate
    vector for use as a distribution-metric extractor."""

    def __init__(self, cfg: ClassifierConfig):
        super().__init__()
        self.cfg = cfg
        n_stages = int(np.log2(cfg.resolution // 4))
        widths = [min(cfg.width * (2 ** i), 8 * cfg.width)
                  for i in range(n_stages + 1)]
        with torch.random.fork_rng():
            torch.manual_seed(cfg.seed)
            self.stem = nn.Conv2d(3, widths[0], 3, padding=1)
            self.stages = nn.ModuleList(
                ResidualBlock(widths[i], widths[i + 1], stride=2)
                for i in range(n_stages))
            self.head = nn.Linear(widths[-1], cfg.num_labels)
        self.feature_dim = widths[-1]

    def features(self, y):
        if y.shape[-1] != self.cfg.resolution:
            raise ValueError(
                f"expected {self.cfg.resolution}px input, got {y.shape[-1]}px")
        x = F.relu(self.stem(y))
        for stage in self.stages:
            x = stage(x)
        return x.mean(dim=(2, 3))

    def forward(self, y):
        return self.head(self.features(y))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def split_dataset(n: int, split: float, seed: int):
    """Deterministic train/test index split."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    perm = rng.permutation(n)
    cut = int(round(n * split))
    return perm[:cut], perm[cut:]


def evaluate_classifier(model: MultilabelClassifier, images, labels,
                        batch_size: int = 64) -> float:
    model.eval()
    scores = []
    with torch.no_grad():
        for i in range(0, len(images), batch_size):
            scores.append(model(images[i:i + batch_size]))
    return mean_average_precision(torch.cat(scores).numpy(), labels.numpy())


def train_classifier(dataset, cfg: ClassifierConfig):
    """BCE training on a deterministic split; returns (model, history).

    History rows carry per-epoch train loss and held-out mAP; the split
    indices are recorded so runs are reproducible end to end.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train a classifier on an empty dataset")
    train_idx, test_idx = split_dataset(len(dataset), cfg.split, cfg.seed)
    images, labels = dataset.images, dataset.labels
    model = MultilabelClassifier(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    order_rng = np.random.Generator(np.random.Philox(key=cfg.seed + 1))

    history = []
    for epoch in range(cfg.epochs):
        model.train()
        order = train_idx[order_rng.permutation(len(train_idx))]
        losses = []
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            logits = model(images[idx])
            loss = F.binary_cross_entropy_with_logits(logits, labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        test_map = evaluate_classifier(model, images[test_idx], labels[test_idx])
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "test_map": test_map})
        log.info("classifier epoch %d: loss %.4f, held-out mAP %.4f",
                 epoch, history[-1]["train_loss"], test_map)
    model.eval()
    return model, history


def save_classifier(model: MultilabelClassifier, path) -> None:
    blobs = {f"param/{k}": v.detach().numpy()
             for k, v in model.state_dict().items()}
    meta = json.dumps({"config": asdict(model.cfg)}, sort_keys=True)
    np.savez(path, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8), **blobs)


def load_classifier(path) -> MultilabelClassifier:
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        cfg = ClassifierConfig(**meta["config"])
        model = MultilabelClassifier(cfg)
        state = {k[len("param/"):]: torch.from_numpy(z[k])
                 for k in z.files if k.startswith("param/")}
    model.load_state_dict(state)
    model.eval()
    return model
