"""Quantitative metrics and qualitative grids.

Distribution distance is the Fréchet distance between Gaussian fits of
feature statistics; conditioning quality is the classifier-measured mean
average precision of generated images against their conditioning labels;
retrieval quality is the median rank of the matching item. Grid helpers
reproduce the fixed-noise/label matrix and the two-axis interpolation
sweep.
"""

import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from scipy.stats import rankdata

from .generator import truncate

MAX_GRID_PIXELS = 16384


# ---------------------------------------------------------------------------
# Feature statistics and Fréchet distance
# ---------------------------------------------------------------------------

@dataclass
class FeatureStats:
    """Gaussian fit of a feature distribution: mean, covariance, count."""

    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("covariance shape does not match mean length")


class FeatureAccumulator:
    """Running mean/covariance over batches; order-independent up to
    floating error (sums are kept in float64)."""

    def __init__(self, dim: int):
        self.n = 0
        self.s = np.zeros(dim, dtype=np.float64)
        self.q = np.zeros((dim, dim), dtype=np.float64)

    def update(self, feats) -> None:
        f = np.asarray(feats, dtype=np.float64)
        if f.ndim != 2 or f.shape[1] != self.s.size:
            raise ValueError(f"expected [batch, {self.s.size}] features")
        self.n += f.shape[0]
        self.s += f.sum(axis=0)
        self.q += f.T @ f

    def stats(self) -> FeatureStats:
        if self.n < 2:
            raise ValueError("need at least 2 samples for covariance")
        mean = self.s / self.n
        cov = (self.q - self.n * np.outer(mean, mean)) / (self.n - 1)
        return FeatureStats(mean, cov, self.n)


def feature_stats(images, extractor, batch_size: int = 64) -> FeatureStats:
    """Accumulate extractor features over a stream of image batches.

    `images` is an iterable of CHW tensors or a single [N, C, H, W] tensor.
    """
    if isinstance(images, torch.Tensor):
        tensor = images
        batches = (tensor[i:i + batch_size]
                   for i in range(0, len(tensor), batch_size))
    else:
        def _batched(it):
            buf = []
            for im in it:
                buf.append(im)
                if len(buf) == batch_size:
                    yield torch.stack(buf)
                    buf = []
            if buf:
                yield torch.stack(buf)
        batches = _batched(iter(images))

    acc = None
    with torch.no_grad():
        for batch in batches:
            f = extractor(batch)
            f = f.detach().cpu().numpy() if isinstance(f, torch.Tensor) else np.asarray(f)
            if acc is None:
                acc = FeatureAccumulator(f.shape[1])
            acc.update(f)
    if acc is None:
        raise ValueError("no images supplied")
    return acc.stats()


def _psd_sqrt(mat: np.ndarray, tol: float) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition; small negative
    eigenvalues are clamped, large ones rejected."""
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    floor = -tol * max(1.0, float(np.abs(vals).max()))
    if vals.min() < floor:
        raise ValueError(
            f"matrix is not PSD within tolerance (min eigenvalue {vals.min():.3e})")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(a: FeatureStats, b: FeatureStats, tol: float = 1e-6) -> float:
    """Fréchet distance between two Gaussian fits.

    ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the matrix
    square root evaluated through the symmetrized product
    sqrt(S_a) S_b sqrt(S_a).
    """
    if a.mean.shape != b.mean.shape:
        raise ValueError("feature dimensions differ")
    if np.array_equal(a.mean, b.mean) and np.array_equal(a.cov, b.cov):
        return 0.0          # metric axiom, exact regardless of rounding
    root_a = _psd_sqrt(a.cov, tol)
    inner = root_a @ b.cov @ root_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    floor = -tol * max(1.0, float(np.abs(vals).max()))
    if vals.min() < floor:
        raise ValueError(
            f"product matrix not PSD within tolerance (min eigenvalue {vals.min():.3e})")
    trace_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    diff = a.mean - b.mean
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * trace_sqrt)
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# Conditioning quality on generated images
# ---------------------------------------------------------------------------

def empirical_label_sampler(dataset, rng: np.random.Generator):
    """Draw conditioning labels from the real dataset's empirical
    distribution (uniform over records, with replacement)."""
    def sampler(n: int) -> torch.Tensor:
        idx = rng.integers(0, len(dataset), size=n)
        return dataset.labels[idx]
    return sampler


def map_on_generated(generator, classifier, label_sampler, n: int,
                     rng: np.random.Generator, batch_size: int = 32,
                     psi: float = 1.0) -> float:
    """Generate n images from sampled (labels, z), score them with the
    frozen classifier and compute mAP against the conditioning labels."""
    if classifier.cfg.num_labels != generator.cfg.label_dim:
        raise ValueError(
            f"classifier C={classifier.cfg.num_labels} != generator C={generator.cfg.label_dim}")
    scores, labels = [], []
    generator.eval()
    with torch.no_grad():
        for i in range(0, n, batch_size):
            m = min(batch_size, n - i)
            x = label_sampler(m)
            z = torch.from_numpy(
                rng.standard_normal((m, generator.cfg.latent_dim))).float()
            imgs = generator(x, z, psi=psi)
            scores.append(classifier(imgs.clamp(-1, 1)))
            labels.append(x)
    from .classifier import mean_average_precision
    return mean_average_precision(torch.cat(scores).numpy(),
                                  torch.cat(labels).numpy())


# ---------------------------------------------------------------------------
# Median rank
# ---------------------------------------------------------------------------

def median_rank(similarity) -> float:
    """Median over queries of the rank of the matching (diagonal) item under
    descending scores; ties get the average rank."""
    sim = np.asarray(similarity, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ValueError("similarity must be a square matrix")
    ranks = [rankdata(-sim[i], method="average")[i] for i in range(sim.shape[0])]
    return float(np.median(ranks))


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

@dataclass
class GridCell:
    z: np.ndarray
    psi: float = 1.0
    labels: np.ndarray | None = None          # label bits, encoded at render
    te: dict[int, np.ndarray] | None = None   # or a ready embedding set
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.labels is None) == (self.te is None):
            raise ValueError("cell needs exactly one of labels or te")


@dataclass
class GridSpec:
    cells: list[list[GridCell]]
    axes: dict = field(default_factory=dict)

    @property
    def shape(self):
        return len(self.cells), len(self.cells[0])


def label_noise_grid(label_vectors, noises, psi: float = 1.0) -> GridSpec:
    """Fixed-noise rows by label columns (each row shares its style noise)."""
    cells = [[GridCell(z=np.asarray(z, dtype=np.float64), psi=psi,
                       labels=np.asarray(x), meta={"row": i, "col": j})
              for j, x in enumerate(label_vectors)]
             for i, z in enumerate(noises)]
    return GridSpec(cells, axes={"rows": "noise", "cols": "labels"})


def interpolate_condition(te_a: dict[int, np.ndarray], te_b: dict[int, np.ndarray],
                          z_a, z_b, steps: int, psi: float = 1.0) -> GridSpec:
    """Two-axis linear interpolation: label embeddings along rows, style
    noise along columns; the four corners reproduce the inputs exactly."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if set(te_a) != set(te_b):
        raise ValueError("embedding scale sets differ")
    z_a = np.asarray(z_a, dtype=np.float64)
    z_b = np.asarray(z_b, dtype=np.float64)
    cells = []
    for i in range(steps):
        alpha = i / (steps - 1)
        te = {s: (1 - alpha) * np.asarray(te_a[s], dtype=np.float64)
                 + alpha * np.asarray(te_b[s], dtype=np.float64)
              for s in te_a}
        row = []
        for j in range(steps):
            beta = j / (steps - 1)
            row.append(GridCell(z=(1 - beta) * z_a + beta * z_b, psi=psi,
                                te=te, meta={"alpha": alpha, "beta": beta}))
        cells.append(row)
    return GridSpec(cells, axes={"rows": "label embedding", "cols": "style noise"})


def image_to_png_bytes(img: torch.Tensor) -> bytes:
    """CHW [-1,1] float image to PNG bytes (values clamped at export)."""
    arr = ((img.clamp(-1, 1) + 1) * 127.5).round().to(torch.uint8)
    pil = Image.fromarray(arr.permute(1, 2, 0).numpy())
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def render_cell(cell: GridCell, generator) -> torch.Tensor:
    z = torch.from_numpy(np.asarray(cell.z, dtype=np.float64)).float().unsqueeze(0)
    with torch.no_grad():
        if cell.labels is not None:
            x = torch.from_numpy(np.asarray(cell.labels)).float().unsqueeze(0)
            img = generator(x, z, psi=cell.psi)
        else:
            te = {s: torch.from_numpy(np.asarray(v, dtype=np.float64)).float().unsqueeze(0)
                  for s, v in cell.te.items()}
            shared = te[generator.scales[0]] if generator.cfg.sle_before_mapping else None
            w = generator.mapping_forward(z, shared)
            if cell.psi != 1.0:
                w = truncate(w, generator.w_avg, cell.psi)
            img = generator.synthesis(generator.styles_from(te, w))
    return img.squeeze(0)


def render_grid(spec: GridSpec, generator, out_png=None, out_json=None):
    """Render every cell, compose the grid image and collect per-cell
    metadata (labels or interpolation weights, psi, PNG hash)."""
    rows, cols = spec.shape
    res = generator.cfg.resolution
    if rows * res > MAX_GRID_PIXELS or cols * res > MAX_GRID_PIXELS:
        raise ValueError(f"grid exceeds {MAX_GRID_PIXELS}px on a side")
    composite = Image.new("RGB", (cols * res, rows * res))
    metadata = {"rows": rows, "cols": cols, "resolution": res,
                "axes": spec.axes, "cells": []}
    for i, row in enumerate(spec.cells):
        for j, cell in enumerate(row):
            img = render_cell(cell, generator)
            png = image_to_png_bytes(img)
            composite.paste(Image.open(io.BytesIO(png)), (j * res, i * res))
            entry = {"row": i, "col": j, "psi": cell.psi,
                     "sha256": hashlib.sha256(png).hexdigest(), **cell.meta}
            if cell.labels is not None:
                entry["labels"] = [int(b) for b in np.asarray(cell.labels)]
            metadata["cells"].append(entry)
    if out_png is not None:
        Path(out_png).parent.mkdir(parents=True, exist_ok=True)
        composite.save(out_png)
    if out_json is not None:
        Path(out_json).write_text(json.dumps(metadata, indent=2, sort_keys=True))
    return composite, metadata
