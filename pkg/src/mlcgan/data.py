"""Dataset formats and loading.

On disk a dataset is a directory with a plain-text vocabulary (one
ingredient name per line), a JSON Lines manifest whose records carry an
image path and its ingredient names, and the image files themselves. A
procedural toy dataset generator draws label-separable "pizzas" (a crust
disc with one distinctive glyph pattern per active ingredient) for
desk-scale training and CI.
"""

import colorsys
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw, UnidentifiedImageError

log = logging.getLogger(__name__)

VOCAB_FILENAME = "vocabulary.txt"
MANIFEST_FILENAME = "manifest.jsonl"

# Default toy ingredient names; indices beyond the list fall back to
# generated names so any C works.
TOY_INGREDIENTS = [
    "Pepperoni", "Mushroom", "Fresh basil", "Black olives", "Corn",
    "Tomatoes", "Peppers", "Onions", "Bacon", "Arugula",
]


class VocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class IngredientVocabulary:
    """Ordered, unique ingredient names; order defines label bit positions."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise VocabularyError("vocabulary is empty")
        seen = set()
        for name in self.names:
            if name in seen:
                raise VocabularyError(f"duplicate ingredient name: {name!r}")
            seen.add(name)

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self.names

    @property
    def size(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise VocabularyError(f"unknown ingredient name: {name!r}") from None

    def decode(self, bits) -> list[str]:
        """Bit positions back to names (inverse of encode_labels)."""
        bits = np.asarray(bits)
        if bits.shape[-1] != len(self.names):
            raise VocabularyError(
                f"label vector length {bits.shape[-1]} != vocabulary size {len(self.names)}")
        return [n for n, b in zip(self.names, bits) if b]


def load_vocabulary(path) -> IngredientVocabulary:
    """Read one ingredient name per line, preserving file order."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"vocabulary file not found: {path}")
    names = [line.strip() for line in path.read_text().splitlines() if line.strip()]
    return IngredientVocabulary(tuple(names))


def save_vocabulary(vocab: IngredientVocabulary, path) -> None:
    Path(path).write_text("".join(f"{n}\n" for n in vocab.names))


def encode_labels(names, vocab: IngredientVocabulary) -> np.ndarray:
    """Binary indicator vector over the vocabulary; duplicates are idempotent."""
    bits = np.zeros(len(vocab), dtype=np.float32)
    for name in names:
        bits[vocab.index(name)] = 1.0
    return bits


@dataclass
class ManifestRecord:
    image: str
    ingredients: list[str]


@dataclass
class DatasetManifest:
    records: list[ManifestRecord]
    root: Path

    def __len__(self):
        return len(self.records)


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            records.append(ManifestRecord(obj["image"], list(obj["ingredients"])))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ValueError(f"{path}:{lineno}: bad manifest record: {e}") from e
    return DatasetManifest(records, path.parent)


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w") as f:
        for rec in manifest.records:
            f.write(json.dumps({"image": rec.image,
                                "ingredients": rec.ingredients}) + "\n")


def _load_image(path: Path, resolution: int) -> torch.Tensor:
    """Center-crop to square, bilinear-resize, scale to [-1, 1]; CHW float32."""
    with Image.open(path) as im:
        im = im.convert("RGB")
        w, h = im.size
        side = min(w, h)
        left, top = (w - side) // 2, (h - side) // 2
        im = im.crop((left, top, left + side, top + side))
        im = im.resize((resolution, resolution), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32) / 127.5 - 1.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


class Dataset:
    """In-memory (image, label) pairs at a fixed resolution.

    Images are loaded eagerly so that samplers are cheap and reads are safe
    from any number of threads. Undecodable images are skipped with a
    warning; the count is kept in `skipped`.
    """

    def __init__(self, images: torch.Tensor, labels: torch.Tensor,
                 vocab: IngredientVocabulary, resolution: int, skipped: int = 0):
        self.images = images
        self.labels = labels
        self.vocab = vocab
        self.resolution = resolution
        self.skipped = skipped

    def __len__(self):
        return self.images.shape[0]

    def __getitem__(self, i):
        return self.images[i], self.labels[i]

    def label_counts(self) -> dict[str, int]:
        """Per-ingredient sample counts plus the '[empty]' bucket."""
        counts = {name: int(self.labels[:, j].sum().item())
                  for j, name in enumerate(self.vocab.names)}
        counts["[empty]"] = int((self.labels.sum(dim=1) == 0).sum().item())
        return counts


def load_dataset(manifest: DatasetManifest, vocab: IngredientVocabulary,
                 resolution: int) -> Dataset:
    images, labels = [], []
    skipped = 0
    for rec in manifest.records:
        path = manifest.root / rec.image
        bits = encode_labels(rec.ingredients, vocab)   # unknown name: hard error
        try:
            img = _load_image(path, resolution)
        except (FileNotFoundError, UnidentifiedImageError, OSError) as e:
            skipped += 1
            log.warning("skipping undecodable image %s (%s)", path, e)
            continue
        images.append(img)
        labels.append(torch.from_numpy(bits))
    if skipped:
        log.warning("skipped %d undecodable image(s)", skipped)
    if not images:
        raise ValueError("dataset is empty after loading")
    return Dataset(torch.stack(images), torch.stack(labels), vocab,
                   resolution, skipped)


def load_dataset_dir(root, resolution: int) -> Dataset:
    """Convenience: dataset directory with standard vocabulary/manifest names."""
    root = Path(root)
    vocab = load_vocabulary(root / VOCAB_FILENAME)
    manifest = load_manifest(root / MANIFEST_FILENAME)
    return load_dataset(manifest, vocab, resolution)


def sample_batch(dataset: Dataset, batch_size: int, rng: np.random.Generator):
    """Uniform sampling with replacement; advances `rng` deterministically."""
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2 (minibatch statistics)")
    idx = rng.integers(0, len(dataset), size=batch_size)
    return dataset.images[idx], dataset.labels[idx]


def sample_mismatched(dataset: Dataset, labels: torch.Tensor,
                      rng: np.random.Generator, max_tries: int = 100):
    """Label vectors drawn from the dataset that differ row-wise from the
    query labels (the wrong half of a wrong pair)."""
    out = []
    for q in labels:
        for attempt in range(max_tries):
            j = int(rng.integers(0, len(dataset)))
            if not torch.equal(dataset.labels[j], q):
                out.append(dataset.labels[j])
                break
        else:
            raise ValueError(
                "could not find a mismatched label list in "
                f"{max_tries} tries; dataset labels may be all identical")
    return torch.stack(out)


# ---------------------------------------------------------------------------
# Toy dataset synthesis
# ---------------------------------------------------------------------------

@dataclass
class ToyDatasetConfig:
    num_images: int = 1000
    resolution: int = 64
    num_labels: int = 10
    seed: int = 0
    max_ingredients_per_image: int = 3

    def __post_init__(self):
        if self.resolution not in (32, 64, 128, 256):
            raise ValueError("resolution must be one of 32, 64, 128, 256")
        if self.num_images < 1:
            raise ValueError("num_images must be positive")
        if not 1 <= self.max_ingredients_per_image <= self.num_labels:
            raise ValueError(
                "max_ingredients_per_image must lie in [1, num_labels]")


def toy_vocabulary(num_labels: int) -> IngredientVocabulary:
    names = list(TOY_INGREDIENTS[:num_labels])
    names += [f"Topping {i:02d}" for i in range(len(names), num_labels)]
    return IngredientVocabulary(tuple(names))


def _glyph_palette(num_labels: int) -> list[tuple[tuple[int, int, int], str]]:
    """Fixed (color, shape) pair per class, hues maximally separated."""
    shapes = ["circle", "square", "triangle", "cross", "diamond",
              "ring", "bar", "chevron", "dot3", "x"]
    palette = []
    for i in range(num_labels):
        r, g, b = colorsys.hsv_to_rgb(i / num_labels, 0.9, 0.95)
        palette.append(((int(r * 255), int(g * 255), int(b * 255)),
                        shapes[i % len(shapes)]))
    return palette


def _draw_glyph(draw: ImageDraw.ImageDraw, shape: str, cx, cy, r, color):
    box = (cx - r, cy - r, cx + r, cy + r)
    if shape == "circle":
        draw.ellipse(box, fill=color)
    elif shape == "square":
        draw.rectangle(box, fill=color)
    elif shape == "triangle":
        draw.polygon([(cx, cy - r), (cx - r, cy + r), (cx + r, cy + r)], fill=color)
    elif shape == "cross":
        t = max(1, r // 2)
        draw.rectangle((cx - t, cy - r, cx + t, cy + r), fill=color)
        draw.rectangle((cx - r, cy - t, cx + r, cy + t), fill=color)
    elif shape == "diamond":
        draw.polygon([(cx, cy - r), (cx + r, cy), (cx, cy + r), (cx - r, cy)], fill=color)
    elif shape == "ring":
        draw.ellipse(box, outline=color, width=max(1, r // 2))
    elif shape == "bar":
        draw.rectangle((cx - r, cy - r // 2, cx + r, cy + r // 2), fill=color)
    elif shape == "chevron":
        t = max(1, r // 2)
        draw.line([(cx - r, cy + r), (cx, cy - r), (cx + r, cy + r)],
                  fill=color, width=t)
    elif shape == "dot3":
        for dx, dy in ((-r // 2, r // 2), (r // 2, r // 2), (0, -r // 2)):
            rr = max(1, r // 3)
            draw.ellipse((cx + dx - rr, cy + dy - rr, cx + dx + rr, cy + dy + rr),
                         fill=color)
    elif shape == "x":
        t = max(1, r // 2)
        draw.line([(cx - r, cy - r), (cx + r, cy + r)], fill=color, width=t)
        draw.line([(cx - r, cy + r), (cx + r, cy - r)], fill=color, width=t)
    else:
        raise ValueError(f"unknown glyph shape {shape!r}")


def _render_toy_image(bits: np.ndarray, resolution: int,
                      rng: np.random.Generator,
                      palette) -> Image.Image:
    # Draw at 4x and downscale for clean edges.
    ss = 4
    size = resolution * ss
    bg = 18 + rng.integers(0, 12)
    im = Image.new("RGB", (size, size), (bg, bg - 4, bg - 6))
    draw = ImageDraw.Draw(im)

    cx = size / 2 + rng.uniform(-0.03, 0.03) * size
    cy = size / 2 + rng.uniform(-0.03, 0.03) * size
    crust_r = (0.40 + rng.uniform(-0.02, 0.03)) * size
    crust = (199 + rng.integers(-8, 9), 158 + rng.integers(-8, 9), 92)
    draw.ellipse((cx - crust_r, cy - crust_r, cx + crust_r, cy + crust_r),
                 fill=crust)
    sauce_r = crust_r * 0.86
    sauce = (176 + rng.integers(-10, 11), 62, 40)
    draw.ellipse((cx - sauce_r, cy - sauce_r, cx + sauce_r, cy + sauce_r),
                 fill=sauce)

    glyph_r = int(size * 0.045)
    for j in np.flatnonzero(bits):
        color, shape = palette[j]
        for _ in range(int(rng.integers(5, 9))):
            ang = rng.uniform(0, 2 * math.pi)
            rad = sauce_r * 0.85 * math.sqrt(rng.uniform())
            gx, gy = cx + rad * math.cos(ang), cy + rad * math.sin(ang)
            _draw_glyph(draw, shape, gx, gy, glyph_r, color)

    return im.resize((resolution, resolution), Image.LANCZOS)


def synth_toy_dataset(cfg: ToyDatasetConfig, out_dir) -> DatasetManifest:
    """Write a deterministic procedural dataset: images/, manifest, vocabulary.

    Per image, the label-subset size is drawn uniformly from
    0..max_ingredients_per_image and the subset of that size uniformly.
    """
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    vocab = toy_vocabulary(cfg.num_labels)
    palette = _glyph_palette(cfg.num_labels)
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))

    records = []
    for i in range(cfg.num_images):
        k = int(rng.integers(0, cfg.max_ingredients_per_image + 1))
        chosen = rng.choice(cfg.num_labels, size=k, replace=False) if k else []
        bits = np.zeros(cfg.num_labels, dtype=np.int64)
        bits[list(chosen)] = 1
        im = _render_toy_image(bits, cfg.resolution, rng, palette)
        rel = f"images/{i:06d}.png"
        im.save(out_dir / rel)
        records.append(ManifestRecord(rel, vocab.decode(bits)))

    manifest = DatasetManifest(records, out_dir)
    save_manifest(manifest, out_dir / MANIFEST_FILENAME)
    save_vocabulary(vocab, out_dir / VOCAB_FILENAME)
    return manifest
