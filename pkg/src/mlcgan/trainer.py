"""Adversarial training loop.

Each step runs one discriminator update on (fake, real, wrong-label) batches
followed by one generator update on fresh fakes with the classification
regularizer. The R1 penalty is evaluated lazily every ``r1_interval`` steps
and scaled by the interval so its expected per-step contribution matches the
non-lazy form. The loop tracks a w_avg for truncation and an EMA copy of the
generator for inference, logs a metrics CSV and writes atomic checkpoints
that resume bit-for-bit (model, optimizer moments and rng streams).
"""

import copy
import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import torch
import yaml

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .classifier import mean_average_precision
from .data import Dataset, sample_batch, sample_mismatched
from .discriminator import DiscriminatorConfig, DualBranchDiscriminator
from .evaluate import FeatureAccumulator, feature_stats, fid
from .generator import ConditionalGenerator, GeneratorConfig
from .losses import (LossWeights, adversarial_g_loss, classification_regularizer,
                     discriminator_loss, r1_penalty)

METRICS_COLUMNS = ("step", "d_loss", "g_loss", "r1", "bce", "fid", "map")


class NonFiniteLossError(RuntimeError):
    """A loss term went NaN/Inf; carries the step and all loss components."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class TrainingConfig:
    resolution: int = 64
    label_dim: int = 10
    batch_size: int = 24
    learning_rate: float = 0.002
    adam_beta1: float = 0.0
    adam_beta2: float = 0.99
    adam_eps: float = 1e-8

    lambda_uncond: float = 1.0
    lambda_clf: float = 1.0
    lambda_r1: float = 10.0
    lambda_wrong: float = 1.0
    r1_interval: int = 16

    total_images: int = 200_000
    ema_decay: float = 0.999
    w_avg_decay: float = 0.995
    seed: int = 0

    latent_dim: int = 256
    embed_dim: int = 256
    mapping_layers: int = 8
    mapping_lr_mul: float = 0.01
    sle_depth: int = 1
    channel_base: int = 16384
    channel_max: int = 512
    group_size: int = 4
    use_noise: bool = False

    disable_mapping: bool = False
    disable_sle: bool = False
    sle_before_mapping: bool = False
    disable_cr: bool = False
    disable_uncond: bool = False
    sle_grad_from_d: bool = False

    checkpoint_interval: int = 1000
    eval_interval: int = 1000
    eval_samples: int = 2048
    classifier_checkpoint_path: str | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.total_images < 0:
            raise ValueError("total_images must be >= 0")
        for name in ("ema_decay", "w_avg_decay"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if self.eval_samples < 2:
            raise ValueError("eval_samples must be >= 2")
        # flag consistency is owned by the generator config
        self.generator_config()

    @property
    def total_steps(self) -> int:
        return -(-self.total_images // self.batch_size)

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            resolution=self.resolution, label_dim=self.label_dim,
            embed_dim=self.embed_dim, latent_dim=self.latent_dim,
            mapping_layers=self.mapping_layers, mapping_lr_mul=self.mapping_lr_mul,
            sle_depth=self.sle_depth, channel_base=self.channel_base,
            channel_max=self.channel_max, use_noise=self.use_noise,
            disable_mapping=self.disable_mapping, disable_sle=self.disable_sle,
            sle_before_mapping=self.sle_before_mapping)

    def discriminator_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(
            resolution=self.resolution, embed_dim=self.embed_dim,
            channel_base=self.channel_base, channel_max=self.channel_max,
            group_size=self.group_size, uncond_branch=not self.disable_uncond)

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            lambda_uncond=0.0 if self.disable_uncond else self.lambda_uncond,
            lambda_clf=0.0 if self.disable_cr else self.lambda_clf,
            lambda_r1=self.lambda_r1, lambda_wrong=self.lambda_wrong,
            r1_interval=self.r1_interval)


def apply_ablation(cfg: TrainingConfig):
    """Resolve the config's variant flags into concrete model configs and
    loss weights (the 'wiring' the flags stand for)."""
    return cfg.generator_config(), cfg.discriminator_config(), cfg.loss_weights()


def _coerce(name: str, annotation: str, value):
    if not isinstance(value, str):
        return value
    text = value.strip()
    if "str" in annotation:
        return None if text.lower() in ("none", "null") else text
    if text.lower() in ("none", "null"):
        return None
    if "bool" in annotation:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean for {name}: {value!r}")
    if "int" in annotation:
        return int(text)
    if "float" in annotation:
        return float(text)
    return text


def load_training_config(path=None, overrides: dict | None = None) -> TrainingConfig:
    """Build a config from an optional YAML file plus override pairs (CLI
    flags or key=value strings); unknown keys are rejected."""
    values: dict = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text())
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {path} must contain a mapping")
        values.update(loaded)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name: f for f in fields(TrainingConfig)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    coerced = {k: _coerce(k, str(known[k].type), v) for k, v in values.items()}
    return TrainingConfig(**coerced)


@torch.no_grad()
def ema_update(target: torch.nn.Module, source: torch.nn.Module, decay: float) -> None:
    """target <- decay*target + (1-decay)*source; buffers are copied so the
    EMA model tracks w_avg. decay=0 copies exactly."""
    for p_t, p_s in zip(target.parameters(), source.parameters()):
        if decay == 0.0:
            p_t.copy_(p_s)
        else:
            p_t.lerp_(p_s, 1.0 - decay)
    for b_t, b_s in zip(target.buffers(), source.buffers()):
        b_t.copy_(b_s)


class MetricsLog:
    """Append-only CSV with a fixed column set; blank cells for metrics not
    computed at a step."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists() or self.path.stat().st_size == 0:
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(METRICS_COLUMNS)

    def append(self, row: dict) -> None:
        cells = []
        for col in METRICS_COLUMNS:
            v = row.get(col)
            if v is None:
                cells.append("")
            elif col == "step":
                cells.append(str(int(v)))
            else:
                cells.append(f"{v:.10g}")
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow(cells)


class Trainer:
    def __init__(self, cfg: TrainingConfig, dataset: Dataset,
                 classifier=None, out_dir=None):
        if len(dataset.vocab) != cfg.label_dim:
            raise ValueError(
                f"dataset has C={len(dataset.vocab)} ingredients but the "
                f"config says label_dim={cfg.label_dim}")
        if dataset.resolution != cfg.resolution:
            raise ValueError(
                f"dataset resolution {dataset.resolution} != config "
                f"resolution {cfg.resolution}")
        self.cfg = cfg
        self.dataset = dataset
        gen_cfg, disc_cfg, self.weights = apply_ablation(cfg)
        if self.weights.lambda_clf > 0 and classifier is None:
            raise ValueError("lambda_clf > 0 requires a pretrained classifier")
        if classifier is not None and classifier.cfg.num_labels != cfg.label_dim:
            raise ValueError(
                f"classifier C={classifier.cfg.num_labels} != config C={cfg.label_dim}")
        self.classifier = classifier
        if classifier is not None:
            classifier.eval()
            for p in classifier.parameters():
                p.requires_grad_(False)

        torch.manual_seed(cfg.seed)
        self.generator = ConditionalGenerator(gen_cfg, seed=cfg.seed)
        self.discriminator = DualBranchDiscriminator(disc_cfg, seed=cfg.seed + 1)
        self.ema = copy.deepcopy(self.generator)
        self.ema.eval()
        for p in self.ema.parameters():
            p.requires_grad_(False)

        sle_params = list(self.generator.sle.parameters())
        g_rest = [p for n, p in self.generator.named_parameters()
                  if not n.startswith("sle.")]
        d_params = list(self.discriminator.parameters())
        if not {id(p) for p in g_rest}.isdisjoint({id(p) for p in d_params}):
            raise AssertionError("generator and discriminator share parameters")
        betas = (cfg.adam_beta1, cfg.adam_beta2)
        self.opt_g = torch.optim.Adam(g_rest + sle_params, lr=cfg.learning_rate,
                                      betas=betas, eps=cfg.adam_eps)
        # the label encoder normally learns from the G loss only; the flag
        # lets the D loss update it too
        self.opt_d = torch.optim.Adam(
            d_params + (sle_params if cfg.sle_grad_from_d else []),
            lr=cfg.learning_rate, betas=betas, eps=cfg.adam_eps)

        self.rng = np.random.Generator(np.random.Philox(cfg.seed))
        self.step = 0
        self.r1_evals = 0
        self.history: list[dict] = []
        self._real_stats = None

        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.metrics = MetricsLog(self.out_dir / "metrics.csv") if self.out_dir else None
        self.checkpoint_path = (self.out_dir / "checkpoint.npz") if self.out_dir else None

    # -- sampling ----------------------------------------------------------

    def _draw_z(self, n: int) -> torch.Tensor:
        return torch.from_numpy(
            self.rng.standard_normal((n, self.cfg.latent_dim))).float()

    def _draw_labels(self, n: int) -> torch.Tensor:
        idx = self.rng.integers(0, len(self.dataset), size=n)
        return self.dataset.labels[idx]

    def _embed(self, x: torch.Tensor, detach: bool) -> dict:
        te = self.generator.sle(x)
        if detach:
            te = {s: t.detach() for s, t in te.items()}
        return te

    def _compose_fake(self, x: torch.Tensor, z: torch.Tensor,
                      update_w_avg: bool = False):
        g = self.generator
        te = g.sle(x)
        shared = te[g.scales[0]] if self.cfg.sle_before_mapping else None
        w = g.mapping_forward(z, shared)
        if update_w_avg and g.mapping is not None:
            g.update_w_avg(w, self.cfg.w_avg_decay)
        return g.synthesis(g.styles_from(te, w)), te

    # -- steps -------------------------------------------------------------

    def _ensure_finite(self, step: int, components: dict) -> None:
        bad = [k for k, v in components.items()
               if v is not None and not math.isfinite(v)]
        if bad:
            raise NonFiniteLossError(
                f"non-finite loss at step {step}: {', '.join(bad)}",
                {"step": step, **components})

    def train_step(self) -> dict:
        cfg, weights = self.cfg, self.weights
        step = self.step + 1
        detach_te = not cfg.sle_grad_from_d

        # discriminator update on (fake, real, wrong)
        real_y, real_x = sample_batch(self.dataset, cfg.batch_size, self.rng)
        with torch.no_grad():
            fake_y, _ = self._compose_fake(real_x, self._draw_z(cfg.batch_size))
        te = self._embed(real_x, detach_te)
        wrong_x = sample_mismatched(self.dataset, real_x, self.rng)
        te_wrong = self._embed(wrong_x, detach_te)
        real_scores = self.discriminator(real_y, te)
        fake_scores = self.discriminator(fake_y, te)
        wrong_s_c = self.discriminator(real_y, te_wrong).s_c
        d_loss = discriminator_loss(real_scores, fake_scores, wrong_s_c, weights)

        r1_value = None
        total_d = d_loss
        if step % weights.r1_interval == 0:
            te_r1 = {s: t.detach() for s, t in te.items()}
            r1 = r1_penalty(self.discriminator, real_y, te_r1, weights)
            r1 = r1 * weights.r1_interval   # lazy evaluation compensation
            total_d = d_loss + r1
            r1_value = float(r1.detach())
            self.r1_evals += 1

        self.opt_d.zero_grad(set_to_none=True)
        total_d.backward()
        self.opt_d.step()

        # generator update on fresh fakes
        x_g = self._draw_labels(cfg.batch_size)
        fake, te_g = self._compose_fake(x_g, self._draw_z(cfg.batch_size),
                                        update_w_avg=True)
        scores = self.discriminator(fake, te_g)
        g_loss = adversarial_g_loss(scores, weights)
        bce_value = None
        if weights.lambda_clf > 0:
            bce = classification_regularizer(x_g, self.classifier(fake))
            g_loss = g_loss + weights.lambda_clf * bce
            bce_value = float(bce.detach())

        self.opt_g.zero_grad(set_to_none=True)
        g_loss.backward()
        self.opt_g.step()
        ema_update(self.ema, self.generator, cfg.ema_decay)

        self.step = step
        row = {"step": step, "d_loss": float(d_loss.detach()),
               "g_loss": float(g_loss.detach()), "r1": r1_value, "bce": bce_value}
        self._ensure_finite(step, row)
        return row

    # -- evaluation --------------------------------------------------------

    def _real_feature_stats(self):
        if self._real_stats is None:
            n = min(len(self.dataset), self.cfg.eval_samples)
            self._real_stats = feature_stats(
                self.dataset.images[:n], self.classifier.features)
        return self._real_stats

    def evaluate(self, step: int | None = None):
        """FID and generated-image mAP from an EMA snapshot; returns
        (None, None) when no classifier is available."""
        if self.classifier is None:
            return None, None
        cfg = self.cfg
        step = self.step if step is None else step
        rng = np.random.Generator(np.random.Philox([cfg.seed, step]))
        n = min(cfg.eval_samples, max(64, len(self.dataset)))
        acc = FeatureAccumulator(self.classifier.feature_dim)
        scores, labels = [], []
        self.ema.eval()
        with torch.no_grad():
            done = 0
            while done < n:
                m = min(32, n - done)
                x = self.dataset.labels[rng.integers(0, len(self.dataset), size=m)]
                z = torch.from_numpy(
                    rng.standard_normal((m, cfg.latent_dim))).float()
                imgs = self.ema(x, z).clamp(-1, 1)
                feats = self.classifier.features(imgs)
                acc.update(feats.numpy())
                scores.append(self.classifier.head(feats))
                labels.append(x)
                done += m
        fid_value = fid(self._real_feature_stats(), acc.stats())
        map_value = mean_average_precision(torch.cat(scores).numpy(),
                                           torch.cat(labels).numpy())
        return fid_value, map_value

    # -- persistence -------------------------------------------------------

    def save(self, path=None) -> None:
        path = path if path is not None else self.checkpoint_path
        if path is None:
            raise ValueError("no checkpoint path (trainer built without out_dir)")
        state = {
            "generator": self.generator.state_dict(),
            "ema": self.ema.state_dict(),
            "discriminator": self.discriminator.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_d": self.opt_d.state_dict(),
            "rng_numpy": self.rng.bit_generator.state,
            "rng_torch": torch.get_rng_state(),
            "r1_evals": self.r1_evals,
        }
        save_checkpoint(path, step=self.step, config=asdict(self.cfg),
                        vocabulary=self.dataset.vocab.names, state=state)

    def _load_state(self, ck: Checkpoint) -> None:
        self.generator.load_state_dict(ck.state["generator"])
        self.ema.load_state_dict(ck.state["ema"])
        self.discriminator.load_state_dict(ck.state["discriminator"])
        self.opt_g.load_state_dict(ck.state["opt_g"])
        self.opt_d.load_state_dict(ck.state["opt_d"])
        self.rng.bit_generator.state = ck.state["rng_numpy"]
        torch.set_rng_state(ck.state["rng_torch"])
        self.r1_evals = int(ck.state["r1_evals"])
        self.step = ck.step

    @classmethod
    def resume(cls, checkpoint_path, dataset: Dataset, classifier=None,
               out_dir=None) -> "Trainer":
        ck = load_checkpoint(checkpoint_path)
        if ck.vocabulary != list(dataset.vocab.names):
            raise ValueError("checkpoint vocabulary does not match the dataset")
        trainer = cls(TrainingConfig(**ck.config), dataset, classifier, out_dir)
        trainer._load_state(ck)
        return trainer

    # -- loop --------------------------------------------------------------

    def _log(self, row: dict) -> None:
        self.history.append(row)
        if self.metrics is not None:
            self.metrics.append(row)

    def train(self) -> list[dict]:
        cfg = self.cfg
        total = cfg.total_steps
        eval_every = cfg.eval_interval
        if self.step == 0 and eval_every > 0 and self.classifier is not None and total > 0:
            fid_value, map_value = self.evaluate(step=0)
            self._log({"step": 0, "fid": fid_value, "map": map_value})
        while self.step < total:
            row = self.train_step()
            if eval_every > 0 and (row["step"] % eval_every == 0 or row["step"] == total):
                fid_value, map_value = self.evaluate()
                row["fid"], row["map"] = fid_value, map_value
            self._log(row)
            if (self.checkpoint_path is not None and cfg.checkpoint_interval > 0
                    and row["step"] % cfg.checkpoint_interval == 0):
                self.save()
        if self.checkpoint_path is not None:
            self.save()
        return self.history
