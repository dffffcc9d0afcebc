"""Command-line entry points tying the library together."""

import json
import logging
from pathlib import Path

import click
import numpy as np
import torch

from . import data as data_mod
from . import report as report_mod
from .classifier import (ClassifierConfig, evaluate_classifier, load_classifier,
                         per_class_average_precision, save_classifier,
                         split_dataset, train_classifier)
from .evaluate import (empirical_label_sampler, feature_stats, fid,
                       interpolate_condition, label_noise_grid,
                       map_on_generated, median_rank, render_grid)
from .service import create_app, load_generator, z_from_seed
from .trainer import Trainer, load_training_config


def _parse_ingredients(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _load_dataset(data_dir, resolution):
    return data_mod.load_dataset_dir(data_dir, resolution)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def cli(verbose):
    """Multilabel-conditioned image synthesis: data, training, evaluation,
    generation and serving."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command("make-toy-data")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--num-images", default=512, show_default=True)
@click.option("--resolution", default=64, show_default=True)
@click.option("--num-labels", default=10, show_default=True)
@click.option("--max-ingredients", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
def make_toy_data(out, num_images, resolution, num_labels, max_ingredients, seed):
    """Render a procedural labeled toy dataset."""
    cfg = data_mod.ToyDatasetConfig(
        num_images=num_images, resolution=resolution, num_labels=num_labels,
        max_ingredients_per_image=max_ingredients, seed=seed)
    manifest = data_mod.synth_toy_dataset(cfg, out)
    click.echo(f"wrote {len(manifest)} images to {out}")


@cli.command("train-classifier")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--resolution", default=64, show_default=True)
@click.option("--width", default=32, show_default=True)
@click.option("--epochs", default=8, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--lr", default=2e-3, show_default=True)
@click.option("--split", default=0.8, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--report", "report_dir", type=click.Path(path_type=Path),
              help="Also write a per-ingredient AP table here.")
def train_classifier_cmd(data_dir, out, resolution, width, epochs, batch_size,
                         lr, split, seed, report_dir):
    """Train the multilabel ingredient classifier on real data."""
    dataset = _load_dataset(data_dir, resolution)
    cfg = ClassifierConfig(resolution=resolution, num_labels=len(dataset.vocab),
                           width=width, epochs=epochs, batch_size=batch_size,
                           learning_rate=lr, split=split, seed=seed)
    model, history = train_classifier(dataset, cfg)
    save_classifier(model, out)
    final_map = history[-1]["test_map"]
    click.echo(f"saved classifier to {out} (held-out mAP {final_map:.4f})")
    if report_dir is not None:
        _, test_idx = split_dataset(len(dataset), split, seed)
        with torch.no_grad():
            scores = model(dataset.images[test_idx]).numpy()
        ap = per_class_average_precision(scores, dataset.labels[test_idx].numpy())
        path = report_mod.per_class_ap_report(
            dataset.vocab, [ap[c] for c in sorted(ap)],
            Path(report_dir) / "per_class_ap.csv")
        click.echo(f"wrote {path}")


@cli.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--classifier", "classifier_path", type=click.Path(exists=True, path_type=Path))
@click.option("--resume", "resume_path", type=click.Path(exists=True, path_type=Path))
@click.option("--resolution", type=int)
@click.option("--batch-size", type=int)
@click.option("--total-images", type=int)
@click.option("--seed", type=int)
@click.option("--eval-interval", type=int)
@click.option("--checkpoint-interval", type=int)
@click.option("--eval-samples", type=int)
@click.option("--set", "extra", multiple=True, metavar="KEY=VALUE",
              help="Override any config field.")
def train_cmd(config_path, data_dir, out_dir, classifier_path, resume_path,
              extra, **flags):
    """Run adversarial training; logs metrics.csv and writes checkpoints."""
    overrides = {k: v for k, v in flags.items() if v is not None}
    for pair in extra:
        if "=" not in pair:
            raise click.BadParameter(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value
    try:
        cfg = load_training_config(config_path, overrides)
    except ValueError as e:
        raise click.ClickException(str(e))

    dataset = _load_dataset(data_dir, cfg.resolution)
    if "label_dim" not in overrides and cfg.label_dim != len(dataset.vocab):
        cfg = load_training_config(
            config_path, {**overrides, "label_dim": len(dataset.vocab)})

    classifier_path = classifier_path or cfg.classifier_checkpoint_path
    classifier = load_classifier(classifier_path) if classifier_path else None
    try:
        if resume_path:
            trainer = Trainer.resume(resume_path, dataset, classifier, out_dir)
        else:
            trainer = Trainer(cfg, dataset, classifier, out_dir)
        history = trainer.train()
    except ValueError as e:
        raise click.ClickException(str(e))
    last = history[-1] if history else {}
    click.echo(f"finished at step {trainer.step} "
               f"(d_loss {last.get('d_loss', float('nan')):.4f}, "
               f"g_loss {last.get('g_loss', float('nan')):.4f})")
    click.echo(f"metrics: {trainer.metrics.path}")
    click.echo(f"checkpoint: {trainer.checkpoint_path}")


@cli.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--classifier", "classifier_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--metric", type=click.Choice(["fid", "map", "medr", "all"]),
              default="all", show_default=True)
@click.option("--n", default=2000, show_default=True,
              help="Number of generated images.")
@click.option("--seed", default=0, show_default=True)
@click.option("--truncation", default=1.0, show_default=True)
def eval_cmd(checkpoint, data_dir, classifier_path, metric, n, seed, truncation):
    """Score a checkpoint against real data with a frozen classifier."""
    generator, vocab = load_generator(checkpoint)
    dataset = _load_dataset(data_dir, generator.cfg.resolution)
    if list(vocab.names) != list(dataset.vocab.names):
        raise click.ClickException("checkpoint and dataset vocabularies differ")
    classifier = load_classifier(classifier_path)
    rng = np.random.Generator(np.random.Philox(seed))
    results = {}

    if metric in ("fid", "all"):
        n_real = min(len(dataset), n)
        real = feature_stats(dataset.images[:n_real], classifier.features)
        sampler = empirical_label_sampler(dataset, rng)
        gen_images = []
        with torch.no_grad():
            for i in range(0, n, 64):
                m = min(64, n - i)
                x = sampler(m)
                z = torch.from_numpy(
                    rng.standard_normal((m, generator.cfg.latent_dim))).float()
                gen_images.append(generator(x, z, psi=truncation).clamp(-1, 1))
        gen = feature_stats(torch.cat(gen_images), classifier.features)
        results["fid"] = fid(real, gen)
    if metric in ("map", "all"):
        results["map"] = map_on_generated(
            generator, classifier, empirical_label_sampler(dataset, rng),
            n, rng, psi=truncation)
    if metric in ("medr", "all"):
        m = min(len(dataset), n, 280)
        idx = rng.choice(len(dataset), size=m, replace=False)
        with torch.no_grad():
            z = torch.from_numpy(
                rng.standard_normal((m, generator.cfg.latent_dim))).float()
            gen_feats = classifier.features(
                generator(dataset.labels[idx], z, psi=truncation).clamp(-1, 1))
            real_feats = classifier.features(dataset.images[idx])
        gen_feats = gen_feats / gen_feats.norm(dim=1, keepdim=True).clamp_min(1e-12)
        real_feats = real_feats / real_feats.norm(dim=1, keepdim=True).clamp_min(1e-12)
        results["medr"] = median_rank((gen_feats @ real_feats.T).numpy())

    for key, value in results.items():
        click.echo(f"{key}: {value:.6f}")


@cli.command("generate")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--ingredients", default="", help="Comma-separated names; empty allowed.")
@click.option("--seed", default=0, show_default=True)
@click.option("--truncation", default=1.0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def generate_cmd(checkpoint, ingredients, seed, truncation, out):
    """Generate one image and write it as PNG plus a metadata JSON sibling."""
    generator, vocab = load_generator(checkpoint)
    names = _parse_ingredients(ingredients)
    try:
        bits = data_mod.encode_labels(names, vocab)
    except data_mod.VocabularyError as e:
        raise click.ClickException(str(e))
    if not 0.0 <= truncation <= 1.0:
        raise click.ClickException("truncation must lie in [0, 1]")
    x = torch.from_numpy(bits).unsqueeze(0)
    z = torch.from_numpy(z_from_seed(seed, generator.cfg.latent_dim)).float().unsqueeze(0)
    with torch.no_grad():
        img = generator(x, z, psi=truncation).squeeze(0)
    from .evaluate import image_to_png_bytes
    png = image_to_png_bytes(img)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(png)
    meta = {"ingredients": names, "labels": [int(b) for b in bits],
            "seed": seed, "truncation": truncation}
    out.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    click.echo(f"wrote {out}")


@cli.command("grid")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--mode", type=click.Choice(["labels", "interpolate"]),
              default="labels", show_default=True)
@click.option("--labels", "label_lists", default="",
              help="Semicolon-separated ingredient lists (labels mode columns).")
@click.option("--noises", default=4, show_default=True,
              help="Number of style-noise rows (labels mode).")
@click.option("--a", "spec_a", default="", help="Endpoint A ingredients.")
@click.option("--b", "spec_b", default="", help="Endpoint B ingredients.")
@click.option("--seed", default=0, show_default=True)
@click.option("--seed-b", default=1, show_default=True)
@click.option("--steps", default=8, show_default=True)
@click.option("--truncation", default=1.0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def grid_cmd(checkpoint, mode, label_lists, noises, spec_a, spec_b, seed,
             seed_b, steps, truncation, out):
    """Render a label/noise grid or a two-endpoint interpolation grid."""
    generator, vocab = load_generator(checkpoint)
    dim = generator.cfg.latent_dim
    try:
        if mode == "labels":
            columns = [data_mod.encode_labels(_parse_ingredients(part), vocab)
                       for part in label_lists.split(";")]
            zs = [z_from_seed(seed + i, dim) for i in range(noises)]
            spec = label_noise_grid(columns, zs, psi=truncation)
        else:
            x_a = torch.from_numpy(
                data_mod.encode_labels(_parse_ingredients(spec_a), vocab)).unsqueeze(0)
            x_b = torch.from_numpy(
                data_mod.encode_labels(_parse_ingredients(spec_b), vocab)).unsqueeze(0)
            with torch.no_grad():
                te_a = {s: t.squeeze(0).numpy() for s, t in generator.sle(x_a).items()}
                te_b = {s: t.squeeze(0).numpy() for s, t in generator.sle(x_b).items()}
            spec = interpolate_condition(te_a, te_b, z_from_seed(seed, dim),
                                         z_from_seed(seed_b, dim), steps,
                                         psi=truncation)
    except (data_mod.VocabularyError, ValueError) as e:
        raise click.ClickException(str(e))
    out.parent.mkdir(parents=True, exist_ok=True)
    render_grid(spec, generator, out_png=out, out_json=out.with_suffix(".json"))
    click.echo(f"wrote {out}")


@cli.command("serve")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--workers", default=2, show_default=True)
@click.option("--frontend", "frontend_dir", type=click.Path(exists=True, path_type=Path),
              help="Static UI bundle to mount at /.")
def serve_cmd(checkpoint, host, port, workers, frontend_dir):
    """Serve /health, /vocabulary, /generate and /interpolate over HTTP."""
    import uvicorn
    generator, vocab = load_generator(checkpoint)
    app = create_app(generator, vocab, workers=workers, frontend_dir=frontend_dir)
    click.echo(f"serving {len(vocab)} ingredients at {generator.cfg.resolution}px "
               f"on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port)


@cli.command("report")
@click.option("--metrics", "metrics_csv", type=click.Path(exists=True, path_type=Path),
              help="Trainer metrics.csv to plot.")
@click.option("--data", "data_dir", type=click.Path(exists=True, path_type=Path),
              help="Dataset dir for ingredient statistics.")
@click.option("--resolution", default=64, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def report_cmd(metrics_csv, data_dir, resolution, out_dir):
    """Render CSV tables and figures from training logs and datasets."""
    if metrics_csv is None and data_dir is None:
        raise click.UsageError("provide --metrics and/or --data")
    written = []
    if metrics_csv is not None:
        written += report_mod.training_report(metrics_csv, out_dir)
    if data_dir is not None:
        written += report_mod.dataset_report(_load_dataset(data_dir, resolution), out_dir)
    for path in written:
        click.echo(f"wrote {path}")


main = cli

if __name__ == "__main__":
    main()
