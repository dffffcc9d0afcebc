"""Report rendering: turn metrics logs and datasets into CSV tables plus
matplotlib figures written next to them."""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")   # render to files only, no display server
import matplotlib.pyplot as plt

from .trainer import METRICS_COLUMNS


def load_metrics(path) -> list[dict]:
    """Parse a trainer metrics CSV back into typed rows (None for blanks)."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(METRICS_COLUMNS):
            raise ValueError(f"{path} is not a metrics log "
                             f"(columns {reader.fieldnames})")
        rows = []
        for raw in reader:
            row = {"step": int(raw["step"])}
            for col in METRICS_COLUMNS[1:]:
                row[col] = float(raw[col]) if raw[col] else None
            rows.append(row)
    return rows


def _series(rows, key):
    pts = [(r["step"], r[key]) for r in rows if r[key] is not None]
    return [p[0] for p in pts], [p[1] for p in pts]


def training_report(metrics_csv, out_dir) -> list[Path]:
    """Loss/regularizer curves and, when evaluation rows exist, the metric
    trend figure plus an eval-only CSV."""
    rows = load_metrics(metrics_csv)
    if not rows:
        raise ValueError(f"metrics log {metrics_csv} is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for key in ("d_loss", "g_loss"):
        steps, vals = _series(rows, key)
        axes[0].plot(steps, vals, label=key, linewidth=0.8)
    axes[0].set_xlabel("step")
    axes[0].set_ylabel("loss")
    axes[0].legend()
    axes[0].set_title("adversarial losses")
    plotted = False
    for key in ("r1", "bce"):
        steps, vals = _series(rows, key)
        if steps:
            axes[1].plot(steps, vals, label=key, linewidth=0.8)
            plotted = True
    axes[1].set_xlabel("step")
    if plotted:
        axes[1].legend()
    axes[1].set_title("regularizers")
    fig.tight_layout()
    path = out_dir / "losses.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    eval_rows = [r for r in rows if r["fid"] is not None or r["map"] is not None]
    if eval_rows:
        path = out_dir / "eval.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "fid", "map"])
            for r in eval_rows:
                writer.writerow([r["step"],
                                 "" if r["fid"] is None else f"{r['fid']:.10g}",
                                 "" if r["map"] is None else f"{r['map']:.10g}"])
        written.append(path)

        fig, ax_fid = plt.subplots(figsize=(6, 4))
        ax_map = ax_fid.twinx()
        steps, vals = _series(eval_rows, "fid")
        if steps:
            ax_fid.plot(steps, vals, color="tab:blue", marker="o", label="fid")
            ax_fid.set_ylabel("fid", color="tab:blue")
        steps, vals = _series(eval_rows, "map")
        if steps:
            ax_map.plot(steps, vals, color="tab:orange", marker="s", label="map")
            ax_map.set_ylabel("map", color="tab:orange")
            ax_map.set_ylim(0, 1)
        ax_fid.set_xlabel("step")
        ax_fid.set_title("evaluation metrics")
        fig.tight_layout()
        path = out_dir / "eval.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def dataset_report(dataset, out_dir) -> list[Path]:
    """Per-ingredient image counts as CSV and a bar chart."""
    counts = dataset.label_counts()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = out_dir / "ingredient_counts.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ingredient", "count"])
        for name, count in counts.items():
            writer.writerow([name, count])
    written.append(path)

    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(counts)), 4))
    ax.bar(range(len(counts)), list(counts.values()), color="tab:green")
    ax.set_xticks(range(len(counts)))
    ax.set_xticklabels(list(counts.keys()), rotation=45, ha="right")
    ax.set_ylabel("images")
    ax.set_title(f"ingredient frequency over {len(dataset)} images")
    fig.tight_layout()
    path = out_dir / "ingredient_counts.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


def per_class_ap_report(vocabulary, ap_values, out_path) -> Path:
    """Per-ingredient average precision as a CSV table."""
    if len(ap_values) != len(vocabulary):
        raise ValueError("one AP value per vocabulary entry required")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ingredient", "average_precision"])
        for name, ap in zip(vocabulary.names, ap_values):
            writer.writerow([name, "" if ap != ap else f"{ap:.10g}"])
    return out_path
