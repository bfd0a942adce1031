"""Report writers: label-distribution tables, parameter-count tables,
per-label metric tables, model comparison tables, epoch-log JSONL, and PNG
plots of training curves and per-label confusion matrices.

CSV and JSON outputs are deterministic: fixed column orders, "\n" line
endings, and floats serialized with repr so they round-trip exactly.
Undefined AUROC values appear as the string "NaN" in CSV and null in JSON.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .manifest import LabelDistribution
from .metrics import MetricsReport
from .models import ParameterReport
from .training import EpochLog

DISTRIBUTION_COLUMNS = ("Label", "minusOneVal", "oneVal", "zeroVal", "nanVal")
PER_LABEL_COLUMNS = ("Label", "AUROC", "Accuracy", "Precision", "Recall", "F1")
COMPARISON_COLUMNS = ("Model Name", "Test AUROC", "Test Accuracy")
PARAMETER_COLUMNS = ("Modules", "Parameters")
PARAMETER_SUMMARY_COLUMNS = ("Model Name", "Total Parameters", "Trainable Parameters")


def _fmt(value: float | None) -> str:
    return "NaN" if value is None else repr(float(value))


def _open_csv(path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="", encoding="utf-8")


def write_distribution_csv(dist: LabelDistribution, path: str | Path) -> None:
    """Raw label-state counts, one row per label."""
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(DISTRIBUTION_COLUMNS))
        for row in dist.rows:
            writer.writerow([row.label, row.minus_one, row.one, row.zero, row.blank])


def write_distribution_json(dist: LabelDistribution, path: str | Path) -> None:
    payload = {
        "n_records": dist.n_records,
        "labels": [
            {
                "label": row.label,
                "minusOneVal": row.minus_one,
                "oneVal": row.one,
                "zeroVal": row.zero,
                "nanVal": row.blank,
            }
            for row in dist.rows
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_metrics_json(report: MetricsReport, path: str | Path) -> None:
    """Full metrics report; undefined AUROC serializes as null."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(report.to_json_dict(), indent=2) + "\n", encoding="utf-8"
    )


def write_per_label_csv(report: MetricsReport, path: str | Path) -> None:
    """Per-label metric table plus an Overall row."""
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(PER_LABEL_COLUMNS))
        for name, m in report.per_label.items():
            writer.writerow(
                [name, _fmt(m.auroc), _fmt(m.accuracy), _fmt(m.precision),
                 _fmt(m.recall), _fmt(m.f1)]
            )
        o = report.overall
        writer.writerow(
            ["Overall", _fmt(o.auroc), _fmt(o.accuracy), _fmt(o.precision),
             _fmt(o.recall), _fmt(o.f1)]
        )


def write_comparison_csv(
    rows: list[tuple[str, float | None, float]], path: str | Path
) -> None:
    """Model comparison table: (display name, test AUROC, test accuracy) rows."""
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(COMPARISON_COLUMNS))
        for name, auroc_value, accuracy_value in rows:
            writer.writerow([name, _fmt(auroc_value), _fmt(accuracy_value)])


def write_parameter_csv(report: ParameterReport, path: str | Path) -> None:
    """Per-tensor parameter counts with a Total row."""
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(PARAMETER_COLUMNS))
        for name, count in report.per_tensor:
            writer.writerow([name, count])
        writer.writerow(["Total", report.total])


def write_parameter_summary_csv(
    entries: list[tuple[str, int, int]], path: str | Path
) -> None:
    """Total/trainable parameter counts across models."""
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(PARAMETER_SUMMARY_COLUMNS))
        for name, total, trainable in entries:
            writer.writerow([name, total, trainable])


def write_epoch_logs(logs: list[EpochLog], path: str | Path) -> None:
    """JSONL, one epoch per line, byte-stable for a given run."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for entry in logs:
            fh.write(entry.to_json_line() + "\n")


def read_epoch_logs(path: str | Path) -> list[EpochLog]:
    logs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                logs.append(EpochLog.from_json_line(line))
    return logs


def plot_training_curves(logs: list[EpochLog], path: str | Path) -> None:
    """Loss curves and validation macro AUROC over epochs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    epochs = [entry.epoch for entry in logs]
    fig, (ax_loss, ax_auc) = plt.subplots(1, 2, figsize=(10, 4))
    ax_loss.plot(epochs, [entry.train_loss for entry in logs], label="train loss")
    ax_loss.plot(epochs, [entry.val_loss for entry in logs], label="val loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    ax_auc.plot(
        epochs,
        [entry.val_auroc for entry in logs],
        label="val macro AUROC",
        color="tab:green",
    )
    ax_auc.set_xlabel("epoch")
    ax_auc.set_ylabel("AUROC")
    ax_auc.set_ylim(0.0, 1.0)
    ax_auc.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_confusion_grid(report: MetricsReport, path: str | Path) -> None:
    """One 2x2 confusion panel per label."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(report.per_label)
    n_cols = 5
    n_rows = (len(names) + n_cols - 1) // n_cols
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(3 * n_cols, 3 * n_rows))
    flat = np.asarray(axes).ravel()
    for ax in flat[len(names):]:
        ax.axis("off")
    for ax, name in zip(flat, names):
        cm = report.per_label[name].confusion
        grid = np.array([[cm.tn, cm.fp], [cm.fn, cm.tp]], dtype=np.int64)
        ax.imshow(grid, cmap="Blues")
        for r in range(2):
            for c in range(2):
                ax.text(c, r, str(grid[r, c]), ha="center", va="center")
        ax.set_xticks([0, 1], ["pred 0", "pred 1"])
        ax.set_yticks([0, 1], ["true 0", "true 1"])
        ax.set_title(name, fontsize=9)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_distribution(dist: LabelDistribution, path: str | Path) -> None:
    """Grouped bars of raw label states per label."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [row.label for row in dist.rows]
    x = np.arange(len(names))
    width = 0.2
    fig, ax = plt.subplots(figsize=(14, 5))
    ax.bar(x - 1.5 * width, [r.minus_one for r in dist.rows], width, label="-1")
    ax.bar(x - 0.5 * width, [r.one for r in dist.rows], width, label="1")
    ax.bar(x + 0.5 * width, [r.zero for r in dist.rows], width, label="0")
    ax.bar(x + 1.5 * width, [r.blank for r in dist.rows], width, label="blank")
    ax.set_xticks(x, names, rotation=45, ha="right")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
