"""Evaluation metrics: per-label and macro AUROC, accuracy, precision,
recall, F1, and confusion matrices.

AUROC follows the Mann-Whitney convention: the probability that a random
positive scores above a random negative, with ties receiving half credit.
Labels where AUROC is undefined (no positives or no negatives) report None
and are excluded from the macro mean. Precision, recall, and F1 define
0/0 as 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def as_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class LabelMetrics:
    """All metrics for one label; auroc is None when undefined."""

    auroc: float | None
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: ConfusionMatrix


@dataclass(frozen=True)
class OverallMetrics:
    """Macro means over labels; auroc averages only labels where it is defined."""

    auroc: float | None
    accuracy: float
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricsReport:
    per_label: dict[str, LabelMetrics]
    overall: OverallMetrics

    def to_json_dict(self) -> dict:
        return {
            "overall": {
                "auroc": self.overall.auroc,
                "accuracy": self.overall.accuracy,
                "precision": self.overall.precision,
                "recall": self.overall.recall,
                "f1": self.overall.f1,
            },
            "per_label": {
                name: {
                    "auroc": m.auroc,
                    "accuracy": m.accuracy,
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "confusion": m.confusion.as_dict(),
                }
                for name, m in self.per_label.items()
            },
        }


def _as_binary(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 values")
    return arr.astype(np.int64)


def auroc(scores, labels) -> float | None:
    """Rank-based AUROC with average-rank tie handling.

    Equals (#correctly ranked positive/negative pairs + 0.5 * #ties) / (P*N).
    Returns None when the labels are single-class (undefined).
    """
    scores = np.asarray(scores, dtype=np.float64)
    binary = _as_binary(labels, "labels")
    if scores.shape != binary.shape or scores.ndim != 1:
        raise ValueError(
            f"scores and labels must be equal-length 1-D, got {scores.shape} vs {binary.shape}"
        )
    n_pos = int(binary.sum())
    n_neg = binary.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None

    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    # Average ranks within tie groups of the sorted scores.
    _, inverse, counts = np.unique(scores[order], return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    group_mean_rank = (ends - counts + 1 + ends) / 2.0
    ranks[order] = group_mean_rank[inverse]

    pos_rank_sum = float(ranks[binary == 1].sum())
    u_statistic = pos_rank_sum - n_pos * (n_pos + 1) / 2.0
    return u_statistic / (n_pos * n_neg)


def confusion(preds, targets) -> ConfusionMatrix:
    """Standard 2x2 counts for one label."""
    p = _as_binary(preds, "preds")
    t = _as_binary(targets, "targets")
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError(f"preds and targets must be equal-length 1-D, got {p.shape} vs {t.shape}")
    return ConfusionMatrix(
        tp=int(((p == 1) & (t == 1)).sum()),
        fp=int(((p == 1) & (t == 0)).sum()),
        tn=int(((p == 0) & (t == 0)).sum()),
        fn=int(((p == 0) & (t == 1)).sum()),
    )


def precision_recall_f1(cm: ConfusionMatrix) -> tuple[float, float, float]:
    """Precision, recall, and their harmonic mean; 0/0 defined as 0."""
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp > 0 else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn > 0 else 0.0
    denom = precision + recall
    f1 = 2.0 * precision * recall / denom if denom > 0 else 0.0
    return precision, recall, f1


def accuracy(preds, targets) -> tuple[float, np.ndarray]:
    """Overall and per-label (column) fraction of matching entries.

    With equal-length columns the overall value coincides with the mean of
    the per-label accuracies.
    """
    p = _as_binary(preds, "preds")
    t = _as_binary(targets, "targets")
    if p.shape != t.shape or p.ndim != 2:
        raise ValueError(f"preds and targets must share a 2-D shape, got {p.shape} vs {t.shape}")
    matches = (p == t).astype(np.float64)
    return float(matches.mean()), matches.mean(axis=0)


def build_report(probs, preds, targets, label_names: list[str]) -> MetricsReport:
    """Assemble per-label and macro metrics for a prediction run."""
    probs = np.asarray(probs, dtype=np.float64)
    p = _as_binary(preds, "preds")
    t = _as_binary(targets, "targets")
    if probs.shape != p.shape or p.shape != t.shape or probs.ndim != 2:
        raise ValueError(
            f"probs/preds/targets must share a 2-D shape, got {probs.shape}, {p.shape}, {t.shape}"
        )
    if probs.shape[1] != len(label_names):
        raise ValueError(
            f"{len(label_names)} label names for {probs.shape[1]} columns"
        )

    per_label: dict[str, LabelMetrics] = {}
    for i, name in enumerate(label_names):
        cm = confusion(p[:, i], t[:, i])
        prec, rec, f1 = precision_recall_f1(cm)
        per_label[name] = LabelMetrics(
            auroc=auroc(probs[:, i], t[:, i]),
            accuracy=float((p[:, i] == t[:, i]).mean()),
            precision=prec,
            recall=rec,
            f1=f1,
            confusion=cm,
        )

    defined_aurocs = [m.auroc for m in per_label.values() if m.auroc is not None]
    overall = OverallMetrics(
        auroc=float(np.mean(defined_aurocs)) if defined_aurocs else None,
        accuracy=float(np.mean([m.accuracy for m in per_label.values()])),
        precision=float(np.mean([m.precision for m in per_label.values()])),
        recall=float(np.mean([m.recall for m in per_label.values()])),
        f1=float(np.mean([m.f1 for m in per_label.values()])),
    )
    return MetricsReport(per_label=per_label, overall=overall)
