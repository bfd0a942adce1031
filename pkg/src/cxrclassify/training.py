"""Training engine: probability-space BCE, seeded epoch loop with plateau LR
decay and early stopping on validation macro AUROC, thresholded prediction,
and checkpoint save/load.

Determinism contract: same seed, data, and config produce byte-identical
epoch logs and bit-identical predictions. Shuffling uses a fresh generator
seeded per epoch, and augmentation draws come from a per-record stream, so
nothing depends on global RNG state or worker scheduling.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from .errors import CheckpointError, TrainingError
from .images import AugmentationConfig, augmentation_rng, load_image
from .labels import LABEL_NAMES, PolicyConfig, resolve_targets
from .manifest import DatasetManifest, StudyRecord
from .metrics import MetricsReport, auroc, build_report
from .models import build_model, set_train_mode

LOSS_EPS = 1e-7
CHECKPOINT_FORMAT_VERSION = 1

# Offset keeping per-epoch shuffle streams disjoint across nearby seeds.
_EPOCH_SEED_STRIDE = 1_000_003


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters."""

    batch_size: int = 96
    max_epochs: int = 40
    learning_rate: float = 1e-3
    plateau_factor: float = 0.1
    plateau_patience: int = 2
    early_stop_patience: int = 5
    threshold: float = 0.50
    num_workers: int = 0
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 < self.plateau_factor < 1:
            raise ValueError("plateau_factor must be in (0, 1)")
        if self.plateau_patience < 0 or self.early_stop_patience < 0:
            raise ValueError("patience values must be >= 0")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must be in (0, 1)")


def bce_multilabel_loss(
    probs: torch.Tensor,
    targets: torch.Tensor,
    mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """Mean binary cross-entropy over probability outputs.

    Probabilities are clamped to [eps, 1-eps] before the log so a saturated
    sigmoid cannot produce an infinite loss. With ``mask`` given, the mean
    runs over the selected elements only (an all-false mask yields 0).
    """
    if probs.shape != targets.shape:
        raise ValueError(
            f"probs shape {tuple(probs.shape)} != targets shape {tuple(targets.shape)}"
        )
    p = probs.clamp(LOSS_EPS, 1.0 - LOSS_EPS)
    elem = -(targets * torch.log(p) + (1.0 - targets) * torch.log(1.0 - p))
    if mask is None:
        return elem.mean()
    if mask.shape != elem.shape:
        raise ValueError(
            f"mask shape {tuple(mask.shape)} != loss shape {tuple(elem.shape)}"
        )
    m = mask.to(elem.dtype)
    return (elem * m).sum() / m.sum().clamp(min=1.0)


class ManifestDataset(Dataset):
    """Images plus resolved targets for the records of one manifest.

    ``set_epoch`` must be called before each training epoch so augmentation
    draws depend on (seed, epoch, record index) and nothing else.
    """

    def __init__(
        self,
        manifest: DatasetManifest,
        policy: PolicyConfig,
        augmentation: AugmentationConfig,
        *,
        data_root: str | Path = ".",
        train_mode: bool = False,
        seed: int = 0,
    ) -> None:
        self.records: tuple[StudyRecord, ...] = tuple(manifest)
        self.targets = np.stack(
            [resolve_targets(rec.labels, policy) for rec in self.records]
        )
        self.augmentation = augmentation
        self.data_root = Path(data_root)
        self.train_mode = train_mode
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, index: int) -> tuple[torch.Tensor, torch.Tensor]:
        rng = None
        if self.train_mode:
            rng = augmentation_rng(self.seed, self.epoch, index)
        image = load_image(
            self.records[index],
            self.augmentation,
            train_mode=self.train_mode,
            data_root=self.data_root,
            rng=rng,
        )
        return torch.from_numpy(image), torch.from_numpy(self.targets[index])


@dataclass(frozen=True)
class EpochLog:
    """One training epoch as it appears in the JSONL run log."""

    epoch: int
    train_loss: float
    val_loss: float
    val_auroc: float | None
    learning_rate: float
    improved: bool

    def to_json_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @staticmethod
    def from_json_line(line: str) -> "EpochLog":
        return EpochLog(**json.loads(line))


@dataclass
class TrainResult:
    """Outcome of a training run; the model is left at its best-epoch weights."""

    epoch_logs: list[EpochLog]
    best_epoch: int
    best_val_auroc: float
    best_state_dict: dict
    stop_reason: str
    epochs_run: int = field(init=False)

    def __post_init__(self) -> None:
        self.epochs_run = len(self.epoch_logs)


def _run_validation(
    model: torch.nn.Module,
    loader: DataLoader,
    device: torch.device,
) -> tuple[float, np.ndarray, np.ndarray]:
    model.eval()
    losses: list[tuple[float, int]] = []
    probs_parts: list[np.ndarray] = []
    target_parts: list[np.ndarray] = []
    with torch.no_grad():
        for images, targets in loader:
            images = images.to(device)
            targets = targets.to(device)
            probs = model(images)
            loss = bce_multilabel_loss(probs, targets)
            losses.append((float(loss.item()), images.shape[0]))
            probs_parts.append(probs.cpu().numpy())
            target_parts.append(targets.cpu().numpy())
    total = sum(value * count for value, count in losses)
    count = sum(count for _, count in losses)
    all_probs = np.concatenate(probs_parts, axis=0)
    all_targets = np.concatenate(target_parts, axis=0)
    return total / count, all_probs, all_targets


def _macro_auroc(probs: np.ndarray, targets: np.ndarray) -> float | None:
    values = [
        auroc(probs[:, k], targets[:, k]) for k in range(targets.shape[1])
    ]
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    return float(np.mean(defined))


def train(
    model: torch.nn.Module,
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest,
    config: TrainConfig,
    *,
    policy: PolicyConfig | None = None,
    augmentation: AugmentationConfig | None = None,
    data_root: str | Path = ".",
    log_path: str | Path | None = None,
    progress: Callable[[EpochLog], None] | None = None,
) -> TrainResult:
    """Run the seeded training loop.

    Per epoch: shuffle with a generator seeded from (config seed, epoch),
    optimize with Adam over the trainable parameters, evaluate on the
    validation split, decay the learning rate by ``plateau_factor`` when the
    validation loss has not improved for ``plateau_patience`` epochs, and
    stop early when validation macro AUROC has not improved for
    ``early_stop_patience`` epochs. The best-AUROC weights are restored into
    the model before returning. Non-finite loss raises TrainingError.
    """
    policy = policy or PolicyConfig()
    augmentation = augmentation or AugmentationConfig()
    device = torch.device(config.device)
    torch.manual_seed(config.seed)
    model.to(device)

    train_ds = ManifestDataset(
        train_manifest, policy, augmentation,
        data_root=data_root, train_mode=True, seed=config.seed,
    )
    val_ds = ManifestDataset(
        val_manifest, policy, augmentation, data_root=data_root, train_mode=False,
    )
    val_loader = DataLoader(
        val_ds, batch_size=config.batch_size, shuffle=False,
        num_workers=config.num_workers,
    )

    trainable = [p for p in model.parameters() if p.requires_grad]
    if not trainable:
        raise TrainingError("model has no trainable parameters")
    optimizer = torch.optim.Adam(trainable, lr=config.learning_rate)

    lr_now = config.learning_rate
    best_auroc = -math.inf
    best_epoch = 0
    best_state: dict = {}
    best_val_loss = math.inf
    bad_auroc_epochs = 0
    bad_loss_epochs = 0
    logs: list[EpochLog] = []
    stop_reason = "max_epochs"

    log_file = None
    if log_path is not None:
        log_file = open(log_path, "w", encoding="utf-8", newline="\n")
    try:
        for epoch in range(1, config.max_epochs + 1):
            train_ds.set_epoch(epoch)
            generator = torch.Generator()
            generator.manual_seed(config.seed * _EPOCH_SEED_STRIDE + epoch)
            loader = DataLoader(
                train_ds, batch_size=config.batch_size, shuffle=True,
                generator=generator, num_workers=config.num_workers,
            )

            set_train_mode(model)
            running = 0.0
            seen = 0
            for images, targets in loader:
                images = images.to(device)
                targets = targets.to(device)
                optimizer.zero_grad()
                probs = model(images)
                loss = bce_multilabel_loss(probs, targets)
                if not torch.isfinite(loss):
                    raise TrainingError(
                        f"non-finite training loss at epoch {epoch}"
                    )
                loss.backward()
                optimizer.step()
                running += float(loss.item()) * images.shape[0]
                seen += images.shape[0]
            train_loss = running / seen

            val_loss, val_probs, val_targets = _run_validation(
                model, val_loader, device
            )
            val_auroc = _macro_auroc(val_probs, val_targets)
            if val_auroc is None:
                raise TrainingError(
                    "validation macro AUROC is undefined for every label; "
                    "cannot monitor early stopping"
                )

            improved = val_auroc > best_auroc
            if improved:
                best_auroc = val_auroc
                best_epoch = epoch
                bad_auroc_epochs = 0
                best_state = {
                    k: v.detach().cpu().clone() for k, v in model.state_dict().items()
                }
            else:
                bad_auroc_epochs += 1

            entry = EpochLog(
                epoch=epoch,
                train_loss=train_loss,
                val_loss=val_loss,
                val_auroc=val_auroc,
                learning_rate=lr_now,
                improved=improved,
            )
            logs.append(entry)
            if log_file is not None:
                log_file.write(entry.to_json_line() + "\n")
                log_file.flush()
            if progress is not None:
                progress(entry)

            if val_loss < best_val_loss:
                best_val_loss = val_loss
                bad_loss_epochs = 0
            else:
                bad_loss_epochs += 1
                if bad_loss_epochs > config.plateau_patience:
                    lr_now *= config.plateau_factor
                    for group in optimizer.param_groups:
                        group["lr"] = lr_now
                    bad_loss_epochs = 0

            if bad_auroc_epochs >= config.early_stop_patience:
                stop_reason = "early_stop"
                break
    finally:
        if log_file is not None:
            log_file.close()

    model.load_state_dict(best_state)
    return TrainResult(
        epoch_logs=logs,
        best_epoch=best_epoch,
        best_val_auroc=best_auroc,
        best_state_dict=best_state,
        stop_reason=stop_reason,
    )


@dataclass(frozen=True)
class PredictionResult:
    """Probabilities, thresholded decisions, and resolved targets, row-aligned
    with the manifest."""

    probabilities: np.ndarray
    predictions: np.ndarray
    targets: np.ndarray
    threshold: float


def predict(
    model: torch.nn.Module,
    manifest: DatasetManifest,
    *,
    policy: PolicyConfig | None = None,
    augmentation: AugmentationConfig | None = None,
    threshold: float = 0.50,
    batch_size: int = 96,
    data_root: str | Path = ".",
    device: str = "cpu",
) -> PredictionResult:
    """Forward pass over a manifest with strict ``prob > threshold`` decisions."""
    policy = policy or PolicyConfig()
    augmentation = augmentation or AugmentationConfig()
    dataset = ManifestDataset(
        manifest, policy, augmentation, data_root=data_root, train_mode=False,
    )
    loader = DataLoader(dataset, batch_size=batch_size, shuffle=False)
    dev = torch.device(device)
    model.to(dev)
    model.eval()
    parts: list[np.ndarray] = []
    with torch.no_grad():
        for images, _ in loader:
            parts.append(model(images.to(dev)).cpu().numpy())
    probs = np.concatenate(parts, axis=0).astype(np.float32)
    preds = (probs > threshold).astype(np.int64)
    return PredictionResult(
        probabilities=probs,
        predictions=preds,
        targets=dataset.targets.copy(),
        threshold=threshold,
    )


def evaluate_model(
    model: torch.nn.Module,
    manifest: DatasetManifest,
    *,
    policy: PolicyConfig | None = None,
    augmentation: AugmentationConfig | None = None,
    threshold: float = 0.50,
    batch_size: int = 96,
    data_root: str | Path = ".",
    device: str = "cpu",
) -> tuple[MetricsReport, PredictionResult]:
    """Predict over a manifest and score the result."""
    result = predict(
        model, manifest,
        policy=policy, augmentation=augmentation, threshold=threshold,
        batch_size=batch_size, data_root=data_root, device=device,
    )
    report = build_report(
        result.probabilities, result.predictions, result.targets, list(LABEL_NAMES)
    )
    return report, result


@dataclass(frozen=True)
class Checkpoint:
    """Deserialized checkpoint payload."""

    arch_id: str
    pretrained: bool
    state_dict: dict
    label_names: tuple[str, ...]
    threshold: float
    best_epoch: int | None
    train_config: dict | None
    policy: dict | None


def save_checkpoint(
    path: str | Path,
    model: torch.nn.Module,
    *,
    threshold: float = 0.50,
    best_epoch: int | None = None,
    train_config: TrainConfig | None = None,
    policy: PolicyConfig | None = None,
) -> None:
    """Persist model weights with enough identity to rebuild for inference."""
    spec = getattr(model, "spec", None)
    if spec is None:
        raise CheckpointError("model has no spec; build it via build_model")
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch_id": spec.arch_id,
        "pretrained": spec.pretrained,
        "label_names": list(LABEL_NAMES),
        "state_dict": {k: v.cpu() for k, v in model.state_dict().items()},
        "threshold": threshold,
        "best_epoch": best_epoch,
        "train_config": asdict(train_config) if train_config else None,
        "policy": {
            "u_one_labels": sorted(policy.u_one_labels),
            "blank_as": policy.blank_as,
            "mask_blanks": policy.mask_blanks,
        } if policy else None,
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint, validating format version and label order."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path} is not a recognized checkpoint file")
    version = payload["format_version"]
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} is not supported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    names = tuple(payload.get("label_names", ()))
    if names != LABEL_NAMES:
        raise CheckpointError(
            "checkpoint label order does not match this package's label order"
        )
    return Checkpoint(
        arch_id=payload["arch_id"],
        pretrained=bool(payload["pretrained"]),
        state_dict=payload["state_dict"],
        label_names=names,
        threshold=float(payload.get("threshold", 0.50)),
        best_epoch=payload.get("best_epoch"),
        train_config=payload.get("train_config"),
        policy=payload.get("policy"),
    )


def model_from_checkpoint(source: str | Path | Checkpoint) -> torch.nn.Module:
    """Rebuild the architecture named in a checkpoint and load its weights.

    The saved state dict already holds every tensor, so the model is rebuilt
    without fetching pretrained weights regardless of how it was first built.
    """
    ckpt = source if isinstance(source, Checkpoint) else load_checkpoint(source)
    model = build_model(ckpt.arch_id, pretrained=False)
    try:
        model.load_state_dict(ckpt.state_dict)
    except Exception as exc:
        raise CheckpointError(
            f"checkpoint state does not fit architecture {ckpt.arch_id!r}: {exc}"
        ) from exc
    spec = model.spec
    model.spec = type(spec)(
        arch_id=spec.arch_id,
        pretrained=ckpt.pretrained,
        freeze_policy=spec.freeze_policy,
        head=spec.head,
    )
    return model
