"""Run configuration: one dataclass tree covering data location, label
policy, architecture choice, augmentation, and optimization, loadable from
YAML. Unknown keys are rejected rather than ignored so a typo cannot
silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .images import AugmentationConfig
from .labels import PolicyConfig
from .models import ARCH_IDS
from .training import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    """Everything a training or evaluation run needs."""

    data_root: str = "."
    train_csv: str | None = None
    val_csv: str | None = None
    val_fraction: float = 0.2
    arch: str = "customnet"
    pretrained: bool = False
    offline: bool = False
    weights_dir: str | None = None
    out_dir: str = "runs/run"
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)

    def __post_init__(self) -> None:
        if self.arch not in ARCH_IDS:
            raise ConfigError(
                f"unknown arch {self.arch!r}; expected one of {', '.join(ARCH_IDS)}"
            )
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must be in (0, 1)")


def _check_keys(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")


def _build_section(cls, mapping: dict, where: str):
    _check_keys(mapping, {f.name for f in fields(cls)}, where)
    try:
        return cls(**mapping)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where} config: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    """Parse a YAML run config, validating every key."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw)
    top_fields = {f.name for f in fields(RunConfig)}
    _check_keys(raw, top_fields, "config")

    sections = {}
    if "policy" in raw:
        mapping = dict(raw.pop("policy") or {})
        if "u_one_labels" in mapping:
            mapping["u_one_labels"] = frozenset(mapping["u_one_labels"])
        sections["policy"] = _build_section(PolicyConfig, mapping, "policy")
    if "train" in raw:
        mapping = dict(raw.pop("train") or {})
        sections["train"] = _build_section(TrainConfig, mapping, "train")
    if "augmentation" in raw:
        mapping = dict(raw.pop("augmentation") or {})
        for key in ("resize_hw", "normalize_mean", "normalize_std"):
            if key in mapping:
                mapping[key] = tuple(mapping[key])
        sections["augmentation"] = _build_section(
            AugmentationConfig, mapping, "augmentation"
        )

    try:
        return RunConfig(**raw, **sections)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def with_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Replace fields by name, dropping None values.

    Keys naming TrainConfig fields (seed, threshold, max_epochs, ...) route
    into the train section; every other key must be a RunConfig field.
    """
    updates = {k: v for k, v in overrides.items() if v is not None}
    train_fields = {f.name for f in fields(TrainConfig)}
    train_updates = {k: updates.pop(k) for k in list(updates) if k in train_fields}
    if train_updates:
        updates["train"] = dataclasses.replace(config.train, **train_updates)
    try:
        return dataclasses.replace(config, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid override: {exc}") from exc
