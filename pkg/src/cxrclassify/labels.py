"""Canonical label set and uncertainty-resolution policy.

Raw labels come in four states per observation: positive (1.0), negative
(0.0), uncertain (-1.0), and blank (the report never mentioned the finding,
an empty CSV cell). Training targets are strictly binary; the policy decides
how uncertain and blank cells are mapped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Canonical column order used by CheXpert-format manifests. Everything in the
# pipeline (targets, predictions, reports, checkpoints) follows this order.
LABEL_NAMES: tuple[str, ...] = (
    "No Finding",
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
)

NUM_LABELS = len(LABEL_NAMES)

POSITIVE = 1.0
NEGATIVE = 0.0
UNCERTAIN = -1.0
# Blank cells are represented as None in a raw label vector.

DEFAULT_U_ONE_LABELS = frozenset({"Atelectasis", "Edema"})

RawLabelVector = tuple  # 14 entries, each 1.0 / 0.0 / -1.0 / None


def label_names() -> list[str]:
    """Return the 14 canonical label names in manifest column order."""
    return list(LABEL_NAMES)


def label_index(name: str) -> int:
    """Position of a label name in the canonical order."""
    try:
        return LABEL_NAMES.index(name)
    except ValueError:
        raise KeyError(f"Unknown label name: {name!r}") from None


@dataclass(frozen=True)
class PolicyConfig:
    """How 4-state raw labels resolve into binary training targets.

    Labels listed in ``u_one_labels`` map uncertain (-1.0) to positive;
    every other label maps uncertain to negative. Blank cells map to
    ``blank_as`` (negative by default). ``mask_blanks`` optionally marks
    blank slots so the loss can ignore them; it is off by default and the
    resolved target still carries ``blank_as`` in those slots.
    """

    u_one_labels: frozenset[str] = field(default=DEFAULT_U_ONE_LABELS)
    blank_as: float = NEGATIVE
    mask_blanks: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "u_one_labels", frozenset(self.u_one_labels))
        unknown = self.u_one_labels - set(LABEL_NAMES)
        if unknown:
            raise ValueError(f"u_one_labels contains unknown labels: {sorted(unknown)}")
        if self.blank_as not in (0.0, 1.0):
            raise ValueError(f"blank_as must be 0 or 1, got {self.blank_as}")


def resolve_targets(raw: RawLabelVector, policy: PolicyConfig) -> np.ndarray:
    """Resolve one raw 14-entry label vector into a binary target vector.

    positive -> 1, negative -> 0, uncertain -> 1 iff the label is in
    ``policy.u_one_labels`` else 0, blank -> ``policy.blank_as``.
    """
    if len(raw) != NUM_LABELS:
        raise ValueError(f"raw label vector must have {NUM_LABELS} entries, got {len(raw)}")
    out = np.empty(NUM_LABELS, dtype=np.float32)
    for i, value in enumerate(raw):
        if value is None:
            out[i] = policy.blank_as
        elif value == POSITIVE:
            out[i] = 1.0
        elif value == NEGATIVE:
            out[i] = 0.0
        elif value == UNCERTAIN:
            out[i] = 1.0 if LABEL_NAMES[i] in policy.u_one_labels else 0.0
        else:
            raise ValueError(f"invalid raw label value {value!r} at position {i}")
    return out


def blank_mask(raw: RawLabelVector) -> np.ndarray:
    """1.0 where the raw cell carries a definite/uncertain value, 0.0 where blank."""
    if len(raw) != NUM_LABELS:
        raise ValueError(f"raw label vector must have {NUM_LABELS} entries, got {len(raw)}")
    return np.array([0.0 if v is None else 1.0 for v in raw], dtype=np.float32)
