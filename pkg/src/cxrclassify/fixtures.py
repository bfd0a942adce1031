"""Synthetic desk-scale fixtures with planted visual signals.

Each fixture image is a noisy dark frame; for every positive label a bright
rectangle is planted in a label-specific cell of a 4x4 grid, so a small CNN
can learn the labels quickly and tests can verify signals by direct pixel
inspection. Raw labels mix all four states (1 / 0 / -1 / blank) but always
resolve to the planted binary targets under the default policy.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .labels import DEFAULT_U_ONE_LABELS, LABEL_NAMES, NUM_LABELS, PolicyConfig, resolve_targets
from .manifest import DatasetManifest, StudyRecord, write_manifest

GRID = 4  # 4x4 grid of signal cells; labels 0..13 use the first 14 cells

# High contrast keeps the task learnable within a few dozen optimizer
# steps, so validation loss falls monotonically at the default schedule.
_BACKGROUND_MAX = 24  # exclusive upper bound of background noise
_SIGNAL_MIN = 232  # rectangles are drawn in [232, 255]


def label_cell_bounds(label_idx: int, image_hw: tuple[int, int]) -> tuple[int, int, int, int]:
    """Pixel bounds (r0, r1, c0, c1) of the signal rectangle for a label."""
    h, w = image_hw
    cell_h, cell_w = h // GRID, w // GRID
    row, col = divmod(label_idx, GRID)
    r0, c0 = row * cell_h + 1, col * cell_w + 1
    return r0, r0 + cell_h - 2, c0, c0 + cell_w - 2


def _encode_raw_label(target: float, label: str, rng: np.random.Generator,
                      uncertain_rate: float, blank_rate: float) -> float | None:
    """Pick a raw state that resolves to ``target`` under the default policy."""
    u_one = label in DEFAULT_U_ONE_LABELS
    draw = rng.random()
    if target == 1.0:
        if u_one and draw < uncertain_rate:
            return -1.0
        return 1.0
    if u_one:
        return None if draw < blank_rate else 0.0
    if draw < uncertain_rate:
        return -1.0
    if draw < uncertain_rate + blank_rate:
        return None
    return 0.0


def make_synthetic_fixture(
    n_records: int,
    n_patients: int,
    seed: int,
    out_dir: str | Path,
    *,
    image_hw: tuple[int, int] = (64, 64),
    positive_rate: float = 0.5,
    uncertain_rate: float = 0.15,
    blank_rate: float = 0.25,
    csv_name: str = "fixture.csv",
) -> DatasetManifest:
    """Write a synthetic image set plus CheXpert-format CSV; return its manifest.

    Deterministic for fixed arguments: the CSV and every image are
    byte-identical across runs. Image paths in the manifest are relative to
    ``out_dir``, so ``out_dir`` is the data root for loading.
    """
    if n_patients < 2:
        raise ValueError(f"n_patients must be >= 2, got {n_patients}")
    if n_records < n_patients:
        raise ValueError(f"n_records ({n_records}) must be >= n_patients ({n_patients})")
    h, w = image_hw
    if h < 4 * GRID or w < 4 * GRID:
        raise ValueError(f"image_hw must be at least {4 * GRID}x{4 * GRID}, got {image_hw}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    default_policy = PolicyConfig()

    records: list[StudyRecord] = []
    for i in range(n_records):
        patient = f"patient{(i % n_patients) + 1:05d}"
        study = f"study{i // n_patients + 1}"
        rel_path = f"images/{patient}/{study}/view1_frontal.png"

        targets = (rng.random(NUM_LABELS) < positive_rate).astype(np.float32)
        raw = tuple(
            _encode_raw_label(float(targets[k]), LABEL_NAMES[k], rng, uncertain_rate, blank_rate)
            for k in range(NUM_LABELS)
        )
        record = StudyRecord(
            image_path=rel_path,
            patient_id=patient,
            study_id=study,
            sex="Male" if i % 2 == 0 else "Female",
            age=18 + (i * 7) % 70,
            view_position="Frontal",
            view_projection="AP",
            labels=raw,
        )
        # The planted image must encode the policy-resolved targets.
        assert np.array_equal(resolve_targets(raw, default_policy), targets)

        pixels = rng.integers(0, _BACKGROUND_MAX, size=(h, w), dtype=np.uint8)
        for k in range(NUM_LABELS):
            if targets[k] == 1.0:
                r0, r1, c0, c1 = label_cell_bounds(k, image_hw)
                pixels[r0:r1, c0:c1] = rng.integers(
                    _SIGNAL_MIN, 256, size=(r1 - r0, c1 - c0), dtype=np.uint8
                )

        image_path = out_dir / rel_path
        image_path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(pixels, mode="L").save(image_path)
        records.append(record)

    manifest = DatasetManifest(records=tuple(records), source_path=str(out_dir / csv_name))
    write_manifest(manifest, out_dir / csv_name)
    return manifest
