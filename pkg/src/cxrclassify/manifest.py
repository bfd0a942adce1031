"""CheXpert-format CSV manifests: parsing, label summaries, patient splits.

The expected header is::

    Path,Sex,Age,Frontal/Lateral,AP/PA,<14 label columns>

Label cells are "1.0" (positive), "0.0" (negative), "-1.0" (uncertain), or
empty (blank). Manifests are immutable after parsing and safe to share
across workers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyManifestError, RowParseError, SchemaError, SplitError
from .labels import LABEL_NAMES, NUM_LABELS

PATH_COLUMN = "Path"
SEX_COLUMN = "Sex"
AGE_COLUMN = "Age"
VIEW_COLUMN = "Frontal/Lateral"
PROJECTION_COLUMN = "AP/PA"
REQUIRED_COLUMNS = (PATH_COLUMN, SEX_COLUMN, AGE_COLUMN, VIEW_COLUMN, PROJECTION_COLUMN) + LABEL_NAMES

_LABEL_CELL_TO_VALUE = {1.0: 1.0, 0.0: 0.0, -1.0: -1.0}


@dataclass(frozen=True)
class StudyRecord:
    """One radiograph row from a manifest."""

    image_path: str
    patient_id: str
    study_id: str
    sex: str  # "Male" / "Female" / "Unknown"
    age: int | None
    view_position: str  # "Frontal" / "Lateral"
    view_projection: str  # "AP" / "PA" / "unknown"
    labels: tuple  # 14 entries of 1.0 / 0.0 / -1.0 / None


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered collection of study records parsed from one CSV."""

    records: tuple[StudyRecord, ...]
    source_path: str

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def patient_ids(self) -> set[str]:
        return {r.patient_id for r in self.records}


@dataclass(frozen=True)
class LabelCounts:
    """Raw-state counts for a single label column."""

    label: str
    minus_one: int
    one: int
    zero: int
    blank: int

    @property
    def total(self) -> int:
        return self.minus_one + self.one + self.zero + self.blank


@dataclass(frozen=True)
class LabelDistribution:
    """Per-label raw-state counts over a whole manifest."""

    rows: tuple[LabelCounts, ...]
    n_records: int

    def by_label(self) -> dict[str, LabelCounts]:
        return {row.label: row for row in self.rows}


def _patient_id_from_path(image_path: str) -> str:
    for part in Path(image_path).parts:
        if part.startswith("patient") and part != "patient":
            return part
    # Non-CheXpert layout: treat each path as its own patient.
    return image_path


def _study_id_from_path(image_path: str) -> str:
    for part in Path(image_path).parts:
        if part.startswith("study") and part != "study":
            return part
    return ""


def _parse_label_cell(cell: str, column: str, row: int) -> float | None:
    text = cell.strip()
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise RowParseError(
            f"row {row}: label column {column!r} has unparseable cell {cell!r}", row=row
        ) from None
    if value not in _LABEL_CELL_TO_VALUE:
        raise RowParseError(
            f"row {row}: label column {column!r} has invalid value {cell!r} "
            "(expected 1.0, 0.0, -1.0, or blank)",
            row=row,
        )
    return _LABEL_CELL_TO_VALUE[value]


def _parse_sex(cell: str) -> str:
    text = cell.strip().capitalize()
    return text if text in ("Male", "Female") else "Unknown"


def _parse_age(cell: str) -> int | None:
    text = cell.strip()
    try:
        age = int(float(text))
    except ValueError:
        return None
    return age if age >= 0 else None


def _parse_view(cell: str, row: int) -> str:
    text = cell.strip().capitalize()
    if text not in ("Frontal", "Lateral"):
        raise RowParseError(
            f"row {row}: Frontal/Lateral column has invalid value {cell!r}", row=row
        )
    return text


def _parse_projection(cell: str) -> str:
    text = cell.strip().upper()
    return text if text in ("AP", "PA") else "unknown"


def parse_manifest(csv_path: str | Path) -> DatasetManifest:
    """Parse a CheXpert-format CSV into a manifest.

    Raises SchemaError if a required column is missing, RowParseError for a
    bad data cell (with the CSV row number, header = row 1), and
    EmptyManifestError if there are no data rows.
    """
    csv_path = Path(csv_path)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyManifestError(f"{csv_path}: file is empty") from None

        column_index = {name.strip(): i for i, name in enumerate(header)}
        for column in REQUIRED_COLUMNS:
            if column not in column_index:
                raise SchemaError(f"{csv_path}: missing required column {column!r}")

        path_idx = column_index[PATH_COLUMN]
        sex_idx = column_index[SEX_COLUMN]
        age_idx = column_index[AGE_COLUMN]
        view_idx = column_index[VIEW_COLUMN]
        proj_idx = column_index[PROJECTION_COLUMN]
        label_idx = [column_index[name] for name in LABEL_NAMES]
        n_columns = len(header)

        records: list[StudyRecord] = []
        seen_paths: set[str] = set()
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < n_columns:
                row = row + [""] * (n_columns - len(row))
            image_path = row[path_idx].strip()
            if not image_path:
                raise RowParseError(f"row {row_number}: empty Path cell", row=row_number)
            if image_path in seen_paths:
                raise RowParseError(
                    f"row {row_number}: duplicate Path {image_path!r}", row=row_number
                )
            seen_paths.add(image_path)
            labels = tuple(
                _parse_label_cell(row[idx], LABEL_NAMES[k], row_number)
                for k, idx in enumerate(label_idx)
            )
            records.append(
                StudyRecord(
                    image_path=image_path,
                    patient_id=_patient_id_from_path(image_path),
                    study_id=_study_id_from_path(image_path),
                    sex=_parse_sex(row[sex_idx]),
                    age=_parse_age(row[age_idx]),
                    view_position=_parse_view(row[view_idx], row_number),
                    view_projection=_parse_projection(row[proj_idx]),
                    labels=labels,
                )
            )

    if not records:
        raise EmptyManifestError(f"{csv_path}: no data rows")
    return DatasetManifest(records=tuple(records), source_path=str(csv_path))


def write_manifest(manifest: DatasetManifest, csv_path: str | Path) -> None:
    """Serialize a manifest back to CheXpert-format CSV (round-trip safe)."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(REQUIRED_COLUMNS))
        for record in manifest.records:
            cells = [
                record.image_path,
                record.sex,
                "" if record.age is None else str(record.age),
                record.view_position,
                "" if record.view_projection == "unknown" else record.view_projection,
            ]
            for value in record.labels:
                cells.append("" if value is None else f"{value:.1f}")
            writer.writerow(cells)


def summarize_labels(manifest: DatasetManifest) -> LabelDistribution:
    """Count raw states (-1 / 1 / 0 / blank) per label column."""
    if len(manifest) == 0:
        raise EmptyManifestError("cannot summarize an empty manifest")
    counts = np.zeros((NUM_LABELS, 4), dtype=np.int64)  # minus_one, one, zero, blank
    for record in manifest.records:
        for i, value in enumerate(record.labels):
            if value is None:
                counts[i, 3] += 1
            elif value == -1.0:
                counts[i, 0] += 1
            elif value == 1.0:
                counts[i, 1] += 1
            else:
                counts[i, 2] += 1
    rows = tuple(
        LabelCounts(
            label=LABEL_NAMES[i],
            minus_one=int(counts[i, 0]),
            one=int(counts[i, 1]),
            zero=int(counts[i, 2]),
            blank=int(counts[i, 3]),
        )
        for i in range(NUM_LABELS)
    )
    return LabelDistribution(rows=rows, n_records=len(manifest))


def split_train_val(
    manifest: DatasetManifest, val_fraction: float, seed: int
) -> tuple[DatasetManifest, DatasetManifest]:
    """Patient-disjoint train/validation split.

    Patients are shuffled with the given seed and assigned whole to one
    side; the cut point is chosen so the validation record count lands as
    close as possible to ``val_fraction`` of the total. No patient appears
    on both sides and the two halves partition the input records.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")

    patient_order: list[str] = []
    patient_records: dict[str, list[StudyRecord]] = {}
    for record in manifest.records:
        if record.patient_id not in patient_records:
            patient_order.append(record.patient_id)
            patient_records[record.patient_id] = []
        patient_records[record.patient_id].append(record)

    if len(patient_order) < 2:
        raise SplitError(
            f"need at least 2 distinct patients to split, got {len(patient_order)}"
        )

    rng = np.random.default_rng(seed)
    shuffled = [patient_order[i] for i in rng.permutation(len(patient_order))]

    target = val_fraction * len(manifest)
    cumulative = np.cumsum([len(patient_records[p]) for p in shuffled])
    # Valid cuts keep at least one patient on each side.
    cuts = np.arange(1, len(shuffled))
    best_cut = int(cuts[np.argmin(np.abs(cumulative[cuts - 1] - target))])

    val_patients = set(shuffled[:best_cut])
    val_records = tuple(r for r in manifest.records if r.patient_id in val_patients)
    train_records = tuple(r for r in manifest.records if r.patient_id not in val_patients)
    return (
        DatasetManifest(records=train_records, source_path=manifest.source_path),
        DatasetManifest(records=val_records, source_path=manifest.source_path),
    )
