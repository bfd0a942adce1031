"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all cxrclassify failures."""


class SchemaError(PipelineError):
    """Manifest header is missing or malformed (names the offending column)."""


class RowParseError(PipelineError):
    """A manifest data row could not be parsed (carries the CSV row number)."""

    def __init__(self, message: str, row: int | None = None) -> None:
        super().__init__(message)
        self.row = row


class EmptyManifestError(PipelineError):
    """Manifest contained a header but no data rows."""


class SplitError(PipelineError):
    """Train/validation split cannot be produced (e.g. too few patients)."""


class ImageLoadError(PipelineError):
    """Image file is missing, unreadable, or decodes to an empty frame."""

    def __init__(self, message: str, path: str | None = None) -> None:
        super().__init__(message)
        self.path = path


class ModelConfigError(PipelineError):
    """Unknown architecture id or invalid model configuration."""


class WeightsUnavailableError(PipelineError):
    """Pretrained weights were requested but cannot be fetched or found."""


class CheckpointError(PipelineError):
    """Checkpoint file is corrupt, from an unknown version, or inconsistent."""


class TrainingError(PipelineError):
    """Training aborted (non-finite loss, degenerate validation set, ...)."""


class ConfigError(PipelineError):
    """Run configuration file or CLI flags are invalid."""
