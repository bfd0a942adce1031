"""Multi-label chest X-ray classification: CheXpert-style manifests, an
uncertainty-aware label policy, five CNN architectures, a deterministic
training engine, and rank-based evaluation metrics.
"""

from .errors import (
    CheckpointError,
    ConfigError,
    EmptyManifestError,
    ImageLoadError,
    ModelConfigError,
    PipelineError,
    RowParseError,
    SchemaError,
    SplitError,
    TrainingError,
    WeightsUnavailableError,
)
from .labels import (
    DEFAULT_U_ONE_LABELS,
    LABEL_NAMES,
    NUM_LABELS,
    PolicyConfig,
    blank_mask,
    label_index,
    label_names,
    resolve_targets,
)
from .manifest import (
    DatasetManifest,
    LabelCounts,
    LabelDistribution,
    StudyRecord,
    parse_manifest,
    split_train_val,
    summarize_labels,
    write_manifest,
)
from .images import AugmentationConfig, augmentation_rng, load_image
from .fixtures import label_cell_bounds, make_synthetic_fixture
from .metrics import (
    ConfusionMatrix,
    LabelMetrics,
    MetricsReport,
    OverallMetrics,
    accuracy,
    auroc,
    build_report,
    confusion,
    precision_recall_f1,
)
from .models import (
    ARCH_IDS,
    DISPLAY_NAMES,
    CustomNet,
    ModelSpec,
    ParameterReport,
    build_backbone,
    build_custom_net,
    build_model,
    count_parameters,
    forward,
    frozen_parameter_names,
    set_train_mode,
)
from .training import (
    Checkpoint,
    EpochLog,
    ManifestDataset,
    PredictionResult,
    TrainConfig,
    TrainResult,
    bce_multilabel_loss,
    evaluate_model,
    load_checkpoint,
    model_from_checkpoint,
    predict,
    save_checkpoint,
    train,
)
from .config import RunConfig, config_from_dict, load_config, with_overrides

__version__ = "0.1.0"

__all__ = [
    "ARCH_IDS",
    "AugmentationConfig",
    "Checkpoint",
    "CheckpointError",
    "ConfigError",
    "ConfusionMatrix",
    "CustomNet",
    "DEFAULT_U_ONE_LABELS",
    "DISPLAY_NAMES",
    "DatasetManifest",
    "EmptyManifestError",
    "EpochLog",
    "ImageLoadError",
    "LABEL_NAMES",
    "LabelCounts",
    "LabelDistribution",
    "LabelMetrics",
    "ManifestDataset",
    "MetricsReport",
    "ModelConfigError",
    "ModelSpec",
    "NUM_LABELS",
    "OverallMetrics",
    "ParameterReport",
    "PipelineError",
    "PolicyConfig",
    "PredictionResult",
    "RowParseError",
    "RunConfig",
    "SchemaError",
    "SplitError",
    "StudyRecord",
    "TrainConfig",
    "TrainResult",
    "TrainingError",
    "WeightsUnavailableError",
    "accuracy",
    "auroc",
    "augmentation_rng",
    "bce_multilabel_loss",
    "blank_mask",
    "build_backbone",
    "build_custom_net",
    "build_model",
    "build_report",
    "config_from_dict",
    "confusion",
    "count_parameters",
    "evaluate_model",
    "forward",
    "frozen_parameter_names",
    "label_cell_bounds",
    "label_index",
    "label_names",
    "load_checkpoint",
    "load_config",
    "load_image",
    "make_synthetic_fixture",
    "model_from_checkpoint",
    "parse_manifest",
    "precision_recall_f1",
    "predict",
    "resolve_targets",
    "save_checkpoint",
    "set_train_mode",
    "split_train_val",
    "summarize_labels",
    "train",
    "with_overrides",
    "write_manifest",
]
