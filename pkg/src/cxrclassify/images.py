"""Image loading and augmentation.

Evaluation-mode loading is a pure function of the file bytes and the
config (resize + per-channel normalization only). Training mode may apply
a random horizontal flip and a small random rotation; the randomness comes
from an explicit generator so the sample sequence is reproducible no
matter how loading is parallelized.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ImageLoadError
from .manifest import StudyRecord

# ImageNet statistics: pretrained backbones expect inputs normalized this way.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class AugmentationConfig:
    """Preprocessing recipe for image loading.

    Training mode applies resize, random horizontal flip, and random
    rotation, then normalizes. Evaluation mode applies only resize and
    normalization and is fully deterministic.
    """

    resize_hw: tuple[int, int] = (320, 320)
    horizontal_flip_prob: float = 0.5
    rotation_degrees_max: float = 10.0
    normalize_mean: tuple[float, float, float] = IMAGENET_MEAN
    normalize_std: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self) -> None:
        h, w = self.resize_hw
        if h <= 0 or w <= 0:
            raise ValueError(f"resize_hw must be positive, got {self.resize_hw}")
        if not 0.0 <= self.horizontal_flip_prob <= 1.0:
            raise ValueError(f"horizontal_flip_prob must be in [0, 1], got {self.horizontal_flip_prob}")
        if self.rotation_degrees_max < 0:
            raise ValueError(f"rotation_degrees_max must be >= 0, got {self.rotation_degrees_max}")
        if any(s <= 0 for s in self.normalize_std):
            raise ValueError("normalize_std entries must be positive")


def augmentation_rng(seed: int, epoch: int, record_index: int) -> np.random.Generator:
    """Per-record generator so augmentation is independent of worker count."""
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, record_index]))


def load_image(
    record: StudyRecord,
    config: AugmentationConfig,
    train_mode: bool = False,
    *,
    data_root: str | Path = ".",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Load one image as a normalized float32 array of shape (3, H, W).

    Grayscale sources are replicated to 3 channels. ``rng`` drives the
    stochastic augmentations in train mode; omit it only when
    reproducibility does not matter.
    """
    path = Path(data_root) / record.image_path
    if not path.is_file():
        raise ImageLoadError(f"image file not found: {path}", path=str(path))
    try:
        with Image.open(path) as img:
            img.load()
            image = img.convert("RGB")
    except (OSError, ValueError) as exc:
        raise ImageLoadError(f"cannot decode image {path}: {exc}", path=str(path)) from exc
    if image.width == 0 or image.height == 0:
        raise ImageLoadError(f"image {path} decoded to zero size", path=str(path))

    h, w = config.resize_hw
    image = image.resize((w, h), resample=Image.BILINEAR)

    if train_mode:
        if rng is None:
            rng = np.random.default_rng()
        if config.horizontal_flip_prob > 0 and rng.random() < config.horizontal_flip_prob:
            image = image.transpose(Image.FLIP_LEFT_RIGHT)
        if config.rotation_degrees_max > 0:
            angle = rng.uniform(-config.rotation_degrees_max, config.rotation_degrees_max)
            image = image.rotate(angle, resample=Image.BILINEAR)

    data = np.asarray(image, dtype=np.float32) / 255.0  # HWC in [0, 1]
    mean = np.asarray(config.normalize_mean, dtype=np.float32)
    std = np.asarray(config.normalize_std, dtype=np.float32)
    data = (data - mean) / std
    return np.ascontiguousarray(data.transpose(2, 0, 1))
