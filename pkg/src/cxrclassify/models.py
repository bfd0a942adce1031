"""Model zoo: a compact from-scratch CNN plus four ImageNet backbones with
their transfer-learning freeze policies, all emitting 14 sigmoid outputs.

Freeze policies follow the published trainable-parameter accounting:
DenseNet121 trains end to end; ResNet50 and InceptionV3 train only their
replacement heads (two-layer 2048->128->14 and single 2048->14); VGG16
trains only the final 4096->14 classifier layer. ``count_parameters``
verifies these partitions tensor by tensor.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn
from torchvision import models as tv_models

from .errors import ModelConfigError, WeightsUnavailableError
from .labels import NUM_LABELS

WEIGHTS_DIR_ENV = "CXRCLASSIFY_WEIGHTS_DIR"

ARCH_IDS = ("customnet", "densenet121", "resnet50", "inception_v3", "vgg16")

# Names used in parameter-summary and comparison tables.
DISPLAY_NAMES = {
    "customnet": "CustomNet",
    "densenet121": "DenseNet121",
    "resnet50": "ResNet50",
    "inception_v3": "Inception",
    "vgg16": "Vgg16",
}


@dataclass(frozen=True)
class ModelSpec:
    """Identity of a built model: enough to rebuild it for checkpoint loading."""

    arch_id: str
    pretrained: bool
    freeze_policy: str
    head: str

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES[self.arch_id]


@dataclass(frozen=True)
class ParameterReport:
    """Per-tensor parameter counts plus totals."""

    per_tensor: tuple[tuple[str, int], ...]
    total: int
    trainable: int

    def by_name(self) -> dict[str, int]:
        return dict(self.per_tensor)


def count_parameters(model: nn.Module) -> ParameterReport:
    """Enumerate every parameter tensor of a model with its element count."""
    per_tensor = tuple((name, p.numel()) for name, p in model.named_parameters())
    total = sum(count for _, count in per_tensor)
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    return ParameterReport(per_tensor=per_tensor, total=total, trainable=trainable)


class CustomNet(nn.Module):
    """Four conv blocks (conv, conv, max-pool, ReLU) and a 512->14 sigmoid head.

    Attribute names surface in parameter reports and are part of the report
    contract, hence the CapWords block names. The adaptive 2x2 pool makes the
    head input-size invariant.
    """

    def __init__(self) -> None:
        super().__init__()
        self.ConvLayer1 = nn.Sequential(
            nn.Conv2d(3, 8, kernel_size=3, padding=1),
            nn.Conv2d(8, 16, kernel_size=3, padding=1),
            nn.MaxPool2d(2),
            nn.ReLU(),
        )
        self.ConvLayer2 = nn.Sequential(
            nn.Conv2d(16, 32, kernel_size=5, padding=2),
            nn.Conv2d(32, 32, kernel_size=3, padding=1),
            nn.MaxPool2d(2),
            nn.ReLU(),
        )
        self.ConvLayer3 = nn.Sequential(
            nn.Conv2d(32, 64, kernel_size=3, padding=1),
            nn.Conv2d(64, 64, kernel_size=5, padding=2),
            nn.MaxPool2d(2),
            nn.ReLU(),
        )
        self.ConvLayer4 = nn.Sequential(
            nn.Conv2d(64, 128, kernel_size=5, padding=2),
            nn.Conv2d(128, 128, kernel_size=3, padding=1),
            nn.MaxPool2d(2),
            nn.ReLU(),
        )
        self.pool = nn.AdaptiveAvgPool2d((2, 2))
        self.Lin1 = nn.Sequential(nn.Linear(128 * 2 * 2, NUM_LABELS))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.ConvLayer1(x)
        x = self.ConvLayer2(x)
        x = self.ConvLayer3(x)
        x = self.ConvLayer4(x)
        x = torch.flatten(self.pool(x), 1)
        return torch.sigmoid(self.Lin1(x))


def build_custom_net(seed: int | None = None) -> CustomNet:
    """Randomly initialized CustomNet (seeded when ``seed`` is given)."""
    if seed is not None:
        torch.manual_seed(seed)
    model = CustomNet()
    model.spec = ModelSpec(
        arch_id="customnet",
        pretrained=False,
        freeze_policy="none (all parameters trainable)",
        head="512->14 linear, sigmoid",
    )
    return model


def _freeze_all(model: nn.Module) -> None:
    for p in model.parameters():
        p.requires_grad = False


def _unfreeze(module: nn.Module) -> None:
    for p in module.parameters():
        p.requires_grad = True


def _resolve_weights_dir(weights_dir: str | Path | None) -> Path | None:
    if weights_dir is not None:
        return Path(weights_dir)
    env = os.environ.get(WEIGHTS_DIR_ENV)
    return Path(env) if env else None


def _fetch_weights(arch_id: str, weights, offline: bool):
    """Return the torchvision weights enum, enforcing explicit fetch errors."""
    cache_dir = Path(torch.hub.get_dir()) / "checkpoints"
    cached = cache_dir / Path(weights.url).name
    if offline and not cached.is_file():
        raise WeightsUnavailableError(
            f"pretrained weights for {arch_id} not in cache {cache_dir} and offline mode is on"
        )
    return weights


def build_backbone(
    arch_id: str,
    pretrained: bool,
    *,
    weights_dir: str | Path | None = None,
    offline: bool = False,
    seed: int | None = None,
) -> nn.Module:
    """Build one of the four transfer-learning architectures.

    The classification head is replaced to emit 14 sigmoid outputs and the
    freeze policy for the architecture is applied. With ``pretrained=True``
    the ImageNet weights must be fetchable (or already cached when
    ``offline``) or a WeightsUnavailableError is raised; there is never a
    silent fallback to random initialization.
    """
    if arch_id not in ("densenet121", "resnet50", "inception_v3", "vgg16"):
        raise ModelConfigError(
            f"unknown backbone arch_id {arch_id!r}; expected one of "
            "densenet121, resnet50, inception_v3, vgg16"
        )
    if seed is not None:
        torch.manual_seed(seed)

    resolved_dir = _resolve_weights_dir(weights_dir)
    if resolved_dir is not None:
        torch.hub.set_dir(str(resolved_dir))

    try:
        if arch_id == "densenet121":
            weights = None
            if pretrained:
                weights = _fetch_weights(arch_id, tv_models.DenseNet121_Weights.IMAGENET1K_V1, offline)
            model = tv_models.densenet121(weights=weights)
            model.classifier = nn.Sequential(nn.Linear(1024, NUM_LABELS), nn.Sigmoid())
            freeze_policy = "none (all parameters trainable)"
            head = "1024->14 linear, sigmoid"

        elif arch_id == "resnet50":
            weights = None
            if pretrained:
                weights = _fetch_weights(arch_id, tv_models.ResNet50_Weights.IMAGENET1K_V1, offline)
            model = tv_models.resnet50(weights=weights)
            _freeze_all(model)
            model.fc = nn.Sequential(
                nn.Linear(2048, 128), nn.ReLU(), nn.Linear(128, NUM_LABELS), nn.Sigmoid()
            )
            freeze_policy = "backbone frozen; two-layer head trainable"
            head = "2048->128->14 linear stack, sigmoid"

        elif arch_id == "inception_v3":
            if pretrained:
                weights = _fetch_weights(arch_id, tv_models.Inception_V3_Weights.IMAGENET1K_V1, offline)
                model = tv_models.inception_v3(weights=weights)
                # Drop the auxiliary classifier; only the main branch is used.
                model.aux_logits = False
                model.AuxLogits = None
            else:
                model = tv_models.inception_v3(weights=None, aux_logits=False, init_weights=True)
            model.transform_input = False  # our loader already normalizes
            _freeze_all(model)
            model.fc = nn.Sequential(nn.Linear(2048, NUM_LABELS), nn.Sigmoid())
            freeze_policy = "backbone frozen, auxiliary classifier removed; head trainable"
            head = "2048->14 linear, sigmoid"

        else:  # vgg16
            weights = None
            if pretrained:
                weights = _fetch_weights(arch_id, tv_models.VGG16_Weights.IMAGENET1K_V1, offline)
            model = tv_models.vgg16(weights=weights)
            _freeze_all(model)
            model.classifier[6] = nn.Sequential(nn.Linear(4096, NUM_LABELS), nn.Sigmoid())
            freeze_policy = "all frozen except final classifier layer"
            head = "4096->14 linear, sigmoid"
    except WeightsUnavailableError:
        raise
    except Exception as exc:
        if pretrained:
            raise WeightsUnavailableError(
                f"failed to fetch pretrained weights for {arch_id}: {exc}"
            ) from exc
        raise

    model.spec = ModelSpec(
        arch_id=arch_id, pretrained=pretrained, freeze_policy=freeze_policy, head=head
    )
    return model


def build_model(
    arch_id: str,
    pretrained: bool = False,
    *,
    weights_dir: str | Path | None = None,
    offline: bool = False,
    seed: int | None = None,
) -> nn.Module:
    """Build any architecture in the zoo by id."""
    if arch_id == "customnet":
        if pretrained:
            raise ModelConfigError("customnet has no pretrained weights")
        return build_custom_net(seed=seed)
    return build_backbone(
        arch_id, pretrained, weights_dir=weights_dir, offline=offline, seed=seed
    )


def forward(model: nn.Module, batch: torch.Tensor) -> torch.Tensor:
    """Run a batch through a model, checking the input contract first."""
    if batch.ndim != 4 or batch.shape[1] != 3:
        raise ValueError(
            f"expected batch of shape (N, 3, H, W), received {tuple(batch.shape)}"
        )
    return model(batch)


def set_train_mode(model: nn.Module) -> None:
    """Enter training mode without disturbing frozen normalization layers.

    Batch-norm modules whose parameters are all frozen are kept in eval
    mode so their running statistics stay bit-identical to initialization.
    """
    model.train()
    for module in model.modules():
        if isinstance(module, nn.modules.batchnorm._BatchNorm):
            params = list(module.parameters(recurse=False))
            if params and not any(p.requires_grad for p in params):
                module.eval()


def frozen_parameter_names(model: nn.Module) -> list[str]:
    """Names of all non-trainable parameter tensors."""
    return [name for name, p in model.named_parameters() if not p.requires_grad]
