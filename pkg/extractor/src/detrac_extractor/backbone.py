"""Frozen backbone construction and preprocessing.

Supported backbones: the 18-layer residual network (512-wide global-pooled
penultimate features) and the classic 5-conv-layer network (4096-wide
penultimate fully-connected features). Weights are either ImageNet-pretrained
(requires download access) or randomly initialized from a fixed seed, which
keeps offline runs deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import ExtractorError

BACKBONE_WIDTHS = {"resnet18": 512, "alexnet": 4096}

WEIGHTS_PRETRAINED = "pretrained"
WEIGHTS_RANDOM = "random"


class WeightsUnavailable(ExtractorError):
    """Pretrained weights could not be obtained (download failure)."""


@dataclass(frozen=True)
class ExtractorConfig:
    backbone: str = "resnet18"
    weights: str = WEIGHTS_PRETRAINED
    seed: int = 0  # used only for random weights
    batch_size: int = 16
    resize: int = 256  # shorter side before the center crop
    crop: int = 224

    def __post_init__(self):
        if self.backbone not in BACKBONE_WIDTHS:
            raise ExtractorError(
                f"unsupported backbone {self.backbone!r}; "
                f"choose from {sorted(BACKBONE_WIDTHS)}"
            )
        if self.weights not in (WEIGHTS_PRETRAINED, WEIGHTS_RANDOM):
            raise ExtractorError("weights must be 'pretrained' or 'random'")
        if self.batch_size < 1 or self.crop < 1 or self.resize < self.crop:
            raise ExtractorError("invalid batch/resize/crop settings")

    @property
    def feature_width(self) -> int:
        return BACKBONE_WIDTHS[self.backbone]


class _PenultimateResNet(nn.Module):
    def __init__(self, net):
        super().__init__()
        self.net = net

    def forward(self, x):
        n = self.net
        x = n.conv1(x)
        x = n.bn1(x)
        x = n.relu(x)
        x = n.maxpool(x)
        x = n.layer1(x)
        x = n.layer2(x)
        x = n.layer3(x)
        x = n.layer4(x)
        x = n.avgpool(x)
        return torch.flatten(x, 1)


class _PenultimateAlexNet(nn.Module):
    def __init__(self, net):
        super().__init__()
        self.net = net

    def forward(self, x):
        n = self.net
        x = n.features(x)
        x = n.avgpool(x)
        x = torch.flatten(x, 1)
        return n.classifier[:-1](x)  # stop before the final classification layer


def load_backbone(cfg: ExtractorConfig) -> nn.Module:
    """Build the frozen feature extractor in inference mode."""
    from torchvision import models

    if cfg.weights == WEIGHTS_RANDOM:
        torch.manual_seed(cfg.seed)
        weights = None
    else:
        weights = (
            models.ResNet18_Weights.IMAGENET1K_V1
            if cfg.backbone == "resnet18"
            else models.AlexNet_Weights.IMAGENET1K_V1
        )

    try:
        if cfg.backbone == "resnet18":
            net = models.resnet18(weights=weights)
            model = _PenultimateResNet(net)
        else:
            net = models.alexnet(weights=weights)
            model = _PenultimateAlexNet(net)
    except Exception as e:  # torch hub surfaces URL errors in several shapes
        raise WeightsUnavailable(
            f"could not obtain pretrained weights for {cfg.backbone}: {e}"
        ) from e

    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def preprocess(cfg: ExtractorConfig):
    """Grayscale-aware ImageNet preprocessing.

    Resize the shorter side, center-crop, replicate the gray channel to three
    and apply the standard ImageNet normalization.
    """
    from torchvision import transforms

    return transforms.Compose(
        [
            transforms.Grayscale(num_output_channels=1),
            transforms.Resize(cfg.resize),
            transforms.CenterCrop(cfg.crop),
            transforms.ToTensor(),
            transforms.Lambda(lambda t: t.repeat(3, 1, 1)),
            transforms.Normalize(
                mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]
            ),
        ]
    )
