"""Frozen feature extractors for perceptual and semantic-consistency distances.

Desk scale cannot assume downloadable pretrained weights, so the default
extractor is a small fixed-weight convolutional pyramid whose weights come
from a published seed. The contract the losses rely on, a distance in a
frozen feature space, is preserved; a pretrained torchvision VGG16 can be
swapped in where its weights are available locally.
"""

from __future__ import annotations

import logging

import torch
from torch import Tensor, nn

logger = logging.getLogger(__name__)

SURROGATE_SEED = 901

# Feature-map layers contributing to the distance (after these layer indices).
DEFAULT_TAPS = (1, 3)


class FrozenFeatureExtractor(nn.Module):
    """Four fixed-weight conv layers with LeakyReLU, tapped at two depths.

    Weights are drawn once from a seeded generator and never trained;
    gradients still flow through to the inputs.
    """

    def __init__(
        self,
        in_channels: int = 3,
        widths: tuple[int, ...] = (16, 32, 32, 64),
        strides: tuple[int, ...] = (2, 2, 1, 1),
        taps: tuple[int, ...] = DEFAULT_TAPS,
        seed: int = SURROGATE_SEED,
    ):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        layers = []
        prev = in_channels
        for width, stride in zip(widths, strides):
            conv = nn.Conv2d(prev, width, 3, stride=stride, padding=1)
            nn.init.kaiming_normal_(conv.weight, a=0.2, generator=gen)
            nn.init.zeros_(conv.bias)
            layers.append(conv)
            prev = width
        self.layers = nn.ModuleList(layers)
        self.taps = taps
        self.requires_grad_(False)

    def forward(self, x: Tensor) -> list[Tensor]:
        feats = []
        h = x
        for i, conv in enumerate(self.layers):
            h = torch.nn.functional.leaky_relu(conv(h), 0.2)
            if i in self.taps:
                feats.append(h)
        return feats


class LatentFeatureExtractor(nn.Module):
    """Frozen extractor for latent maps: fixed seeded 1x1 projection to three
    channels, then the shared frozen pyramid with unit strides (latent maps
    are already small)."""

    def __init__(self, channels: int, seed: int = SURROGATE_SEED):
        super().__init__()
        gen = torch.Generator().manual_seed(seed + 1)
        self.proj = nn.Conv2d(channels, 3, 1)
        nn.init.kaiming_normal_(self.proj.weight, generator=gen)
        nn.init.zeros_(self.proj.bias)
        self.pyramid = FrozenFeatureExtractor(strides=(1, 1, 1, 1), seed=seed)
        self.requires_grad_(False)

    def forward(self, x: Tensor) -> list[Tensor]:
        return self.pyramid(self.proj(x))


def make_image_backbone(kind: str = "surrogate") -> nn.Module:
    """Feature backbone for image-space perceptual distance.

    ``vgg16`` uses torchvision's pretrained network when its weights are
    available locally and falls back to the seeded surrogate otherwise
    (flagged in the logs, never an error).
    """
    if kind == "surrogate":
        return FrozenFeatureExtractor()
    if kind == "vgg16":
        try:
            from torchvision import models  # local import: optional path

            vgg = models.vgg16(weights=models.VGG16_Weights.IMAGENET1K_V1)
            return _Vgg16Taps(vgg.features)
        except Exception as exc:  # weights unavailable offline
            logger.warning("vgg16 backbone unavailable (%s); using seeded surrogate", exc)
            return FrozenFeatureExtractor()
    raise ValueError(f"unknown perceptual backbone kind: {kind}")


class _Vgg16Taps(nn.Module):
    """Two mid-depth VGG16 feature stages (relu2_2, relu3_3), frozen."""

    def __init__(self, features: nn.Module):
        super().__init__()
        self.slice1 = nn.Sequential(*list(features.children())[:9])
        self.slice2 = nn.Sequential(*list(features.children())[9:16])
        self.requires_grad_(False)

    def forward(self, x: Tensor) -> list[Tensor]:
        f1 = self.slice1(x)
        f2 = self.slice2(f1)
        return [f1, f2]
