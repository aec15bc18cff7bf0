"""Feature-space intervention: sensitivity gating, perturbation, and its losses.

A sensitivity map combines an explicit difference signal (how far the
anchor drifted under the pixel-space edits) with a learned estimate; a
binary mask thresholds it with a learnable cutoff, and a small network
perturbs the anchor inside the mask to produce the feature-level negative.
A semantic-consistency penalty keeps the perturbation from destroying
content, measured in a frozen feature space.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
from torch import Tensor, nn

from .contrast import contrastive_loss
from .errors import DataError

EPSILON = 1e-8
DEFAULT_CONSISTENCY_WEIGHT = 0.5
THRESHOLD_MIN, THRESHOLD_MAX = 0.05, 0.95
SURROGATE_TEMPERATURE = 10.0


class SensitivityBundle(NamedTuple):
    perturbed_neg: Tensor   # anchor * mask * perturbation
    sensitivity: Tensor     # combined sensitivity map, >= 0
    mask: Tensor            # exact binary, straight-through backward
    perturbation: Tensor


def _per_sample_max(x: Tensor) -> Tensor:
    if x.ndim == 4:
        return x.amax(dim=(1, 2, 3), keepdim=True)
    return x.max()


def sensitivity_difference(anchor: Tensor, neg_b: Tensor, neg_c: Tensor, eps: float = EPSILON) -> Tensor:
    """Normalized drift of the anchor under the luma and chroma edits.

    The max is taken over the whole tensor per sample, so the result lies
    in [0, 1) elementwise.
    """
    if anchor.shape != neg_b.shape or anchor.shape != neg_c.shape:
        raise DataError("sensitivity inputs must share one shape")
    drift = (anchor - neg_b).abs() + (anchor - neg_c).abs()
    return drift / (_per_sample_max(drift) + eps)


class SensitivityGate(nn.Module):
    """Selects illumination-sensitive feature sites and perturbs them.

    The hard threshold is non-differentiable, so the mask backward uses a
    sigmoid surrogate (temperature 10) that also gives the threshold its
    gradient; the forward mask stays exactly binary.
    """

    def __init__(
        self,
        channels: int,
        hidden: int | None = None,
        threshold_init: float = 0.5,
        surrogate_temperature: float = SURROGATE_TEMPERATURE,
    ):
        super().__init__()
        hidden = hidden or channels
        self.threshold = nn.Parameter(torch.tensor(float(threshold_init)))
        self.surrogate_temperature = surrogate_temperature
        self.estimator = nn.Sequential(
            nn.Conv2d(4 * channels, hidden, 3, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(hidden, channels, 3, padding=1),
        )
        self.perturber = nn.Sequential(
            nn.Conv2d(4 * channels, hidden, 3, padding=1),
            nn.BatchNorm2d(hidden),
            nn.LeakyReLU(0.2),
            nn.Conv2d(hidden, channels, 3, padding=1),
        )

    def sensitivity_learned(self, anchor, neg_b, neg_c, neg_f) -> Tensor:
        stacked = torch.cat((anchor, neg_b, neg_c, neg_f), dim=1)
        return torch.sigmoid(self.estimator(stacked))

    def binary_mask(self, sensitivity: Tensor) -> Tensor:
        hard = (sensitivity > self.threshold).to(sensitivity.dtype)
        soft = torch.sigmoid(
            self.surrogate_temperature * (sensitivity - self.threshold)
        )
        return soft + (hard - soft).detach()

    def forward(self, anchor, neg_b, neg_c, neg_f) -> SensitivityBundle:
        s_learned = self.sensitivity_learned(anchor, neg_b, neg_c, neg_f)
        s_diff = sensitivity_difference(anchor, neg_b, neg_c)
        sensitivity = s_learned + s_diff
        mask = self.binary_mask(sensitivity)
        stacked = torch.cat((anchor, neg_b, neg_c, neg_f), dim=1)
        perturbation = self.perturber(stacked)
        perturbed_neg = anchor * mask * perturbation
        return SensitivityBundle(perturbed_neg, sensitivity, mask, perturbation)

    def clamp_threshold(self) -> None:
        """Keep the learnable cutoff inside its working range after updates."""
        with torch.no_grad():
            self.threshold.clamp_(THRESHOLD_MIN, THRESHOLD_MAX)


def semantic_consistency_loss(anchor: Tensor, perturbed_neg: Tensor, extractor) -> Tensor:
    """Mean absolute shift between frozen-extractor features of the anchor
    and its perturbed counterpart, averaged over tapped layers."""
    feats_a = extractor(anchor)
    feats_p = extractor(perturbed_neg)
    shifts = [(fa - fp).abs().mean() for fa, fp in zip(feats_a, feats_p)]
    return torch.stack(shifts).mean()


def feature_contrast_loss(
    anchor: Tensor, positive: Tensor, perturbed_neg: Tensor, tau: float
) -> Tensor:
    """Two-candidate contrast: ground-truth positive vs the perturbed negative."""
    return contrastive_loss(anchor, positive, [perturbed_neg], tau)


def feature_intervention_loss(
    anchor: Tensor,
    positive: Tensor,
    perturbed_neg: Tensor,
    extractor,
    tau: float,
    consistency_weight: float = DEFAULT_CONSISTENCY_WEIGHT,
) -> tuple[Tensor, Tensor, Tensor]:
    """Contrastive term plus weighted semantic-consistency term.

    Returns (total, contrast, consistency) so callers can log components.
    """
    contrast = feature_contrast_loss(anchor, positive, perturbed_neg, tau)
    consistency = semantic_consistency_loss(anchor, perturbed_neg, extractor)
    return contrast + consistency_weight * consistency, contrast, consistency
