"""Cosine-similarity InfoNCE shared by the pixel- and feature-level metrics."""

from __future__ import annotations

from collections.abc import Sequence

import torch
from torch import Tensor

from .errors import DataError


def flat_cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity over each sample's fully flattened feature vector.

    Zero-norm vectors get similarity 0 (the eps clamp removes the 0/0).
    """
    if a.shape != b.shape:
        raise DataError(f"feature shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return torch.nn.functional.cosine_similarity(
        a.reshape(a.shape[0], -1), b.reshape(b.shape[0], -1), dim=1, eps=1e-8
    )


def contrastive_loss(
    anchor: Tensor, positive: Tensor, negatives: Sequence[Tensor], tau: float
) -> Tensor:
    """-log softmax of the positive logit, batch-averaged and LSE-stabilized.

    Logits are tau * cosine(anchor, candidate) with the positive first.
    """
    if not negatives:
        raise DataError("at least one negative sample is required")
    pos = flat_cosine(anchor, positive)
    logits = [tau * pos] + [tau * flat_cosine(anchor, neg) for neg in negatives]
    stacked = torch.stack(logits, dim=1)  # (B, 1 + N)
    return (torch.logsumexp(stacked, dim=1) - stacked[:, 0]).mean()
