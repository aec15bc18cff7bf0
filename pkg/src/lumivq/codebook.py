"""Discrete latent codebook: nearest-neighbor quantization and VQ losses.

Quantization replaces each spatial latent vector by its nearest code under
squared Euclidean distance, with a deterministic lowest-index tie-break.
The returned straight-through tensor forwards the quantized values while
passing gradients to the encoder unchanged; codebook gradients flow only
through the loss terms, which therefore take the raw code vectors.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
from torch import Tensor, nn

from .errors import DataError


class Quantized(NamedTuple):
    straight_through: Tensor  # decoder input: values of `codes`, gradient of input
    codes: Tensor             # raw embedded vectors (differentiable w.r.t. codebook)
    indices: Tensor           # (B, h, w) chosen code per position


class Codebook(nn.Module):
    """K x n_z table of latent codes with usage diagnostics."""

    def __init__(self, num_codes: int, dim: int):
        super().__init__()
        if num_codes < 2:
            raise DataError(f"codebook needs at least 2 codes, got {num_codes}")
        self.num_codes = num_codes
        self.dim = dim
        codes = torch.empty(num_codes, dim)
        nn.init.uniform_(codes, -1.0 / num_codes, 1.0 / num_codes)
        self.codes = nn.Parameter(codes)
        self.register_buffer("usage_counts", torch.zeros(num_codes, dtype=torch.int64))

    def reset_usage(self) -> None:
        self.usage_counts.zero_()

    def usage_entropy(self) -> float:
        """Shannon entropy (nats) of the code usage distribution."""
        counts = self.usage_counts.double()
        total = counts.sum()
        if total == 0:
            return 0.0
        p = counts[counts > 0] / total
        return float(-(p * p.log()).sum())

    def lookup(self, indices: Tensor) -> Tensor:
        """Embed an index map (B, h, w) as (B, dim, h, w) code vectors."""
        emb = self.codes[indices]            # (B, h, w, dim)
        return emb.permute(0, 3, 1, 2)


def nearest_code_indices(flat: Tensor, codes: Tensor) -> Tensor:
    """Index of the nearest code per row, lowest index winning exact ties.

    Distances use the expanded form |a|^2 - 2 a.z + |z|^2 with tiny
    negatives clamped to zero.
    """
    d = (
        flat.pow(2).sum(dim=1, keepdim=True)
        - 2.0 * flat @ codes.t()
        + codes.pow(2).sum(dim=1)
    ).clamp_min(0.0)
    dmin = d.min(dim=1, keepdim=True).values
    ranks = torch.arange(codes.shape[0], device=flat.device)
    # lowest index among exact minima, independent of argmin backend quirks
    return torch.where(d == dmin, ranks, codes.shape[0]).min(dim=1).values


def quantize(feat: Tensor, codebook: Codebook, count_usage: bool = True) -> Quantized:
    """Quantize (B, n_z, h, w) features against the codebook."""
    if feat.ndim != 4 or feat.shape[1] != codebook.dim:
        raise DataError(
            f"expected (B, {codebook.dim}, h, w) features, got {tuple(feat.shape)}"
        )
    b, c, h, w = feat.shape
    flat = feat.permute(0, 2, 3, 1).reshape(-1, c)
    with torch.no_grad():
        indices = nearest_code_indices(flat, codebook.codes).view(b, h, w)
        if count_usage:
            codebook.usage_counts += torch.bincount(
                indices.reshape(-1), minlength=codebook.num_codes
            )
    codes = codebook.lookup(indices)
    straight_through = feat + (codes - feat).detach()
    return Quantized(straight_through, codes, indices)


def vq_loss(z_hat: Tensor, z_q: Tensor, recon: Tensor, target: Tensor, beta: float = 0.25) -> Tensor:
    """Pretraining objective: l1 reconstruction + codebook + commitment terms.

    ``z_q`` must be the raw code vectors (``Quantized.codes``) so the
    codebook term carries gradients into the code table.
    """
    if z_hat.shape != z_q.shape:
        raise DataError(f"latent shapes differ: {tuple(z_hat.shape)} vs {tuple(z_q.shape)}")
    if recon.shape != target.shape:
        raise DataError(f"image shapes differ: {tuple(recon.shape)} vs {tuple(target.shape)}")
    recon_term = (target - recon).abs().mean()
    codebook_term = (z_hat.detach() - z_q).pow(2).mean()
    commit_term = (z_hat - z_q.detach()).pow(2).mean()
    return recon_term + codebook_term + beta * commit_term


def codebook_match_loss(z_vq_low: Tensor, z_gt: Tensor, beta: float = 0.25) -> Tensor:
    """Alignment between quantized low-light features and ground-truth features."""
    if z_vq_low.shape != z_gt.shape:
        raise DataError(
            f"feature shapes differ: {tuple(z_vq_low.shape)} vs {tuple(z_gt.shape)}"
        )
    pull = (z_vq_low - z_gt.detach()).pow(2).mean()
    anchor = (z_vq_low.detach() - z_gt).pow(2).mean()
    return pull + beta * anchor
