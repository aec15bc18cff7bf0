"""Pixel-space interventions that manufacture contrastive negatives.

Three parallel edits of the low-light input: a luma gain, a chroma gain
about the neutral point, and a spectral fusion that mixes the amplitude of
both while keeping the phase of the luma-edited image. The gains and the
fusion weight are learnable; they are trained through the negative branches
of the contrastive metric, so the edits stay informative rather than
collapsing to the identity.

All image functions accept either an :class:`~lumivq.imagecore.Image` or a
channel-last tensor with arbitrary leading batch dimensions, and are
differentiable with respect to both pixels and parameters.
"""

from __future__ import annotations

import math
from collections.abc import Sequence

import torch
from torch import Tensor, nn

from .contrast import contrastive_loss
from .errors import DataError
from .imagecore import (
    Colorspace,
    Image,
    CHROMA_OFFSET,
    inverse_spectrum_t,
    rgb_to_ycrcb_t,
    spectrum_t,
    ycrcb_to_rgb_t,
)

DEFAULT_TAU = 10.0


def _softplus_inverse(y: float) -> float:
    return math.log(math.expm1(y))


class PixelInterventionParams(nn.Module):
    """Learnable gains for the three pixel-space interventions.

    The luma and chroma gains are kept positive through a softplus
    reparameterization; the fusion weight lives in (0, 1) via a sigmoid.
    The luma gain starts at 1.5 so the first intervention already brightens
    instead of sitting at the degenerate identity.
    """

    def __init__(self, luma_gain_init: float = 1.5, chroma_gain_init: float = 1.0):
        super().__init__()
        self.raw_luma = nn.Parameter(torch.tensor(_softplus_inverse(luma_gain_init)))
        self.raw_chroma = nn.Parameter(
            torch.full((2,), _softplus_inverse(chroma_gain_init))
        )
        self.raw_fusion = nn.Parameter(torch.tensor(0.0))  # sigmoid(0) = 0.5

    @property
    def luma_gain(self) -> Tensor:
        return torch.nn.functional.softplus(self.raw_luma)

    @property
    def chroma_gain(self) -> Tensor:
        return torch.nn.functional.softplus(self.raw_chroma)

    @property
    def fusion_weight(self) -> Tensor:
        return torch.sigmoid(self.raw_fusion)


def _unwrap_rgb(img):
    if isinstance(img, Image):
        if img.colorspace is not Colorspace.RGB:
            raise DataError(f"expected RGB input, got {img.colorspace}")
        return img.data, lambda t: Image(t, Colorspace.RGB)
    return img, lambda t: t


def brightness_intervene(img, luma_gain) -> Image | Tensor:
    """Scale the luma channel by ``luma_gain``, chroma untouched, clamp at RGB."""
    rgb, rewrap = _unwrap_rgb(img)
    y, cr, cb = rgb_to_ycrcb_t(rgb).unbind(-1)
    edited = torch.stack((y * luma_gain, cr, cb), dim=-1)
    return rewrap(ycrcb_to_rgb_t(edited))


def color_intervene(img, chroma_gain) -> Image | Tensor:
    """Scale both chroma channels about the neutral 0.5, luma untouched."""
    rgb, rewrap = _unwrap_rgb(img)
    y, cr, cb = rgb_to_ycrcb_t(rgb).unbind(-1)
    gain = torch.as_tensor(chroma_gain, dtype=rgb.dtype, device=rgb.device) \
        if not isinstance(chroma_gain, Tensor) else chroma_gain
    cr = CHROMA_OFFSET + (cr - CHROMA_OFFSET) * gain[0]
    cb = CHROMA_OFFSET + (cb - CHROMA_OFFSET) * gain[1]
    return rewrap(ycrcb_to_rgb_t(torch.stack((y, cr, cb), dim=-1)))


def frequency_fuse(img_b, img_c, fusion_weight) -> Image | Tensor:
    """Blend the amplitude spectra, keep the phase of the first image.

    Output is the inverse DFT of the fused spectrum and is NOT clamped:
    the fusion may overshoot [0, 1] and feeds an encoder, not a display.
    """
    xb, rewrap = _unwrap_rgb(img_b)
    xc, _ = _unwrap_rgb(img_c)
    if xb.shape != xc.shape:
        raise DataError(f"image shapes differ: {tuple(xb.shape)} vs {tuple(xc.shape)}")
    amp_b, phase_b = spectrum_t(xb)
    amp_c, _ = spectrum_t(xc)
    fused = fusion_weight * amp_b + (1.0 - fusion_weight) * amp_c
    return rewrap(inverse_spectrum_t(fused, phase_b))


def intervention_images(low: Tensor, params: PixelInterventionParams) -> tuple[Tensor, Tensor, Tensor]:
    """The three negative-sample images for a channel-last RGB batch."""
    img_b = brightness_intervene(low, params.luma_gain)
    img_c = color_intervene(low, params.chroma_gain)
    img_f = frequency_fuse(img_b, img_c, params.fusion_weight)
    return img_b, img_c, img_f


def pixel_contrast_loss(
    anchor: Tensor,
    positive: Tensor,
    negatives: Sequence[Tensor],
    tau: float = DEFAULT_TAU,
) -> Tensor:
    """Align the encoded low-light anchor with the ground-truth positive
    against the encoded intervention negatives."""
    return contrastive_loss(anchor, positive, negatives, tau)
